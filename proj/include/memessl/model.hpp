#pragma once

// Visual-BERT-style fusion transformer at desk scale.
//
// Sequence layout per record: [CLS] text tokens (padded to max_text_len)
// [SEP] K projected image regions. Text positions embed token + position +
// segment 0; image positions embed (features * W_v + b_v) + position +
// segment 1. Embedding layer norm, then n_layers post-LN encoder blocks
// (multi-head self-attention, GELU feed-forward), then a linear two-class
// head on the [CLS] state. Dropout sits on the normalized embedding sum and
// on the feed-forward output.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memessl/features.hpp"
#include "memessl/tensor.hpp"
#include "memessl/tokenizer.hpp"

namespace memessl {

// Which segments the [CLS] token may attend to. text_only/image_only are the
// unimodal ablations: the other segment is masked out of attention.
enum class Modality { both, text_only, image_only };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

struct FusionConfig {
  int vocab_size = 72;  // including the four special tokens
  int max_text_len = 8;
  int regions = 4;      // K
  int region_dim = 16;  // D_v
  int d_model = 16;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 32;
  double dropout_rate = 0.10;
  int n_classes = 2;
  Modality modality = Modality::both;

  int seq_len() const { return 2 + max_text_len + regions; }
  int head_dim() const { return d_model / n_heads; }
  int image_offset() const { return 2 + max_text_len; }
  void validate() const;
  bool operator==(const FusionConfig&) const = default;
};

struct LayerParams {
  // No key bias: it shifts every score of a softmax row equally and so
  // never affects the output.
  Matrix wq, bq, wk, wv, bv, wo, bo;
  Matrix ln1_g, ln1_b;
  Matrix w1, b1, w2, b2;
  Matrix ln2_g, ln2_b;
  bool operator==(const LayerParams&) const = default;
};

struct FusionParams {
  Matrix tok_emb;   // vocab x d
  Matrix pos_emb;   // seq_len x d
  Matrix seg_emb;   // 2 x d
  Matrix vis_w;     // D_v x d
  Matrix vis_b;     // 1 x d
  Matrix emb_ln_g, emb_ln_b;
  std::vector<LayerParams> layers;
  Matrix cls_w;     // d x n_classes
  Matrix cls_b;     // 1 x n_classes

  static FusionParams zeros(const FusionConfig& cfg);
  // Symmetric uniform +-1/sqrt(fan_in); layer-norm scale 1, offset 0.
  static FusionParams init(const FusionConfig& cfg, std::uint64_t seed);

  // f(name, tensor, is_head). The head is the classifier; everything else is
  // the backbone. Visiting order is stable and defines the checkpoint order.
  template <typename F>
  void visit(F&& f);
  template <typename F>
  void visit(F&& f) const;

  std::size_t num_parameters() const;
  bool all_finite() const;
  bool operator==(const FusionParams&) const = default;
};

// Padded model inputs for n records.
struct Batch {
  int n = 0;
  int seq_len = 0;
  std::vector<int> tokens;           // n x seq_len; image positions hold kPad
  std::vector<std::uint8_t> mask;    // n x seq_len; 1 = attendable
  std::vector<double> regions;       // n x K x D_v
  std::vector<int> labels;           // empty or size n
  std::vector<std::int64_t> ids;

  bool has_labels() const { return !labels.empty(); }
};

// Throws Error on a record without features, or when labels are required and
// a record is unlabeled.
Batch make_batch(const std::vector<const MemeRecord*>& records, const FeatureStore& features, const Vocabulary& vocab,
                 const FusionConfig& cfg, bool require_labels);
Batch make_batch(const RecordSet& records, const FeatureStore& features, const Vocabulary& vocab,
                 const FusionConfig& cfg, bool require_labels);

enum class Mode { train, eval };

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, seq x seq
  Matrix attn_concat, attn_out;
  Matrix ln1_xhat;
  std::vector<double> ln1_rstd;
  Matrix h1;
  Matrix ff_pre, ff_act, ff_out;
  Matrix ff_drop;  // dropout multipliers (empty in eval)
  Matrix ln2_xhat;
  std::vector<double> ln2_rstd;
  Matrix out;
};

struct RecordCache {
  Matrix emb_sum;
  Matrix emb_xhat;
  std::vector<double> emb_rstd;
  Matrix emb_drop;  // dropout multipliers (empty in eval)
  Matrix emb_out;
  std::vector<LayerCache> layers;
  std::vector<double> logits;
};

struct ForwardResult {
  Matrix logits;  // n x n_classes
  std::vector<RecordCache> cache;
};

// Throws Error on shape mismatch. Eval mode is deterministic and applies no
// dropout; train mode samples inverted-dropout masks from seed.
ForwardResult forward(const Batch& batch, const FusionParams& params, const FusionConfig& cfg, Mode mode,
                      std::uint64_t seed);

struct LossGrad {
  double loss = 0.0;
  FusionParams grads;
};

// Mean cross-entropy and its exact gradient under the dropout masks drawn
// from seed (train mode).
LossGrad loss_and_grad(const Batch& batch, const FusionParams& params, const FusionConfig& cfg, std::uint64_t seed);
// Same, with an explicit mode (eval gives the dropout-free objective).
LossGrad loss_and_grad(const Batch& batch, const FusionParams& params, const FusionConfig& cfg, Mode mode,
                       std::uint64_t seed);

double mean_cross_entropy(const Matrix& logits, const std::vector<int>& labels);
std::vector<double> softmax_row(std::span<const double> logits);

// P(label = 1) per row of the batch, eval mode.
std::vector<double> predict_proba(const Batch& batch, const FusionParams& params, const FusionConfig& cfg);
std::vector<double> predict_proba(const RecordSet& records, const FeatureStore& features, const Vocabulary& vocab,
                                  const FusionParams& params, const FusionConfig& cfg);

// --- FusionParams::visit ---------------------------------------------------

namespace detail {
template <typename P, typename F>
void visit_params(P& p, F&& f) {
  f("embeddings.token", p.tok_emb, false);
  f("embeddings.position", p.pos_emb, false);
  f("embeddings.segment", p.seg_emb, false);
  f("visual.proj.weight", p.vis_w, false);
  f("visual.proj.bias", p.vis_b, false);
  f("embeddings.ln.gamma", p.emb_ln_g, false);
  f("embeddings.ln.beta", p.emb_ln_b, false);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    f(pre + "attn.query.weight", L.wq, false);
    f(pre + "attn.query.bias", L.bq, false);
    f(pre + "attn.key.weight", L.wk, false);
    f(pre + "attn.value.weight", L.wv, false);
    f(pre + "attn.value.bias", L.bv, false);
    f(pre + "attn.output.weight", L.wo, false);
    f(pre + "attn.output.bias", L.bo, false);
    f(pre + "attn.ln.gamma", L.ln1_g, false);
    f(pre + "attn.ln.beta", L.ln1_b, false);
    f(pre + "ffn.in.weight", L.w1, false);
    f(pre + "ffn.in.bias", L.b1, false);
    f(pre + "ffn.out.weight", L.w2, false);
    f(pre + "ffn.out.bias", L.b2, false);
    f(pre + "ffn.ln.gamma", L.ln2_g, false);
    f(pre + "ffn.ln.beta", L.ln2_b, false);
  }
  f("classifier.weight", p.cls_w, true);
  f("classifier.bias", p.cls_b, true);
}
}  // namespace detail

template <typename F>
void FusionParams::visit(F&& f) {
  detail::visit_params(*this, std::forward<F>(f));
}

template <typename F>
void FusionParams::visit(F&& f) const {
  detail::visit_params(*this, std::forward<F>(f));
}

}  // namespace memessl
