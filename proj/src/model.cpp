#include "memessl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "memessl/util.hpp"

namespace memessl {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::both: return "both";
    case Modality::text_only: return "text_only";
    case Modality::image_only: return "image_only";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  if (s == "both") return Modality::both;
  if (s == "text_only") return Modality::text_only;
  if (s == "image_only") return Modality::image_only;
  throw Error("unknown modality: " + std::string(s));
}

void FusionConfig::validate() const {
  if (vocab_size <= Vocabulary::kNumSpecial) throw Error("fusion config: vocab_size too small");
  if (max_text_len < 0 || regions <= 0 || region_dim <= 0 || d_model <= 0 || n_heads <= 0 || n_layers < 0 || d_ff <= 0)
    throw Error("fusion config: dimensions must be positive");
  if (d_model % n_heads != 0) throw Error("fusion config: d_model must be divisible by n_heads");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("fusion config: dropout_rate must lie in [0,1)");
  if (n_classes != 2) throw Error("fusion config: n_classes must be 2");
}

// --- parameters ------------------------------------------------------------

FusionParams FusionParams::zeros(const FusionConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model;
  FusionParams p;
  p.tok_emb = Matrix(cfg.vocab_size, d);
  p.pos_emb = Matrix(cfg.seq_len(), d);
  p.seg_emb = Matrix(2, d);
  p.vis_w = Matrix(cfg.region_dim, d);
  p.vis_b = Matrix(1, d);
  p.emb_ln_g = Matrix(1, d);
  p.emb_ln_b = Matrix(1, d);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& L : p.layers) {
    L.wq = Matrix(d, d);
    L.bq = Matrix(1, d);
    L.wk = Matrix(d, d);
    L.wv = Matrix(d, d);
    L.bv = Matrix(1, d);
    L.wo = Matrix(d, d);
    L.bo = Matrix(1, d);
    L.ln1_g = Matrix(1, d);
    L.ln1_b = Matrix(1, d);
    L.w1 = Matrix(d, cfg.d_ff);
    L.b1 = Matrix(1, cfg.d_ff);
    L.w2 = Matrix(cfg.d_ff, d);
    L.b2 = Matrix(1, d);
    L.ln2_g = Matrix(1, d);
    L.ln2_b = Matrix(1, d);
  }
  p.cls_w = Matrix(d, cfg.n_classes);
  p.cls_b = Matrix(1, cfg.n_classes);
  return p;
}

FusionParams FusionParams::init(const FusionConfig& cfg, std::uint64_t seed) {
  FusionParams p = zeros(cfg);
  Rng rng(seed);
  auto fill = [&rng](Matrix& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : m.data) v = rng.uniform(-bound, bound);
  };
  const int d = cfg.d_model;
  fill(p.tok_emb, d);
  fill(p.pos_emb, d);
  fill(p.seg_emb, d);
  fill(p.vis_w, cfg.region_dim);
  fill(p.vis_b, cfg.region_dim);
  p.emb_ln_g.fill(1.0);
  for (auto& L : p.layers) {
    for (Matrix* m : {&L.wq, &L.bq, &L.wk, &L.wv, &L.bv, &L.wo, &L.bo, &L.w1, &L.b1}) fill(*m, d);
    fill(L.w2, cfg.d_ff);
    fill(L.b2, cfg.d_ff);
    L.ln1_g.fill(1.0);
    L.ln2_g.fill(1.0);
  }
  fill(p.cls_w, d);
  fill(p.cls_b, d);
  return p;
}

std::size_t FusionParams::num_parameters() const {
  std::size_t n = 0;
  visit([&n](const std::string&, const Matrix& m, bool) { n += m.size(); });
  return n;
}

bool FusionParams::all_finite() const {
  bool ok = true;
  visit([&ok](const std::string&, const Matrix& m, bool) {
    for (double v : m.data)
      if (!std::isfinite(v)) ok = false;
  });
  return ok;
}

// --- batching --------------------------------------------------------------

Batch make_batch(const std::vector<const MemeRecord*>& records, const FeatureStore& features, const Vocabulary& vocab,
                 const FusionConfig& cfg, bool require_labels) {
  cfg.validate();
  if (vocab.size() > cfg.vocab_size)
    throw Error("batch: vocabulary of " + std::to_string(vocab.size()) + " exceeds model vocab_size " +
                std::to_string(cfg.vocab_size));
  Batch b;
  b.n = static_cast<int>(records.size());
  b.seq_len = cfg.seq_len();
  const auto L = static_cast<std::size_t>(b.seq_len);
  const auto kd = static_cast<std::size_t>(cfg.regions) * cfg.region_dim;
  b.tokens.assign(records.size() * L, Vocabulary::kPad);
  b.mask.assign(records.size() * L, 0);
  b.regions.assign(records.size() * kd, 0.0);
  b.ids.reserve(records.size());
  if (require_labels) b.labels.reserve(records.size());
  const int sep = 1 + cfg.max_text_len;
  const bool text_on = cfg.modality != Modality::image_only;
  const bool image_on = cfg.modality != Modality::text_only;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const MemeRecord& r = *records[i];
    b.ids.push_back(r.id);
    if (require_labels) {
      if (!r.label) throw Error("batch: record " + std::to_string(r.id) + " has no label");
      b.labels.push_back(*r.label);
    }
    int* tok = b.tokens.data() + i * L;
    std::uint8_t* m = b.mask.data() + i * L;
    tok[0] = Vocabulary::kCls;
    m[0] = 1;
    const auto ids = vocab.encode(r.text, cfg.max_text_len);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      tok[1 + j] = ids[j];
      m[1 + j] = text_on ? 1 : 0;
    }
    tok[sep] = Vocabulary::kSep;
    m[sep] = 1;
    const RegionFeatures& f = features.get(r.id);
    if (f.regions != cfg.regions || f.dim != cfg.region_dim)
      throw Error("batch: features of record " + std::to_string(r.id) + " are " + std::to_string(f.regions) + "x" +
                  std::to_string(f.dim) + ", model expects " + std::to_string(cfg.regions) + "x" +
                  std::to_string(cfg.region_dim));
    double* dst = b.regions.data() + i * kd;
    for (std::size_t q = 0; q < kd; ++q) dst[q] = f.values[q];
    for (int k = 0; k < cfg.regions; ++k) m[cfg.image_offset() + k] = image_on ? 1 : 0;
  }
  return b;
}

Batch make_batch(const RecordSet& records, const FeatureStore& features, const Vocabulary& vocab,
                 const FusionConfig& cfg, bool require_labels) {
  std::vector<const MemeRecord*> ptrs;
  ptrs.reserve(records.size());
  for (const auto& r : records) ptrs.push_back(&r);
  return make_batch(ptrs, features, vocab, cfg, require_labels);
}

// --- building blocks ---------------------------------------------------------

namespace {

void check_batch(const Batch& b, const FusionConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(b.n);
  if (b.seq_len != cfg.seq_len() || b.tokens.size() != n * b.seq_len || b.mask.size() != n * b.seq_len ||
      b.regions.size() != n * cfg.regions * cfg.region_dim)
    throw Error("forward: batch shape does not match the model configuration");
  if (!b.labels.empty() && b.labels.size() != n) throw Error("forward: label count does not match batch size");
  for (int t : b.tokens)
    if (t < 0 || t >= cfg.vocab_size) throw Error("forward: token id " + std::to_string(t) + " out of range");
}

void check_params(const FusionParams& p, const FusionConfig& cfg) {
  const FusionParams ref = FusionParams::zeros(cfg);
  std::vector<std::pair<int, int>> shapes;
  ref.visit([&](const std::string&, const Matrix& m, bool) { shapes.emplace_back(m.rows, m.cols); });
  std::size_t i = 0;
  bool ok = p.layers.size() == ref.layers.size();
  if (ok)
    p.visit([&](const std::string&, const Matrix& m, bool) {
      if (i >= shapes.size() || shapes[i] != std::make_pair(m.rows, m.cols) || m.size() != std::size_t(m.rows) * m.cols)
        ok = false;
      ++i;
    });
  if (!ok) throw Error("forward: parameter shapes do not match the model configuration");
}

void layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, Matrix& y, Matrix& xhat, std::vector<double>& rstd) {
  y = Matrix(x.rows, x.cols);
  xhat = Matrix(x.rows, x.cols);
  rstd.assign(static_cast<std::size_t>(x.rows), 0.0);
  const double inv_n = 1.0 / x.cols;
  for (int i = 0; i < x.rows; ++i) {
    auto xr = x.row(i);
    const double mu = kernels::sum(xr) * inv_n;
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var *= inv_n;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[static_cast<std::size_t>(i)] = rs;
    for (int j = 0; j < x.cols; ++j) {
      const double h = (xr[static_cast<std::size_t>(j)] - mu) * rs;
      xhat(i, j) = h;
      y(i, j) = g(0, j) * h + b(0, j);
    }
  }
}

// Returns dx; accumulates dg, db.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const std::vector<double>& rstd, const Matrix& g,
                           Matrix& dg, Matrix& db) {
  Matrix dx(dy.rows, dy.cols);
  const double inv_n = 1.0 / dy.cols;
  std::vector<double> dxhat(static_cast<std::size_t>(dy.cols));
  for (int i = 0; i < dy.rows; ++i) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (int j = 0; j < dy.cols; ++j) {
      const double d = dy(i, j) * g(0, j);
      dxhat[static_cast<std::size_t>(j)] = d;
      dg(0, j) += dy(i, j) * xhat(i, j);
      db(0, j) += dy(i, j);
      mean_d += d;
      mean_dx += d * xhat(i, j);
    }
    mean_d *= inv_n;
    mean_dx *= inv_n;
    const double rs = rstd[static_cast<std::size_t>(i)];
    for (int j = 0; j < dy.cols; ++j) dx(i, j) = rs * (dxhat[static_cast<std::size_t>(j)] - mean_d - xhat(i, j) * mean_dx);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : m.data) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return m;
}

void hadamard_inplace(Matrix& x, const Matrix& m) {
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] *= m.data[i];
}

std::span<const double> head_slice(const Matrix& m, int row, int head, int dh) {
  return m.row(row).subspan(static_cast<std::size_t>(head) * dh, static_cast<std::size_t>(dh));
}
std::span<double> head_slice(Matrix& m, int row, int head, int dh) {
  return m.row(row).subspan(static_cast<std::size_t>(head) * dh, static_cast<std::size_t>(dh));
}

RecordCache forward_record(const Batch& b, int r, const FusionParams& p, const FusionConfig& cfg, bool train,
                           std::uint64_t seed) {
  const int L = b.seq_len, d = cfg.d_model, dh = cfg.head_dim();
  const int img0 = cfg.image_offset();
  const int* tok = b.tokens.data() + static_cast<std::size_t>(r) * L;
  const std::uint8_t* mask = b.mask.data() + static_cast<std::size_t>(r) * L;
  const double* feats = b.regions.data() + static_cast<std::size_t>(r) * cfg.regions * cfg.region_dim;
  const bool use_dropout = train && cfg.dropout_rate > 0.0;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));

  RecordCache c;
  c.emb_sum = Matrix(L, d);
  for (int pos = 0; pos < L; ++pos) {
    auto row = c.emb_sum.row(pos);
    kernels::axpy(1.0, p.pos_emb.row(pos), row);
    if (pos < img0) {
      kernels::axpy(1.0, p.tok_emb.row(tok[pos]), row);
      kernels::axpy(1.0, p.seg_emb.row(0), row);
    } else {
      const double* f = feats + static_cast<std::size_t>(pos - img0) * cfg.region_dim;
      kernels::axpy(1.0, p.vis_b.row(0), row);
      for (int q = 0; q < cfg.region_dim; ++q) kernels::axpy(f[q], p.vis_w.row(q), row);
      kernels::axpy(1.0, p.seg_emb.row(1), row);
    }
  }
  layer_norm(c.emb_sum, p.emb_ln_g, p.emb_ln_b, c.emb_out, c.emb_xhat, c.emb_rstd);
  if (use_dropout) {
    c.emb_drop = dropout_mask(L, d, cfg.dropout_rate, rng);
    hadamard_inplace(c.emb_out, c.emb_drop);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Matrix* h = &c.emb_out;
  c.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams& P = p.layers[l];
    LayerCache& lc = c.layers[l];
    lc.input = *h;
    lc.q = linear(lc.input, P.wq, P.bq);
    lc.k = linear(lc.input, P.wk, nullptr);
    lc.v = linear(lc.input, P.wv, P.bv);
    lc.attn_concat = Matrix(L, d);
    lc.probs.assign(static_cast<std::size_t>(cfg.n_heads), Matrix(L, L));
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      Matrix& P_h = lc.probs[static_cast<std::size_t>(hd)];
      for (int i = 0; i < L; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < L; ++j) {
          if (!mask[j]) continue;
          const double s = kernels::dot(head_slice(lc.q, i, hd, dh), head_slice(lc.k, j, hd, dh)) * scale;
          P_h(i, j) = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (int j = 0; j < L; ++j) {
          if (!mask[j]) continue;
          P_h(i, j) = std::exp(P_h(i, j) - mx);
          z += P_h(i, j);
        }
        auto out = head_slice(lc.attn_concat, i, hd, dh);
        for (int j = 0; j < L; ++j) {
          if (!mask[j]) continue;
          P_h(i, j) /= z;
          kernels::axpy(P_h(i, j), head_slice(lc.v, j, hd, dh), out);
        }
      }
    }
    lc.attn_out = linear(lc.attn_concat, P.wo, P.bo);
    Matrix r1 = lc.input;
    kernels::axpy(1.0, lc.attn_out.data, r1.data);
    layer_norm(r1, P.ln1_g, P.ln1_b, lc.h1, lc.ln1_xhat, lc.ln1_rstd);

    lc.ff_pre = linear(lc.h1, P.w1, P.b1);
    lc.ff_act = Matrix(L, cfg.d_ff);
    for (std::size_t i = 0; i < lc.ff_pre.data.size(); ++i) lc.ff_act.data[i] = gelu(lc.ff_pre.data[i]);
    lc.ff_out = linear(lc.ff_act, P.w2, P.b2);
    if (use_dropout) {
      lc.ff_drop = dropout_mask(L, d, cfg.dropout_rate, rng);
      hadamard_inplace(lc.ff_out, lc.ff_drop);
    }
    Matrix r2 = lc.h1;
    kernels::axpy(1.0, lc.ff_out.data, r2.data);
    layer_norm(r2, P.ln2_g, P.ln2_b, lc.out, lc.ln2_xhat, lc.ln2_rstd);
    h = &lc.out;
  }

  c.logits.assign(static_cast<std::size_t>(cfg.n_classes), 0.0);
  for (int k = 0; k < cfg.n_classes; ++k) {
    double z = p.cls_b(0, k);
    for (int i = 0; i < d; ++i) z += (*h)(0, i) * p.cls_w(i, k);
    c.logits[static_cast<std::size_t>(k)] = z;
  }
  return c;
}

void backward_record(const Batch& b, int r, const FusionParams& p, const FusionConfig& cfg, const RecordCache& c,
                     std::span<const double> dlogits, FusionParams& g) {
  const int L = b.seq_len, d = cfg.d_model, dh = cfg.head_dim();
  const int img0 = cfg.image_offset();
  const int* tok = b.tokens.data() + static_cast<std::size_t>(r) * L;
  const std::uint8_t* mask = b.mask.data() + static_cast<std::size_t>(r) * L;
  const double* feats = b.regions.data() + static_cast<std::size_t>(r) * cfg.regions * cfg.region_dim;
  const Matrix& top = c.layers.empty() ? c.emb_out : c.layers.back().out;

  Matrix dh_mat(L, d);
  for (int k = 0; k < cfg.n_classes; ++k) {
    const double dz = dlogits[static_cast<std::size_t>(k)];
    g.cls_b(0, k) += dz;
    for (int i = 0; i < d; ++i) {
      g.cls_w(i, k) += top(0, i) * dz;
      dh_mat(0, i) += p.cls_w(i, k) * dz;
    }
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    const LayerParams& P = p.layers[l];
    LayerParams& G = g.layers[l];
    const LayerCache& lc = c.layers[l];

    Matrix dr2 = layer_norm_backward(dh_mat, lc.ln2_xhat, lc.ln2_rstd, P.ln2_g, G.ln2_g, G.ln2_b);
    Matrix dh1 = dr2;
    Matrix dff_out = dr2;
    if (!lc.ff_drop.data.empty()) hadamard_inplace(dff_out, lc.ff_drop);
    Matrix dff_act(L, cfg.d_ff);
    linear_backward(lc.ff_act, P.w2, dff_out, &dff_act, G.w2, G.b2);
    for (std::size_t i = 0; i < dff_act.data.size(); ++i) dff_act.data[i] *= gelu_grad(lc.ff_pre.data[i]);
    linear_backward(lc.h1, P.w1, dff_act, &dh1, G.w1, G.b1);

    Matrix dr1 = layer_norm_backward(dh1, lc.ln1_xhat, lc.ln1_rstd, P.ln1_g, G.ln1_g, G.ln1_b);
    Matrix dinput = dr1;
    Matrix dconcat(L, d);
    linear_backward(lc.attn_concat, P.wo, dr1, &dconcat, G.wo, G.bo);

    Matrix dq(L, d), dk(L, d), dv(L, d);
    std::vector<double> dp(static_cast<std::size_t>(L));
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
      const Matrix& P_h = lc.probs[static_cast<std::size_t>(hd)];
      for (int i = 0; i < L; ++i) {
        auto dout = head_slice(dconcat, i, hd, dh);
        double weighted = 0.0;
        for (int j = 0; j < L; ++j) {
          if (!mask[j]) continue;
          dp[static_cast<std::size_t>(j)] = kernels::dot(dout, head_slice(lc.v, j, hd, dh));
          kernels::axpy(P_h(i, j), dout, head_slice(dv, j, hd, dh));
          weighted += P_h(i, j) * dp[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < L; ++j) {
          if (!mask[j]) continue;
          const double ds = P_h(i, j) * (dp[static_cast<std::size_t>(j)] - weighted) * scale;
          kernels::axpy(ds, head_slice(lc.k, j, hd, dh), head_slice(dq, i, hd, dh));
          kernels::axpy(ds, head_slice(lc.q, i, hd, dh), head_slice(dk, j, hd, dh));
        }
      }
    }
    linear_backward(lc.input, P.wq, dq, &dinput, G.wq, G.bq);
    linear_backward(lc.input, P.wk, dk, &dinput, G.wk, nullptr);
    linear_backward(lc.input, P.wv, dv, &dinput, G.wv, G.bv);
    dh_mat = std::move(dinput);
  }

  if (!c.emb_drop.data.empty()) hadamard_inplace(dh_mat, c.emb_drop);
  Matrix dsum = layer_norm_backward(dh_mat, c.emb_xhat, c.emb_rstd, p.emb_ln_g, g.emb_ln_g, g.emb_ln_b);
  for (int pos = 0; pos < L; ++pos) {
    auto drow = dsum.row(pos);
    kernels::axpy(1.0, drow, g.pos_emb.row(pos));
    if (pos < img0) {
      kernels::axpy(1.0, drow, g.tok_emb.row(tok[pos]));
      kernels::axpy(1.0, drow, g.seg_emb.row(0));
    } else {
      const double* f = feats + static_cast<std::size_t>(pos - img0) * cfg.region_dim;
      kernels::axpy(1.0, drow, g.vis_b.row(0));
      for (int q = 0; q < cfg.region_dim; ++q) kernels::axpy(f[q], drow, g.vis_w.row(q));
      kernels::axpy(1.0, drow, g.seg_emb.row(1));
    }
  }
}

}  // namespace

// --- public entry points -------------------------------------------------------

std::vector<double> softmax_row(std::span<const double> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double z : logits) mx = std::max(mx, z);
  std::vector<double> out(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    s += out[k];
  }
  for (double& v : out) v /= s;
  return out;
}

double mean_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (labels.size() != static_cast<std::size_t>(logits.rows)) throw Error("cross-entropy: label count mismatch");
  if (logits.rows == 0) return 0.0;
  double total = 0.0;
  for (int i = 0; i < logits.rows; ++i) {
    auto row = logits.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double z : row) mx = std::max(mx, z);
    double s = 0.0;
    for (double z : row) s += std::exp(z - mx);
    total += mx + std::log(s) - row[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  }
  return total / logits.rows;
}

ForwardResult forward(const Batch& batch, const FusionParams& params, const FusionConfig& cfg, Mode mode,
                      std::uint64_t seed) {
  check_batch(batch, cfg);
  check_params(params, cfg);
  ForwardResult out;
  out.logits = Matrix(batch.n, cfg.n_classes);
  out.cache.reserve(static_cast<std::size_t>(batch.n));
  for (int r = 0; r < batch.n; ++r) {
    out.cache.push_back(forward_record(batch, r, params, cfg, mode == Mode::train, seed));
    for (int k = 0; k < cfg.n_classes; ++k) out.logits(r, k) = out.cache.back().logits[static_cast<std::size_t>(k)];
  }
  return out;
}

LossGrad loss_and_grad(const Batch& batch, const FusionParams& params, const FusionConfig& cfg, Mode mode,
                       std::uint64_t seed) {
  if (!batch.has_labels()) throw Error("loss_and_grad: batch has no labels");
  ForwardResult fr = forward(batch, params, cfg, mode, seed);
  LossGrad lg;
  lg.loss = mean_cross_entropy(fr.logits, batch.labels);
  lg.grads = FusionParams::zeros(cfg);
  if (batch.n == 0) return lg;
  const double inv_n = 1.0 / batch.n;
  for (int r = 0; r < batch.n; ++r) {
    auto probs = softmax_row(fr.logits.row(r));
    probs[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(r)])] -= 1.0;
    for (double& v : probs) v *= inv_n;
    backward_record(batch, r, params, cfg, fr.cache[static_cast<std::size_t>(r)], probs, lg.grads);
  }
  return lg;
}

LossGrad loss_and_grad(const Batch& batch, const FusionParams& params, const FusionConfig& cfg, std::uint64_t seed) {
  return loss_and_grad(batch, params, cfg, Mode::train, seed);
}

std::vector<double> predict_proba(const Batch& batch, const FusionParams& params, const FusionConfig& cfg) {
  ForwardResult fr = forward(batch, params, cfg, Mode::eval, 0);
  std::vector<double> out(static_cast<std::size_t>(batch.n));
  for (int r = 0; r < batch.n; ++r) out[static_cast<std::size_t>(r)] = softmax_row(fr.logits.row(r))[1];
  return out;
}

std::vector<double> predict_proba(const RecordSet& records, const FeatureStore& features, const Vocabulary& vocab,
                                  const FusionParams& params, const FusionConfig& cfg) {
  return predict_proba(make_batch(records, features, vocab, cfg, false), params, cfg);
}

}  // namespace memessl
