#include "memessl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <numbers>

#include "memessl/checkpoint.hpp"
#include "memessl/metrics.hpp"
#include "memessl/util.hpp"

namespace memessl {

std::string_view to_string(Schedule s) { return s == Schedule::warmup_linear ? "warmup_linear" : "warmup_cosine"; }

Schedule parse_schedule(std::string_view s) {
  if (s == "warmup_linear") return Schedule::warmup_linear;
  if (s == "warmup_cosine") return Schedule::warmup_cosine;
  throw Error("unknown schedule: " + std::string(s));
}

std::vector<std::string> TrainConfig::validate() const {
  if (total_steps < 0) throw Error("train config: total_steps must be non-negative");
  if (warmup_steps < 0) throw Error("train config: warmup_steps must be non-negative");
  if (total_steps > 0 && warmup_steps >= total_steps) throw Error("train config: warmup_steps must be below total_steps");
  if (total_steps == 0 && warmup_steps != 0) throw Error("train config: warmup_steps must be 0 when total_steps is 0");
  if (batch_size <= 0) throw Error("train config: batch_size must be positive");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw Error("train config: base_lr must be non-negative");
  if (!(backbone_lr_ratio >= 0.0) || !std::isfinite(backbone_lr_ratio))
    throw Error("train config: backbone_lr_ratio must be non-negative");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("train config: dropout_rate must lie in [0,1)");
  if (eval_every <= 0) throw Error("train config: eval_every must be positive");
  std::vector<std::string> warnings;
  if (2 * warmup_steps > total_steps && total_steps > 0)
    warnings.push_back("warmup_steps " + std::to_string(warmup_steps) + " exceeds half of total_steps " +
                       std::to_string(total_steps));
  return warnings;
}

double lr_multiplier(Schedule schedule, int t, int w, int total) {
  if (w < 0 || w >= total) throw Error("lr_multiplier: warmup steps must satisfy 0 <= w < T");
  if (t < 0 || t > total) throw Error("lr_multiplier: step outside [0, T]");
  if (t < w) return static_cast<double>(t) / static_cast<double>(w);
  const double span = static_cast<double>(total - w);
  const double done = static_cast<double>(t - w);
  if (schedule == Schedule::warmup_linear) return static_cast<double>(total - t) / span;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * done / span));
}

AdamState AdamState::zeros_like(const FusionParams& p) {
  AdamState s;
  s.m = p;
  s.m.visit([](const std::string&, Matrix& m, bool) { m.fill(0.0); });
  s.v = s.m;
  return s;
}

void adam_step(FusionParams& params, const FusionParams& grads, AdamState& state, double lr) {
  adam_step(params, grads, state, lr, lr);
}

void adam_step(FusionParams& params, const FusionParams& grads, AdamState& state, double lr_head, double lr_backbone) {
  std::vector<const Matrix*> g_list;
  grads.visit([&](const std::string& name, const Matrix& g, bool) {
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (!std::isfinite(g.data[i]))
        throw Error("adam: non-finite gradient in '" + name + "' at index " + std::to_string(i));
    g_list.push_back(&g);
  });
  std::vector<Matrix*> m_list, v_list;
  state.m.visit([&](const std::string&, Matrix& m, bool) { m_list.push_back(&m); });
  state.v.visit([&](const std::string&, Matrix& v, bool) { v_list.push_back(&v); });
  if (m_list.size() != g_list.size() || v_list.size() != g_list.size()) throw Error("adam: state shape mismatch");

  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, static_cast<double>(t));
  std::size_t k = 0;
  params.visit([&](const std::string& name, Matrix& p, bool is_head) {
    const Matrix& g = *g_list[k];
    Matrix& m = *m_list[k];
    Matrix& v = *v_list[k];
    ++k;
    if (!p.same_shape(g) || !p.same_shape(m) || !p.same_shape(v)) throw Error("adam: shape mismatch in '" + name + "'");
    const double lr = is_head ? lr_head : lr_backbone;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = AdamState::kBeta1 * m.data[i] + (1.0 - AdamState::kBeta1) * gi;
      v.data[i] = AdamState::kBeta2 * v.data[i] + (1.0 - AdamState::kBeta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + AdamState::kEps);
    }
  });
  state.step = t;
}

// --- reports -------------------------------------------------------------

namespace {
std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace

std::string TrainReport::to_csv() const {
  std::string out = "step,train_loss,val_loss,val_acc,val_auroc\n";
  for (const auto& p : points)
    out += std::to_string(p.step) + "," + fmt_num(p.train_loss) + "," + fmt_num(p.val_loss) + "," + fmt_num(p.val_acc) +
           "," + fmt_num(p.val_auroc) + "\n";
  return out;
}

void TrainReport::write_csv(const std::filesystem::path& path) const { binio::write_file_atomic(path, to_csv()); }

// --- loop ----------------------------------------------------------------

SetEval evaluate_set(const RecordSet& set, const FeatureStore& features, const Vocabulary& vocab,
                     const FusionParams& params, const FusionConfig& cfg) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  if (set.empty()) return {kNaN, kNaN, kNaN};
  const Batch b = make_batch(set, features, vocab, cfg, true);
  const ForwardResult fr = forward(b, params, cfg, Mode::eval, 0);
  std::vector<double> probs(static_cast<std::size_t>(b.n));
  for (int r = 0; r < b.n; ++r) probs[static_cast<std::size_t>(r)] = softmax_row(fr.logits.row(r))[1];
  SetEval e;
  e.loss = mean_cross_entropy(fr.logits, b.labels);
  e.acc = accuracy(probs, b.labels);
  try {
    e.auroc = auroc(probs, b.labels);
  } catch (const Error&) {
    e.auroc = kNaN;
  }
  return e;
}

TrainResult train(const RecordSet& train_set, const RecordSet& val_set, const FeatureStore& features,
                  const Vocabulary& vocab, const FusionConfig& model_cfg, const TrainConfig& tc,
                  const TrainOptions& opts) {
  TrainResult result;
  result.report.warnings = tc.validate();
  if (!opts.quiet)
    for (const auto& w : result.report.warnings) std::cerr << "warning: " << w << "\n";
  if (train_set.empty()) throw Error("train: empty training set");
  if (tc.total_steps > 0 && static_cast<std::size_t>(tc.batch_size) > train_set.size())
    throw Error("train: batch_size " + std::to_string(tc.batch_size) + " exceeds the " +
                std::to_string(train_set.size()) + "-record training set");

  FusionConfig cfg = model_cfg;
  cfg.dropout_rate = tc.dropout_rate;
  cfg.validate();
  result.config = cfg;

  FusionParams params = opts.initial_params ? *opts.initial_params : FusionParams::init(cfg, derive_seed(tc.seed, 0x1417));
  AdamState adam = AdamState::zeros_like(params);

  std::vector<const MemeRecord*> order;
  order.reserve(train_set.size());
  for (const auto& r : train_set) order.push_back(&r);
  // Labels and features are checked up front so the loop cannot fail midway.
  (void)make_batch(order, features, vocab, cfg, true);

  auto record_point = [&](int step) {
    const SetEval tr = evaluate_set(train_set, features, vocab, params, cfg);
    const SetEval va = evaluate_set(val_set, features, vocab, params, cfg);
    result.report.points.push_back({step, tr.loss, va.loss, va.acc, va.auroc});
  };
  record_point(0);

  const auto bs = static_cast<std::size_t>(tc.batch_size);
  std::size_t cursor = order.size();  // forces a shuffle before the first batch
  std::uint64_t epoch = 0;
  std::vector<const MemeRecord*> chunk(bs);
  for (int t = 0; t < tc.total_steps; ++t) {
    if (cursor + bs > order.size()) {
      Rng rng(derive_seed(tc.seed, 0xe90c0000ULL + epoch++));
      rng.shuffle(order);
      cursor = 0;
    }
    std::copy(order.begin() + static_cast<std::ptrdiff_t>(cursor), order.begin() + static_cast<std::ptrdiff_t>(cursor + bs),
              chunk.begin());
    cursor += bs;
    const Batch b = make_batch(chunk, features, vocab, cfg, true);
    const LossGrad lg = loss_and_grad(b, params, cfg, Mode::train, derive_seed(tc.seed, 0x57e90000ULL + t));
    const double mult = lr_multiplier(tc.schedule, t, tc.warmup_steps, tc.total_steps);
    adam_step(params, lg.grads, adam, tc.base_lr * mult, tc.base_lr * tc.backbone_lr_ratio * mult);
    const int done = t + 1;
    if (done % tc.eval_every == 0 || done == tc.total_steps) {
      record_point(done);
      if (!opts.quiet) {
        const auto& p = result.report.points.back();
        std::cerr << "step " << done << " train_loss " << p.train_loss << " val_loss " << p.val_loss << " val_acc "
                  << p.val_acc << "\n";
      }
    }
  }

  if (opts.checkpoint_path) {
    save_checkpoint(*opts.checkpoint_path, cfg, params);
    auto vocab_path = *opts.checkpoint_path;
    vocab_path += ".vocab";
    vocab.write(vocab_path);
    result.report.checkpoint_path = opts.checkpoint_path->string();
  }
  result.params = std::move(params);
  return result;
}

}  // namespace memessl
