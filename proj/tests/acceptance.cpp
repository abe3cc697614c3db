// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "memessl/augment.hpp"
#include "memessl/checkpoint.hpp"
#include "memessl/features.hpp"
#include "memessl/metrics.hpp"
#include "memessl/model.hpp"
#include "memessl/pseudo.hpp"
#include "memessl/ssl_engine.hpp"
#include "memessl/synth.hpp"
#include "memessl/trainer.hpp"
#include "memessl/util.hpp"
#include "test_support.hpp"

using namespace memessl;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --- gradient correctness -------------------------------------------------

Outcome gradient_check() {
  const auto t0 = Clock::now();
  FusionConfig cfg;
  cfg.vocab_size = 32;
  cfg.max_text_len = 6;
  cfg.regions = 4;
  cfg.region_dim = 16;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 16;
  cfg.dropout_rate = 0.1;
  Rng rng(101);
  Batch b;
  b.n = 3;
  b.seq_len = cfg.seq_len();
  for (int r = 0; r < b.n; ++r) {
    const int len = 2 + r;
    b.tokens.push_back(Vocabulary::kCls);
    b.mask.push_back(1);
    for (int t = 0; t < cfg.max_text_len; ++t) {
      b.tokens.push_back(t < len ? 4 + static_cast<int>(rng.below(28)) : Vocabulary::kPad);
      b.mask.push_back(t < len ? 1 : 0);
    }
    b.tokens.push_back(Vocabulary::kSep);
    b.mask.push_back(1);
    for (int k = 0; k < cfg.regions; ++k) {
      b.tokens.push_back(Vocabulary::kPad);
      b.mask.push_back(1);
    }
    for (int k = 0; k < cfg.regions * cfg.region_dim; ++k) b.regions.push_back(rng.uniform());
    b.labels.push_back(r % 2);
    b.ids.push_back(r);
  }
  FusionParams params = FusionParams::init(cfg, 202);
  constexpr double h = 1e-4;
  double worst = 0.0;
  std::string worst_name;
  std::size_t coords = 0;
  for (Mode mode : {Mode::eval, Mode::train}) {
    const LossGrad lg = loss_and_grad(b, params, cfg, mode, 303);
    std::vector<const Matrix*> grads;
    lg.grads.visit([&](const std::string&, const Matrix& m, bool) { grads.push_back(&m); });
    std::size_t k = 0;
    params.visit([&](const std::string& name, Matrix& p, bool) {
      const Matrix& g = *grads[k++];
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        const double orig = p.data[i];
        p.data[i] = orig + h;
        const double lp = loss_and_grad(b, params, cfg, mode, 303).loss;
        p.data[i] = orig - h;
        const double lm = loss_and_grad(b, params, cfg, mode, 303).loss;
        p.data[i] = orig;
        const double num = (lp - lm) / (2 * h);
        const double rel = std::abs(g.data[i] - num) / std::max({std::abs(g.data[i]), std::abs(num), 1e-8});
        if (rel > worst) {
          worst = rel;
          worst_name = name;
        }
        ++coords;
      }
    });
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("%zu coordinates (eval+train), max rel err %.2e in %s, %.1f s", coords, worst, worst_name.c_str(), secs)};
}

// --- AUROC oracle ---------------------------------------------------------

Outcome auroc_oracle() {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const std::uint64_t levels = 2 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.below(2) ? static_cast<double>(rng.below(levels)) / static_cast<double>(levels) : rng.uniform();
      y[i] = static_cast<int>(rng.below(2));
    }
    // Both classes present.
    const std::size_t i0 = rng.below(n);
    y[i0] = 0;
    y[(i0 + 1 + rng.below(n - 1)) % n] = 1;
    double wins = 0, pairs = 0;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t c = 0; c < n; ++c)
        if (y[a] == 1 && y[c] == 0) {
          pairs += 1;
          wins += s[a] > s[c] ? 1.0 : (s[a] == s[c] ? 0.5 : 0.0);
        }
    worst = std::max(worst, std::abs(auroc(s, y) - wins / pairs));
  }
  const double perfect = auroc(std::vector<double>{0.1, 0.3, 0.35, 0.8, 0.9}, std::vector<int>{0, 0, 0, 1, 1});
  const double ties = auroc(std::vector<double>(50, 0.42), [] {
    std::vector<int> y(50);
    for (int i = 0; i < 50; ++i) y[static_cast<std::size_t>(i)] = i % 3 == 0;
    return y;
  }());
  return {worst <= 1e-12 && perfect == 1.0 && ties == 0.5,
          fmt("1000 sets, max |diff| %.1e, perfect %.17g, all-ties %.17g", worst, perfect, ties)};
}

// --- threshold filter oracle ----------------------------------------------

Outcome threshold_oracle() {
  Rng rng(12);
  std::vector<std::pair<std::int64_t, double>> probas;
  const double special[] = {0.995, 0.005, std::nextafter(0.995, 0.0), std::nextafter(0.005, 1.0), 0.0, 1.0};
  for (int i = 0; i < 10000; ++i) {
    double p;
    switch (rng.below(4)) {
      case 0: p = special[rng.below(6)]; break;
      case 1: p = 0.99 + 0.01 * rng.uniform(); break;
      case 2: p = 0.01 * rng.uniform(); break;
      default: p = rng.uniform();
    }
    probas.emplace_back(static_cast<std::int64_t>(10000 - i), p);
  }
  std::vector<PseudoCandidate> naive;
  for (const auto& [id, p] : probas) {
    if (p >= 0.995) naive.push_back({id, "", "", p, 1, "S2_pseudo"});
    else if (p <= 0.005) naive.push_back({id, "", "", p, 0, "S2_pseudo"});
  }
  std::sort(naive.begin(), naive.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  const auto got = filter_pseudo(probas, {0.995, 0.005});
  std::size_t at_pos = 0, at_neg = 0;
  for (const auto& c : got) {
    at_pos += c.confidence == 0.995;
    at_neg += c.confidence == 0.005;
  }
  const bool boundaries = at_pos > 0 && at_neg > 0;
  return {got == naive && boundaries,
          fmt("10000 probabilities, %zu candidates, boundary hits kept: 0.995 x%zu, 0.005 x%zu", got.size(), at_pos, at_neg)};
}

// --- scheduler anchors ----------------------------------------------------

Outcome scheduler_anchors() {
  bool ok = true;
  for (Schedule s : {Schedule::warmup_linear, Schedule::warmup_cosine})
    for (auto [w, T] : {std::pair{2000, 3000}, std::pair{500, 3500}}) {
      ok = ok && lr_multiplier(s, 0, w, T) == 0.0 && lr_multiplier(s, w, w, T) == 1.0 && lr_multiplier(s, T, w, T) == 0.0;
    }
  double cos_mid_err = 0.0;
  for (auto [w, T] : {std::pair{2000, 3000}, std::pair{500, 3500}})
    cos_mid_err = std::max(cos_mid_err, std::abs(lr_multiplier(Schedule::warmup_cosine, w + (T - w) / 2, w, T) - 0.5));
  const double lin = lr_multiplier(Schedule::warmup_linear, 2500, 2000, 3000);
  return {ok && cos_mid_err <= 1e-12 && lin == 0.5,
          fmt("m(0)=0 m(w)=1 m(T)=0 %s, cosine midpoint err %.1e, linear(2500; 2000, 3000) = %.17g", ok ? "hold" : "FAIL",
              cos_mid_err, lin)};
}

// --- stage count ledger ---------------------------------------------------

Outcome stage_count_ledger() {
  using memessl::testing::block;
  using memessl::testing::pseudo_block;
  const RecordSet hm = block("hm_train", 1, 8500, Source::hm_train);
  const RecordSet dev = block("dev_remainder", 20001, 100, Source::hm_dev_seen);
  const RecordSet manual = block("manual", 30001, 328, Source::memotion_manual);
  const RecordSet pseudo = pseudo_block("pseudo", 40001, 1534);
  const RecordSet filtered = pseudo_block("filtered", 40001, 282);
  const auto s1 = build_stage_metadata(Stage::S1_manual, hm, dev, manual);
  const auto s2 = build_stage_metadata(Stage::S2_pseudo, hm, dev, manual, &pseudo);
  const auto s3 = build_stage_metadata(Stage::S3_filtered, hm, dev, manual, nullptr, &filtered);
  const bool ok = s1.size() == 8928 && s2.size() == 10462 && s3.size() == 9210 &&
                  s1.ledger().count(Source::hm_train) == 8500 && s1.ledger().count(Source::hm_dev_seen) == 100 &&
                  s1.ledger().count(Source::memotion_manual) == 328 && s2.ledger().count(Source::pseudo) == 1534 &&
                  s3.ledger().count(Source::pseudo) == 282;
  return {ok, fmt("S1=%zu S2=%zu S3=%zu", s1.size(), s2.size(), s3.size())};
}

// --- multimodal vs unimodal gap -------------------------------------------

Outcome modality_gap() {
  const auto t0 = Clock::now();
  SynthSpec spec;
  spec.n_train = 2000;
  spec.n_dev = 400;
  spec.n_test = 400;
  spec.noise = 0.1;
  spec.seed = 7;
  const SynthCorpus c = generate_corpus(spec);
  std::size_t test_pos = 0;
  for (const auto& r : c.test) test_pos += *r.label == 1;
  FeatureConfig fc;
  FeatureStore store(fc.regions(), fc.dim);
  for (const RecordSet* s : {&c.train, &c.dev, &c.test})
    for (auto& f : extract_batch(*s, c.images, fc).features) store.add(std::move(f));
  const Vocabulary vocab = Vocabulary::build({&c.train}, 72);
  std::vector<int> y;
  for (const auto& r : c.test) y.push_back(*r.label);

  TrainConfig tc;
  tc.total_steps = 10000;
  tc.schedule = Schedule::warmup_linear;
  tc.warmup_steps = 1000;
  tc.batch_size = 32;
  tc.base_lr = 1e-3;
  tc.backbone_lr_ratio = 1.0;
  tc.dropout_rate = 0.1;
  tc.eval_every = 10000;
  tc.seed = 1;
  double acc[3];
  const Modality mods[3] = {Modality::both, Modality::text_only, Modality::image_only};
  for (int i = 0; i < 3; ++i) {
    FusionConfig f;
    f.vocab_size = 72;
    f.modality = mods[i];
    const TrainResult r = train(c.train, c.dev, store, vocab, f, tc);
    acc[i] = accuracy(predict_proba(c.test, store, vocab, r.params, r.config), y);
  }
  const double secs = seconds_since(t0);
  const bool ok = acc[0] >= 0.85 && acc[0] - acc[1] >= 0.10 && acc[0] - acc[2] >= 0.10 && secs < 600.0 &&
                  test_pos * 2 == c.test.size();
  return {ok, fmt("test acc fusion %.2f%%, text_only %.2f%%, image_only %.2f%% (test %zu/%zu positive), %.0f s",
                  100 * acc[0], 100 * acc[1], 100 * acc[2], test_pos, c.test.size(), secs)};
}

// --- training sanity ------------------------------------------------------

Outcome training_sanity() {
  const auto mc = memessl::testing::micro_corpus(32, 5);
  TrainConfig tc;
  tc.total_steps = 200;
  tc.warmup_steps = 20;
  tc.batch_size = 8;
  tc.base_lr = 1e-2;
  tc.backbone_lr_ratio = 1.0;
  tc.eval_every = 200;
  tc.seed = 3;
  const TrainResult r = train(mc.set, mc.set, mc.features, mc.vocab, mc.cfg, tc);
  const double l0 = r.report.points.front().train_loss, l1 = r.report.points.back().train_loss;

  TrainConfig frozen = tc;
  frozen.base_lr = 0.0;
  TrainOptions fo;
  fo.initial_params = FusionParams::init(mc.cfg, 4);
  const bool fixed = train(mc.set, mc.set, mc.features, mc.vocab, mc.cfg, frozen, fo).params == *fo.initial_params;

  memessl::testing::TempDir dir;
  TrainOptions a, b;
  a.checkpoint_path = dir / "a.ckpt";
  b.checkpoint_path = dir / "b.ckpt";
  train(mc.set, mc.set, mc.features, mc.vocab, mc.cfg, tc, a);
  train(mc.set, mc.set, mc.features, mc.vocab, mc.cfg, tc, b);
  const bool same = binio::read_file(dir / "a.ckpt") == binio::read_file(dir / "b.ckpt");
  return {l1 < 0.5 * l0 && fixed && same,
          fmt("loss %.4f -> %.4f, lr=0 bit-identical %s, same-seed checkpoints identical %s", l0, l1, fixed ? "yes" : "no",
              same ? "yes" : "no")};
}

// --- cutout ---------------------------------------------------------------

Outcome cutout_check() {
  Rng rng(21);
  bool identity = true, constant = true, counts = true, confined = true;
  for (int trial = 0; trial < 500; ++trial) {
    const int H = 1 + static_cast<int>(rng.below(24)), W = 1 + static_cast<int>(rng.below(24));
    Image img(H, W);
    for (auto& p : img.pixels) p = 0.01f + static_cast<float>(rng.uniform());
    const std::uint64_t seed = rng.next();
    identity = identity && cutout(img, 0.0, -1.0f, seed) == img;
    const Image full = cutout(img, 1.0, -1.0f, seed);
    constant = constant && std::all_of(full.pixels.begin(), full.pixels.end(), [](float v) { return v == -1.0f; });
    const double frac = rng.uniform();
    const Image out = cutout(img, frac, -1.0f, seed);
    long changed = 0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) changed += out.pixels[i] != img.pixels[i];
    counts = counts && changed == std::llround(frac * H * W);
    const CutoutBox box = cutout_box(H, W, frac, seed);
    for (int r = 0; r < H; ++r)
      for (int col = 0; col < W; ++col)
        if (r < box.row0 || r >= box.row0 + box.rows || col < box.col0 || col >= box.col0 + box.cols)
          confined = confined && out.at(r, col) == img.at(r, col);
  }

  std::vector<MemeRecord> recs;
  ImageStore images;
  for (int i = 1; i <= 64; ++i) {
    recs.push_back(memessl::testing::labeled(i, i % 2));
    Image img(8, 8);
    for (auto& p : img.pixels) p = 0.01f + static_cast<float>(rng.uniform());
    images.put(i, img);
  }
  const ImageStore a = augment_set(RecordSet("a", recs), images, 0.25, 0.0f, 9);
  rng.shuffle(recs);
  const ImageStore b = augment_set(RecordSet("b", recs), images, 0.25, 0.0f, 9);
  bool reorder = a.size() == 64;
  for (const auto& [id, img] : a) reorder = reorder && b.get(id) == img;
  const bool ok = identity && constant && counts && confined && reorder;
  return {ok, fmt("frac=0 identity %d, frac=1 fill %d, count=round(frac*H*W) %d, outside box untouched %d, reorder "
                  "invariant %d (500 images, 64-record set)",
                  identity, constant, counts, confined, reorder)};
}

// --- end to end -----------------------------------------------------------

int run_cli(const std::string& args, std::string& out) {
  FILE* p = ::popen((std::string(MEMESSL_CLI) + " " + args + " 2>&1").c_str(), "r");
  if (!p) return -1;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int st = ::pclose(p);
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome end_to_end() {
  memessl::testing::TempDir dir;
  binio::write_file_atomic(dir / "cfg.json", R"({
  "seed": 4,
  "synth": {"n_train": 400, "n_dev": 100, "n_test": 100, "n_dev_remainder": 20, "n_manual": 40, "n_pool": 300,
            "n_pool_irregular_text": 12, "n_pool_irregular_size": 6},
  "pseudo": {"tau_pos": 0.9, "tau_neg": 0.1},
  "model_1": {"train": {"total_steps": 400, "warmup_steps": 40, "batch_size": 32, "base_lr": 0.003,
                        "backbone_lr_ratio": 1.0, "eval_every": 100}},
  "model_2": {"train": {"total_steps": 400, "warmup_steps": 40, "batch_size": 32, "base_lr": 0.003,
                        "backbone_lr_ratio": 0.6, "eval_every": 100}}
})");
  std::string out;
  const int code = run_cli("experiment --config '" + (dir / "cfg.json").string() + "' --out '" + (dir / "out").string() + "'", out);
  if (code != 0) return {false, "experiment exited " + std::to_string(code) + ": " + out.substr(0, 300)};

  std::istringstream csv(binio::read_file(dir / "out/report.csv"));
  std::string header, line;
  std::getline(csv, header);
  const auto cols = split(header, ',');
  auto col = [&](const std::string& name) -> long {
    const auto it = std::find(cols.begin(), cols.end(), name);
    return it == cols.end() ? -1 : it - cols.begin();
  };
  const long c_stage = col("stage"), c_model = col("model"), c_n = col("n_train"), c_pseudo = col("n_pseudo");
  const long metric_cols[4] = {col("val_acc"), col("val_auroc"), col("test_acc"), col("test_auroc")};
  if (c_stage < 0 || c_model < 0 || c_n < 0 || c_pseudo < 0 || std::any_of(std::begin(metric_cols), std::end(metric_cols), [](long c) { return c < 0; }))
    return {false, "report.csv header missing columns: " + header};
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> rows;
  while (std::getline(csv, line))
    if (!line.empty()) {
      auto f = split(line, ',');
      rows[{f[static_cast<std::size_t>(c_stage)], f[static_cast<std::size_t>(c_model)]}] = f;
    }
  bool ok = rows.size() == 8;
  bool metrics_ok = true;
  std::string ledger;
  for (const char* m : {"model_1", "model_2"}) {
    for (const char* s : {"S0_baseline", "S1_manual", "S2_pseudo", "S3_filtered"}) {
      const auto it = rows.find({s, m});
      if (it == rows.end()) return {false, std::string("missing row ") + s + "/" + m};
      for (long c : metric_cols) {
        const double v = std::stod(it->second[static_cast<std::size_t>(c)]);
        metrics_ok = metrics_ok && v >= 0.0 && v <= 1.0;
      }
    }
    const auto n1 = std::stoul(rows[{"S1_manual", m}][static_cast<std::size_t>(c_n)]);
    const auto n2 = std::stoul(rows[{"S2_pseudo", m}][static_cast<std::size_t>(c_n)]);
    const auto np = std::stoul(rows[{"S2_pseudo", m}][static_cast<std::size_t>(c_pseudo)]);
    const auto selected = read_candidates(dir.path() / "out" / (std::string("candidates_") + m + ".jsonl")).size();
    ok = ok && n2 == n1 + selected && np == selected;
    ledger += fmt(" %s |S2|=%zu=|S1| %zu+%zu;", m, static_cast<std::size_t>(n2), static_cast<std::size_t>(n1), selected);
  }
  return {ok && metrics_ok, "4x2 report with val/test Acc/AUROC;" + ledger};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_check},
      {"AUROC oracle equivalence", auroc_oracle},
      {"threshold filter oracle", threshold_oracle},
      {"scheduler anchors", scheduler_anchors},
      {"stage count ledger", stage_count_ledger},
      {"multimodal vs unimodal gap", modality_gap},
      {"training sanity", training_sanity},
      {"cutout", cutout_check},
      {"end-to-end experiment", end_to_end},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
