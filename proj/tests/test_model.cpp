#include <cmath>
#include <numeric>

#include "doctest.h"
#include "memessl/checkpoint.hpp"
#include "memessl/model.hpp"
#include "memessl/util.hpp"
#include "test_support.hpp"

using namespace memessl;
using memessl::testing::TempDir;

namespace {

FusionConfig tiny_config() {
  FusionConfig cfg;
  cfg.vocab_size = 20;
  cfg.max_text_len = 5;
  cfg.regions = 3;
  cfg.region_dim = 10;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 12;
  cfg.dropout_rate = 0.2;
  return cfg;
}

Batch random_batch(const FusionConfig& cfg, int n, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.n = n;
  b.seq_len = cfg.seq_len();
  for (int r = 0; r < n; ++r) {
    const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_text_len)));
    b.tokens.push_back(Vocabulary::kCls);
    b.mask.push_back(1);
    for (int t = 0; t < cfg.max_text_len; ++t) {
      const bool on = t < len;
      b.tokens.push_back(on ? Vocabulary::kNumSpecial + static_cast<int>(rng.below(cfg.vocab_size - 4)) : 0);
      b.mask.push_back(on ? 1 : 0);
    }
    b.tokens.push_back(Vocabulary::kSep);
    b.mask.push_back(1);
    for (int k = 0; k < cfg.regions; ++k) {
      b.tokens.push_back(0);
      b.mask.push_back(cfg.modality == Modality::text_only ? 0 : 1);
    }
    if (cfg.modality == Modality::image_only)
      for (int t = 0; t < cfg.max_text_len; ++t) b.mask[static_cast<std::size_t>(r * b.seq_len + 1 + t)] = 0;
    for (int k = 0; k < cfg.regions * cfg.region_dim; ++k) b.regions.push_back(rng.uniform());
    b.labels.push_back(static_cast<int>(rng.below(2)));
    b.ids.push_back(r);
  }
  return b;
}

double max_rel_grad_error(const Batch& b, FusionParams params, const FusionConfig& cfg, Mode mode) {
  const LossGrad lg = loss_and_grad(b, params, cfg, mode, 77);
  std::vector<const Matrix*> grads;
  lg.grads.visit([&](const std::string&, const Matrix& m, bool) { grads.push_back(&m); });
  double worst = 0.0;
  std::size_t k = 0;
  const double h = 1e-4;
  params.visit([&](const std::string&, Matrix& p, bool) {
    const Matrix& g = *grads[k++];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + h;
      const double lp = loss_and_grad(b, params, cfg, mode, 77).loss;
      p.data[i] = orig - h;
      const double lm = loss_and_grad(b, params, cfg, mode, 77).loss;
      p.data[i] = orig;
      const double num = (lp - lm) / (2 * h);
      const double rel = std::abs(g.data[i] - num) / std::max({std::abs(g.data[i]), std::abs(num), 1e-8});
      worst = std::max(worst, rel);
    }
  });
  return worst;
}

}  // namespace

TEST_CASE("config validation") {
  FusionConfig c = tiny_config();
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  FusionConfig d = tiny_config();
  d.n_classes = 3;
  CHECK_THROWS_AS(d.validate(), Error);
  CHECK(tiny_config().seq_len() == 2 + 5 + 3);
  CHECK(parse_modality("image_only") == Modality::image_only);
  CHECK_THROWS(parse_modality("audio"));
}

TEST_CASE("initialization is seeded and counts parameters") {
  const FusionConfig cfg = tiny_config();
  CHECK(FusionParams::init(cfg, 1) == FusionParams::init(cfg, 1));
  CHECK_FALSE(FusionParams::init(cfg, 1) == FusionParams::init(cfg, 2));
  const int d = cfg.d_model, L = cfg.seq_len();
  const std::size_t per_layer = 4 * d * d + 3 * d + 4 * d + (d * cfg.d_ff + cfg.d_ff) + (cfg.d_ff * d + d);
  const std::size_t expected = static_cast<std::size_t>(cfg.vocab_size * d + L * d + 2 * d + cfg.region_dim * d + d + 2 * d) +
                               cfg.n_layers * per_layer + static_cast<std::size_t>(d * 2 + 2);
  CHECK(FusionParams::init(cfg, 1).num_parameters() == expected);
  const auto p = FusionParams::init(cfg, 1);
  CHECK(p.emb_ln_g.data == std::vector<double>(static_cast<std::size_t>(d), 1.0));
  int head = 0;
  FusionParams q = p;
  q.visit([&](const std::string& name, Matrix&, bool is_head) {
    if (is_head) {
      ++head;
      CHECK(name.rfind("classifier", 0) == 0);
    }
  });
  CHECK(head == 2);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  const std::vector<double> big{1000.0, 1001.0};
  const auto s = softmax_row(big);
  CHECK(s[0] + s[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  Matrix logits(2, 2);
  logits(0, 0) = 0;
  logits(0, 1) = 0;
  logits(1, 0) = 2;
  logits(1, 1) = 0;
  const double expected = 0.5 * (std::log(2.0) + (std::log(1 + std::exp(-2.0))));
  CHECK(mean_cross_entropy(logits, {1, 0}) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("attention rows are distributions over attendable keys") {
  const FusionConfig cfg = tiny_config();
  const Batch b = random_batch(cfg, 3, 4);
  const auto fr = forward(b, FusionParams::init(cfg, 5), cfg, Mode::eval, 0);
  for (int r = 0; r < b.n; ++r) {
    const std::uint8_t* mask = b.mask.data() + static_cast<std::size_t>(r) * b.seq_len;
    for (const auto& layer : fr.cache[static_cast<std::size_t>(r)].layers) {
      for (const Matrix& P : layer.probs) {
        for (int i = 0; i < P.rows; ++i) {
          double s = 0.0;
          for (int j = 0; j < P.cols; ++j) {
            if (!mask[j]) CHECK(P(i, j) == 0.0);
            CHECK(P(i, j) >= 0.0);
            s += P(i, j);
          }
          CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("records are independent: batch order permutes logits exactly") {
  const FusionConfig cfg = tiny_config();
  const auto params = FusionParams::init(cfg, 6);
  const Batch b = random_batch(cfg, 4, 8);
  Batch rev = b;
  const auto L = static_cast<std::size_t>(b.seq_len);
  const auto kd = static_cast<std::size_t>(cfg.regions * cfg.region_dim);
  for (int r = 0; r < b.n; ++r) {
    const auto src = static_cast<std::size_t>(b.n - 1 - r), dst = static_cast<std::size_t>(r);
    std::copy_n(b.tokens.begin() + static_cast<std::ptrdiff_t>(src * L), L, rev.tokens.begin() + static_cast<std::ptrdiff_t>(dst * L));
    std::copy_n(b.mask.begin() + static_cast<std::ptrdiff_t>(src * L), L, rev.mask.begin() + static_cast<std::ptrdiff_t>(dst * L));
    std::copy_n(b.regions.begin() + static_cast<std::ptrdiff_t>(src * kd), kd, rev.regions.begin() + static_cast<std::ptrdiff_t>(dst * kd));
    rev.labels[dst] = b.labels[src];
  }
  const Matrix a = forward(b, params, cfg, Mode::eval, 0).logits;
  const Matrix c = forward(rev, params, cfg, Mode::eval, 0).logits;
  for (int r = 0; r < b.n; ++r)
    for (int k = 0; k < 2; ++k) CHECK(a(r, k) == c(b.n - 1 - r, k));
}

TEST_CASE("masked positions do not influence the output") {
  const FusionConfig cfg = tiny_config();
  const auto params = FusionParams::init(cfg, 6);
  Batch b = random_batch(cfg, 2, 9);
  const Matrix before = forward(b, params, cfg, Mode::eval, 0).logits;
  for (std::size_t i = 0; i < b.tokens.size(); ++i)
    if (!b.mask[i]) b.tokens[i] = 7;
  CHECK(forward(b, params, cfg, Mode::eval, 0).logits == before);
}

TEST_CASE("unimodal ablations ignore the other modality") {
  FusionConfig text = tiny_config();
  text.modality = Modality::text_only;
  const auto params = FusionParams::init(text, 2);
  Batch b = random_batch(text, 2, 3);
  const Matrix t0 = forward(b, params, text, Mode::eval, 0).logits;
  for (auto& v : b.regions) v = 1.0 - v;
  CHECK(forward(b, params, text, Mode::eval, 0).logits == t0);

  FusionConfig image = tiny_config();
  image.modality = Modality::image_only;
  Batch c = random_batch(image, 2, 3);
  const Matrix i0 = forward(c, params, image, Mode::eval, 0).logits;
  for (int r = 0; r < c.n; ++r)
    for (int t = 1; t <= image.max_text_len; ++t) c.tokens[static_cast<std::size_t>(r * c.seq_len + t)] = 5;
  CHECK(forward(c, params, image, Mode::eval, 0).logits == i0);
}

TEST_CASE("dropout: eval is seed-free, train is seeded") {
  const FusionConfig cfg = tiny_config();
  const auto params = FusionParams::init(cfg, 1);
  const Batch b = random_batch(cfg, 3, 2);
  CHECK(forward(b, params, cfg, Mode::eval, 1).logits == forward(b, params, cfg, Mode::eval, 2).logits);
  CHECK(forward(b, params, cfg, Mode::train, 1).logits == forward(b, params, cfg, Mode::train, 1).logits);
  CHECK_FALSE(forward(b, params, cfg, Mode::train, 1).logits == forward(b, params, cfg, Mode::train, 2).logits);
  FusionConfig none = cfg;
  none.dropout_rate = 0.0;
  CHECK(forward(b, params, none, Mode::train, 1).logits == forward(b, params, none, Mode::eval, 0).logits);
}

TEST_CASE("analytic gradients match central differences") {
  for (Modality m : {Modality::both, Modality::text_only}) {
    FusionConfig cfg = tiny_config();
    cfg.modality = m;
    cfg.n_layers = 1;
    const Batch b = random_batch(cfg, 2, 13);
    const auto params = FusionParams::init(cfg, 21);
    CHECK(max_rel_grad_error(b, params, cfg, Mode::eval) < 1e-4);
    CHECK(max_rel_grad_error(b, params, cfg, Mode::train) < 1e-4);
  }
}

TEST_CASE("make_batch lays out [CLS] text [SEP] regions and validates inputs") {
  FusionConfig cfg = tiny_config();
  const Vocabulary vocab = Vocabulary::from_tokens({"alpha", "beta"});
  FeatureStore store(cfg.regions, cfg.region_dim);
  RegionFeatures f;
  f.id = 1;
  f.regions = cfg.regions;
  f.dim = cfg.region_dim;
  f.values.assign(static_cast<std::size_t>(cfg.regions * cfg.region_dim), 0.5f);
  store.add(f);
  MemeRecord r = memessl::testing::labeled(1, 1, Source::hm_train, "Alpha gamma beta");
  const RecordSet set("s", {r});
  const Batch b = make_batch(set, store, vocab, cfg, true);
  CHECK(b.tokens[0] == Vocabulary::kCls);
  CHECK(b.tokens[1] == vocab.id("alpha"));
  CHECK(b.tokens[2] == Vocabulary::kUnk);
  CHECK(b.tokens[3] == vocab.id("beta"));
  CHECK(b.mask[4] == 0);
  CHECK(b.tokens[6] == Vocabulary::kSep);
  CHECK(b.mask[7] == 1);
  CHECK(b.labels == std::vector<int>{1});

  MemeRecord u = r;
  u.label.reset();
  CHECK_THROWS_AS((void)make_batch(RecordSet("u", {u}), store, vocab, cfg, true), Error);
  MemeRecord missing = memessl::testing::labeled(2, 0);
  CHECK_THROWS_AS((void)make_batch(RecordSet("m", {missing}), store, vocab, cfg, true), Error);
  FusionConfig small = cfg;
  small.vocab_size = 5;
  CHECK_THROWS_AS((void)make_batch(set, store, vocab, small, true), Error);
}

TEST_CASE("vocabulary build, encode and file round trip") {
  std::vector<MemeRecord> v;
  v.push_back(memessl::testing::labeled(1, 0, Source::hm_train, "b a a c"));
  v.push_back(memessl::testing::labeled(2, 0, Source::hm_train, "b a d"));
  const RecordSet s("s", v);
  const Vocabulary vocab = Vocabulary::build({&s}, 7);
  REQUIRE(vocab.size() == 7);
  CHECK(vocab.token(4) == "a");
  CHECK(vocab.token(5) == "b");
  CHECK(vocab.token(6) == "c");
  CHECK(vocab.id("d") == Vocabulary::kUnk);
  CHECK(vocab.encode("A  b d", 2) == std::vector<int>{4, 5});
  TempDir dir;
  vocab.write(dir / "v.txt");
  CHECK(Vocabulary::read(dir / "v.txt").tokens() == vocab.tokens());
}

TEST_CASE("checkpoint round trip and corruption") {
  const FusionConfig cfg = tiny_config();
  const auto params = FusionParams::init(cfg, 3);
  const std::string bytes = encode_checkpoint(cfg, params);
  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(ck.config == cfg);
  std::vector<const Matrix*> orig;
  params.visit([&](const std::string&, const Matrix& m, bool) { orig.push_back(&m); });
  std::size_t k = 0;
  ck.params.visit([&](const std::string&, const Matrix& m, bool) {
    const Matrix& o = *orig[k++];
    REQUIRE(m.same_shape(o));
    for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(m.data[i] == static_cast<double>(static_cast<float>(o.data[i])));
  });
  CHECK(encode_checkpoint(ck.config, ck.params) == bytes);
  std::string bad = bytes;
  bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 1);
  CHECK_THROWS_AS((void)decode_checkpoint(bad), Error);
  CHECK_THROWS_AS((void)decode_checkpoint(bytes.substr(0, bytes.size() - 5)), Error);
  TempDir dir;
  save_checkpoint(dir / "m.ckpt", cfg, params);
  CHECK(load_checkpoint(dir / "m.ckpt").config == cfg);
  CHECK_THROWS_AS((void)load_checkpoint(dir / "missing.ckpt"), Error);
}
