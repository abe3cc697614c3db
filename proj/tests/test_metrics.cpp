#include <cmath>

#include "doctest.h"
#include "memessl/metrics.hpp"
#include "memessl/util.hpp"
#include "test_support.hpp"

using namespace memessl;
using memessl::testing::TempDir;

namespace {

double brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("accuracy examples and errors") {
  CHECK(accuracy(std::vector<double>{1, 0, 1}, std::vector<int>{1, 0, 1}) == 1.0);
  CHECK(accuracy(std::vector<double>{0.9, 0.2, 0.6}, std::vector<int>{1, 0, 0}) == doctest::Approx(2.0 / 3.0));
  CHECK(accuracy(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0, 1}) == 0.5);
  CHECK(accuracy(std::vector<double>{0.6}, std::vector<int>{1}, 0.7) == 0.0);
  CHECK_THROWS_AS((void)accuracy(std::vector<double>{}, std::vector<int>{}), Error);
  CHECK_THROWS_AS((void)accuracy(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);
}

TEST_CASE("auroc examples") {
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{1, 1, 0, 0}) == 0.0);
  CHECK(auroc(std::vector<double>(7, 0.3), std::vector<int>{1, 0, 0, 1, 1, 0, 1}) == 0.5);
  CHECK_THROWS_AS((void)auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), Error);
  CHECK_THROWS_AS((void)auroc(std::vector<double>{0.1}, std::vector<int>{0}), Error);
  CHECK_THROWS_AS((void)auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1}), Error);
}

TEST_CASE("auroc matches the all-pairs oracle with ties") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(100);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.below(3) == 0 ? static_cast<double>(rng.below(4)) / 4.0 : rng.uniform();
      y[i] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auroc(s, y);
    CHECK(std::abs(a - brute_auroc(s, y)) <= 1e-12);

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(std::abs(auroc(t, y) - a) <= 1e-12);
    std::vector<int> flipped(n);
    for (std::size_t i = 0; i < n; ++i) flipped[i] = 1 - y[i];
    CHECK(std::abs(auroc(s, flipped) - (1.0 - a)) <= 1e-12);
  }
}

TEST_CASE("prediction files round trip and evaluate") {
  TempDir dir;
  std::vector<Prediction> preds{{1, 0.9, 1}, {2, 0.1, 0}, {3, 0.4, 1}, {4, 0.25, std::nullopt}};
  write_predictions(preds, dir / "p.csv");
  const auto back = read_predictions(dir / "p.csv");
  REQUIRE(back.size() == 4);
  CHECK(back[0].proba == 0.9);
  CHECK(back[2].label == 1);
  CHECK_FALSE(back[3].label.has_value());
  CHECK_THROWS_AS((void)evaluate(back), Error);
  const EvalResult r = evaluate(std::vector<Prediction>(back.begin(), back.begin() + 3));
  CHECK(r.n == 3);
  CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(r.auroc == 1.0);
  CHECK(r.threshold == 0.5);

  binio::write_file_atomic(dir / "bad.csv", "id,proba,label\n1,abc,1\n");
  CHECK_THROWS_AS((void)read_predictions(dir / "bad.csv"), Error);
  binio::write_file_atomic(dir / "range.csv", "id,proba,label\n1,1.5,1\n");
  CHECK_THROWS_AS((void)read_predictions(dir / "range.csv"), Error);
}
