#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "../support/generators.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/selective.hpp"

using namespace phenotag;

namespace {

double entropy_oracle(const std::vector<float>& p) {
  double h = 0.0;
  for (float x : p) {
    if (x > 0) h -= static_cast<double>(x) * std::log(static_cast<double>(x));
  }
  return h;
}

std::vector<SelectionScore> random_scores(std::size_t n, Rng& rng, Strategy s) {
  std::vector<SelectionScore> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"doc" + std::to_string(i), static_cast<double>(rng.below(5)), s});
  return out;
}

}  // namespace

TEST_CASE("entropy") {
  CHECK(entropy(std::vector<float>(400, 1.0f / 400)) == doctest::Approx(std::log(400.0)).epsilon(1e-5));
  CHECK(entropy(std::vector<float>{0, 1, 0}) == 0.0);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> p(1 + rng.below(10));
    float z = 0;
    for (auto& x : p) z += (x = rng.below(3) == 0 ? 0.0f : static_cast<float>(rng.uniform()));
    if (z == 0) continue;
    for (auto& x : p) x /= z;
    const double h = entropy(p);
    CHECK(h == doctest::Approx(entropy_oracle(p)).epsilon(1e-6));
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(p.size())) + 1e-5);
  }
}

TEST_CASE("document uncertainty") {
  auto tok = [](float rel, std::vector<float> dist) { return TokenPrediction{rel, std::move(dist), {}}; };
  const std::vector<TokenPrediction> preds{tok(0.9f, {0.5f, 0.5f}), tok(0.1f, {1, 0}), tok(0.8f, {1, 0})};
  CHECK(document_uncertainty(preds, 0.5) == doctest::Approx(std::log(2.0) / 2));
  CHECK(document_uncertainty(preds, 0.95) == doctest::Approx(std::log(2.0) / 3));
  CHECK(document_uncertainty({}, 0.5) == 0.0);
}

TEST_CASE("oracle score is the symmetric difference") {
  const std::vector<Annotation> silver{{0, 1, "A", AnnotationSource::kSilver}, {2, 3, "B", AnnotationSource::kSilver}};
  const std::vector<Annotation> gold{{0, 1, "B", AnnotationSource::kGold}, {4, 5, "C", AnnotationSource::kGold},
                                     {6, 7, "C", AnnotationSource::kGold}};
  CHECK(score_oracle(silver, gold) == 2);
  CHECK(score_oracle(gold, silver) == 2);
  CHECK(score_oracle(gold, gold) == 0);
}

TEST_CASE("selection size") {
  CHECK(selection_size(10, 0.2) == 2);
  CHECK(selection_size(10, 0.6) == 6);
  CHECK(selection_size(3, 0.5) == 2);
  CHECK(selection_size(100, 0.7) == 70);
  CHECK(selection_size(0, 0.5) == 0);
  for (std::size_t n = 1; n < 300; ++n) {
    for (double f : kFractionPresets) {
      const auto k = selection_size(n, f);
      CHECK(k <= n);
      CHECK(static_cast<double>(k) >= f * static_cast<double>(n) - 1e-9);
      CHECK(static_cast<double>(k) < f * static_cast<double>(n) + 1.0);
    }
  }
}

TEST_CASE("selection") {
  Rng rng(2);
  SUBCASE("score order with ties broken by id") {
    const std::vector<SelectionScore> scores{{"b", 1.0, Strategy::kOracle}, {"a", 1.0, Strategy::kOracle},
                                             {"c", 3.0, Strategy::kOracle}, {"d", 0.0, Strategy::kOracle}};
    CHECK(select(scores, Strategy::kOracle, 0.5, 0) == std::vector<std::string>{"c", "a"});
  }
  SUBCASE("invalid fractions are rejected") {
    const auto scores = random_scores(5, rng, Strategy::kRandom);
    CHECK_THROWS_AS(select(scores, Strategy::kRandom, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(select(scores, Strategy::kRandom, 1.5, 1), ConfigError);
    CHECK(select(scores, Strategy::kRandom, 1.0, 1).size() == 5);
  }
  SUBCASE("properties") {
    for (auto strategy : {Strategy::kRandom, Strategy::kUncertainty, Strategy::kOracle}) {
      for (int trial = 0; trial < 30; ++trial) {
        const auto n = 1 + rng.below(40);
        const auto scores = random_scores(n, rng, strategy);
        const auto seed = rng.below(1000);
        std::vector<std::string> previous;
        for (double f : kFractionPresets) {
          const auto chosen = select(scores, strategy, f, seed);
          CHECK(chosen.size() == selection_size(n, f));
          CHECK(std::set<std::string>(chosen.begin(), chosen.end()).size() == chosen.size());
          CHECK(chosen == select(scores, strategy, f, seed));
          CHECK(std::equal(previous.begin(), previous.end(), chosen.begin()));
          previous = chosen;

          auto shuffled = scores;
          std::reverse(shuffled.begin(), shuffled.end());
          std::swap(shuffled.front(), shuffled[shuffled.size() / 2]);
          CHECK(select(shuffled, strategy, f, seed) == chosen);
        }
      }
    }
  }
  SUBCASE("different seeds give different random selections") {
    const auto scores = random_scores(50, rng, Strategy::kRandom);
    CHECK(select(scores, Strategy::kRandom, 0.5, 1) != select(scores, Strategy::kRandom, 0.5, 2));
  }
}

TEST_CASE("strategy names round trip") {
  for (auto s : {Strategy::kRandom, Strategy::kUncertainty, Strategy::kOracle}) CHECK(strategy_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(strategy_from_string("greedy"), ConfigError);
}
