#include "phenotag/selective.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "phenotag/inference.hpp"
#include "phenotag/random.hpp"

namespace phenotag {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom:
      return "random";
    case Strategy::kUncertainty:
      return "uncertainty";
    case Strategy::kOracle:
      return "oracle";
  }
  return "random";
}

Strategy strategy_from_string(std::string_view text) {
  if (text == "random") return Strategy::kRandom;
  if (text == "uncertainty") return Strategy::kUncertainty;
  if (text == "oracle") return Strategy::kOracle;
  throw ConfigError("unknown selection strategy '" + std::string(text) + "' (expected random, uncertainty or oracle)");
}

double entropy(std::span<const float> dist) {
  double h = 0.0;
  for (float p : dist) {
    if (p > 0.0f) h -= static_cast<double>(p) * std::log(static_cast<double>(p));
  }
  return h;
}

double document_uncertainty(const std::vector<TokenPrediction>& preds, double tau_p) {
  if (preds.empty()) return 0.0;
  double qualifying_sum = 0.0, all_sum = 0.0;
  std::size_t qualifying = 0;
  for (const auto& p : preds) {
    const double h = entropy(p.concept_dist);
    all_sum += h;
    if (p.relevance_prob >= tau_p) {
      qualifying_sum += h;
      ++qualifying;
    }
  }
  return qualifying ? qualifying_sum / static_cast<double>(qualifying) : all_sum / static_cast<double>(preds.size());
}

double score_uncertainty(const AnnotatorModel& model, const Document& doc, double tau_p) {
  return document_uncertainty(predict_document(model, doc), tau_p);
}

std::size_t score_oracle(const std::vector<Annotation>& silver, const std::vector<Annotation>& gold) {
  std::set<ConceptId> s, g;
  for (const auto& a : silver) s.insert(a.concept_id);
  for (const auto& a : gold) g.insert(a.concept_id);
  std::size_t diff = 0;
  for (const auto& c : s) diff += g.count(c) ? 0 : 1;
  for (const auto& c : g) diff += s.count(c) ? 0 : 1;
  return diff;
}

std::size_t selection_size(std::size_t n, double fraction) {
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::min(k, n);
}

std::vector<std::string> select(const std::vector<SelectionScore>& scores, Strategy strategy, double fraction,
                                std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("selection fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<const SelectionScore*> order;
  for (const auto& s : scores) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });
  if (strategy == Strategy::kRandom) {
    Rng rng(seed);
    rng.shuffle(order);
  } else {
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->score > b->score; });
  }
  const auto k = selection_size(order.size(), fraction);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(order[i]->doc_id);
  return out;
}

}  // namespace phenotag
