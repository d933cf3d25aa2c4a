#include "phenotag/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phenotag/evaluator.hpp"
#include "phenotag/parallel.hpp"

namespace phenotag {

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

Neighbour nearest(std::span<const float> query, const ConceptEmbeddingTable& table) {
  if (table.empty()) throw UsageError("nearest concept search on an empty embedding table");
  if (query.size() != table.dim()) {
    throw ConfigError("query of dimension " + std::to_string(query.size()) + " against embeddings of dimension " +
                      std::to_string(table.dim()));
  }
  std::size_t best = 0;
  double best_sq = squared_distance(query, table.row(0));
  for (std::size_t i = 1; i < table.size(); ++i) {
    const double sq = squared_distance(query, table.row(i));
    if (sq < best_sq || (sq == best_sq && table.ids()[i] < table.ids()[best])) {
      best = i;
      best_sq = sq;
    }
  }
  return {table.ids()[best], std::sqrt(best_sq)};
}

std::vector<std::vector<std::int32_t>> document_windows(const AnnotatorModel& model, const Document& doc,
                                                        std::vector<Window>* windows_out) {
  const auto ids = model.vocab().encode(doc.tokens);
  const auto plan = plan_windows(ids.size(), {}, model.config().max_len);
  std::vector<std::vector<std::int32_t>> windows;
  for (const auto& w : plan.windows) windows.emplace_back(ids.begin() + w.begin, ids.begin() + w.end);
  if (windows_out) *windows_out = plan.windows;
  return windows;
}

}  // namespace

std::optional<std::size_t> frequent_argmax(std::span<const float> concept_dist, const FrequentSet& frequent) {
  if (frequent.empty() || concept_dist.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < concept_dist.size(); ++i) {
    if (concept_dist[i] > concept_dist[best] ||
        (concept_dist[i] == concept_dist[best] && frequent.at(i) < frequent.at(best))) {
      best = i;
    }
  }
  return best;
}

TokenDecision decide_token(const TokenPrediction& pred, const FrequentSet& frequent,
                           const ConceptEmbeddingTable& table, const InferenceConfig& cfg) {
  TokenDecision d;
  if (pred.relevance_prob >= cfg.tau_p) {
    if (const auto best = frequent_argmax(pred.concept_dist, frequent)) {
      d.concept_id = frequent.at(*best);
      d.branch = DecisionBranch::kFrequent;
    }
    return d;
  }
  if (table.empty()) return d;
  const auto n = nearest(pred.embedding, table);
  if (n.distance < cfg.tau_d) {
    d.concept_id = n.concept_id;
    d.branch = DecisionBranch::kDistance;
  }
  return d;
}

std::vector<Neighbour> nearest_concepts(std::span<const float> query, const ConceptEmbeddingTable& table,
                                        std::size_t k) {
  if (table.empty()) throw UsageError("nearest concept search on an empty embedding table");
  if (k == 0) throw UsageError("k must be >= 1");
  if (query.size() != table.dim()) {
    throw ConfigError("query of dimension " + std::to_string(query.size()) + " against embeddings of dimension " +
                      std::to_string(table.dim()));
  }
  std::vector<std::pair<double, std::size_t>> scored(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) scored[i] = {squared_distance(query, table.row(i)), i};
  const auto cmp = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return table.ids()[a.second] < table.ids()[b.second];
  };
  k = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(k), scored.end(), cmp);
  std::vector<Neighbour> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({table.ids()[scored[i].second], std::sqrt(scored[i].first)});
  return out;
}

std::vector<Annotation> merge_decisions(const std::vector<TokenDecision>& decisions, std::size_t offset) {
  std::vector<Annotation> out;
  for (std::size_t i = 0; i < decisions.size();) {
    if (!decisions[i].concept_id) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < decisions.size() && decisions[j].concept_id == decisions[i].concept_id) ++j;
    out.push_back({offset + i, offset + j, *decisions[i].concept_id, AnnotationSource::kPredicted});
    i = j;
  }
  return out;
}

std::vector<TokenPrediction> predict_document(const AnnotatorModel& model, const Document& doc) {
  const auto windows = document_windows(model, doc, nullptr);
  std::vector<TokenPrediction> out;
  out.reserve(doc.tokens.size());
  for (auto& w : model.predict_windows(windows)) {
    for (auto& p : w) out.push_back(std::move(p));
  }
  return out;
}

std::vector<Annotation> annotate_document(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                          const Document& doc, const InferenceConfig& cfg) {
  std::vector<Window> spans;
  const auto windows = document_windows(model, doc, &spans);
  const auto preds = model.predict_windows(windows);
  std::vector<Annotation> out;
  for (std::size_t w = 0; w < preds.size(); ++w) {
    std::vector<TokenDecision> decisions;
    decisions.reserve(preds[w].size());
    for (const auto& p : preds[w]) decisions.push_back(decide_token(p, model.frequent(), table, cfg));
    auto merged = merge_decisions(decisions, spans[w].begin);
    out.insert(out.end(), merged.begin(), merged.end());
  }
  return out;
}

std::vector<std::vector<Annotation>> annotate_corpus(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                                     const std::vector<Document>& docs, const InferenceConfig& cfg,
                                                     std::size_t workers) {
  std::vector<std::vector<Annotation>> out(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t i) { out[i] = annotate_document(model, table, docs[i], cfg); });
  return out;
}

namespace {

// Per-token quantities that fully determine the decision for any thresholds.
struct TokenSummary {
  float relevance;
  std::optional<ConceptId> frequent_choice;
  ConceptId nearest_id;
  double nearest_distance;
};

std::vector<std::vector<TokenSummary>> summarize(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                                 const std::vector<Document>& docs) {
  std::vector<std::vector<TokenSummary>> out(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& p : predict_document(model, docs[d])) {
      TokenSummary s;
      s.relevance = p.relevance_prob;
      if (const auto best = frequent_argmax(p.concept_dist, model.frequent())) s.frequent_choice = model.frequent().at(*best);
      const auto n = nearest(p.embedding, table);
      s.nearest_id = n.concept_id;
      s.nearest_distance = n.distance;
      out[d].push_back(std::move(s));
    }
  }
  return out;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

CalibrationResult calibrate_thresholds(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                       const std::vector<Document>& validation) {
  CalibrationResult result;
  const auto tokens = summarize(model, table, validation);
  std::vector<double> distances;
  for (const auto& doc : tokens) {
    for (const auto& t : doc) distances.push_back(t.nearest_distance);
  }
  result.median_distance = median_of(distances);
  result.best.tau_d = result.median_distance > 0.0 ? result.median_distance : 1.0;
  if (distances.empty()) return result;

  std::sort(distances.begin(), distances.end());
  std::vector<double> tau_d_grid;
  for (int q = 1; q <= 19; ++q) {
    const auto idx = static_cast<std::size_t>(std::floor(q / 20.0 * static_cast<double>(distances.size() - 1)));
    // Strict comparison: nudge so the quantile itself is included.
    const double v = std::nextafter(distances[idx], std::numeric_limits<double>::infinity());
    if (v > 0.0 && (tau_d_grid.empty() || v > tau_d_grid.back())) tau_d_grid.push_back(v);
  }
  const auto gold = concept_sets(validation);
  bool first = true;
  for (int p10 = 3; p10 <= 9; ++p10) {
    const double tau_p = p10 / 10.0;
    for (double tau_d : tau_d_grid) {
      ConceptSets pred;
      for (std::size_t d = 0; d < validation.size(); ++d) {
        auto& set = pred[validation[d].id];
        for (const auto& t : tokens[d]) {
          if (t.relevance >= tau_p) {
            if (t.frequent_choice) set.insert(*t.frequent_choice);
          } else if (t.nearest_distance < tau_d) {
            set.insert(t.nearest_id);
          }
        }
      }
      const auto report = exact_scores(pred, gold);
      if (first || report.f1 > result.best_f1) {
        result.best = {tau_p, tau_d};
        result.best_f1 = report.f1;
        first = false;
      }
    }
  }
  return result;
}

InferenceConfig default_thresholds(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                   const std::vector<Document>& validation) {
  std::vector<double> distances;
  for (const auto& doc : summarize(model, table, validation)) {
    for (const auto& t : doc) distances.push_back(t.nearest_distance);
  }
  const double median = median_of(distances);
  return {0.5, median > 0.0 ? median : 1.0};
}

}  // namespace phenotag
