#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phenotag/annotator.hpp"
#include "phenotag/corpus.hpp"
#include "phenotag/embedding_table.hpp"
#include "phenotag/inference_config.hpp"

namespace phenotag {

enum class DecisionBranch { kNone, kFrequent, kDistance };

struct TokenDecision {
  std::optional<ConceptId> concept_id;
  DecisionBranch branch = DecisionBranch::kNone;
};

// Nearest concept over the whole table; ties go to the lowest id.
struct Neighbour {
  ConceptId concept_id;
  double distance = 0.0;
};

// If relevance >= tau_p: argmax of concept_dist over the frequent set (ties to
// the lowest id). Otherwise, if the nearest concept lies closer than tau_d:
// that concept. Otherwise no concept. With an empty frequent set the first
// branch yields no concept.
TokenDecision decide_token(const TokenPrediction& pred, const FrequentSet& frequent,
                           const ConceptEmbeddingTable& table, const InferenceConfig& cfg);

// Exhaustive scan, ascending by (distance, id). Throws UsageError for an empty
// table or k = 0.
std::vector<Neighbour> nearest_concepts(std::span<const float> query, const ConceptEmbeddingTable& table,
                                        std::size_t k);

// Index of the argmax of concept_dist, ties resolved to the lowest concept id.
std::optional<std::size_t> frequent_argmax(std::span<const float> concept_dist, const FrequentSet& frequent);

// Merges runs of consecutive tokens decided for the same concept. offset is
// added to every token index.
std::vector<Annotation> merge_decisions(const std::vector<TokenDecision>& decisions, std::size_t offset = 0);

// Windows of at most max_len tokens, scored independently; runs never cross
// window boundaries.
std::vector<Annotation> annotate_document(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                          const Document& doc, const InferenceConfig& cfg);

// Annotates documents in parallel on up to `workers` threads; output order
// follows the input.
std::vector<std::vector<Annotation>> annotate_corpus(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                                     const std::vector<Document>& docs, const InferenceConfig& cfg,
                                                     std::size_t workers = 1);

// Per-token predictions for a whole document, window by window.
std::vector<TokenPrediction> predict_document(const AnnotatorModel& model, const Document& doc);

// Threshold selection on gold-annotated validation documents. tau_p ranges
// over {0.3, ..., 0.9}; tau_d over quantiles of the nearest-concept distances
// of validation tokens. The pair with the highest exact-match F1 wins (ties
// keep the earlier grid point).
struct CalibrationResult {
  InferenceConfig best;
  double best_f1 = 0.0;
  double median_distance = 0.0;  // default tau_d
};
CalibrationResult calibrate_thresholds(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                       const std::vector<Document>& validation);

// tau_p = 0.5 and tau_d = median nearest-concept distance on the validation
// documents (1.0 when they contain no tokens).
InferenceConfig default_thresholds(const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                   const std::vector<Document>& validation);

}  // namespace phenotag
