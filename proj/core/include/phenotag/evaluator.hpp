#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phenotag/corpus.hpp"
#include "phenotag/ontology.hpp"

namespace phenotag {

// Document id -> set of concept ids annotated in it.
using ConceptSets = std::map<std::string, std::set<ConceptId>>;

ConceptSets concept_sets(const std::vector<Document>& docs);
ConceptSets concept_sets(const std::vector<std::string>& doc_ids,
                         const std::vector<std::vector<Annotation>>& annotations);

enum class MatchMode { kExact, kGeneralised };
enum class Slice { kAll, kRareOnly };

std::string_view to_string(MatchMode mode);
std::string_view to_string(Slice slice);
MatchMode match_mode_from_string(std::string_view text);

struct EvalReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  MatchMode mode = MatchMode::kExact;
  Slice slice = Slice::kAll;
};

// Fills precision, recall and f1 from the counts, with 0/0 taken as 0.
void finalize(EvalReport& report);

// Pooled set counts over documents. Gold documents missing from pred count as
// empty predictions; a predicted document absent from gold is an InputError.
EvalReport exact_scores(const ConceptSets& pred, const ConceptSets& gold);

// As exact_scores after replacing each set by its union with all ancestors
// below the root. Unknown concept ids raise InputError.
EvalReport generalised_scores(const ConceptSets& pred, const ConceptSets& gold, const OntologyGraph& graph);

// Drops frequent concepts from both sides.
std::pair<ConceptSets, ConceptSets> rare_slice(const ConceptSets& pred, const ConceptSets& gold,
                                               const FrequentSet& frequent);

}  // namespace phenotag
