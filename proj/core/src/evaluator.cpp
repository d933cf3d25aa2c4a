#include "phenotag/evaluator.hpp"

#include "phenotag/errors.hpp"

namespace phenotag {

ConceptSets concept_sets(const std::vector<Document>& docs) {
  ConceptSets out;
  for (const auto& doc : docs) {
    auto& set = out[doc.id];
    for (const auto& a : doc.annotations) set.insert(a.concept_id);
  }
  return out;
}

ConceptSets concept_sets(const std::vector<std::string>& doc_ids,
                         const std::vector<std::vector<Annotation>>& annotations) {
  if (doc_ids.size() != annotations.size()) throw UsageError("document ids and annotation lists differ in length");
  ConceptSets out;
  for (std::size_t i = 0; i < doc_ids.size(); ++i) {
    auto& set = out[doc_ids[i]];
    for (const auto& a : annotations[i]) set.insert(a.concept_id);
  }
  return out;
}

std::string_view to_string(MatchMode mode) { return mode == MatchMode::kExact ? "exact" : "generalised"; }

std::string_view to_string(Slice slice) { return slice == Slice::kAll ? "all" : "rare_only"; }

MatchMode match_mode_from_string(std::string_view text) {
  if (text == "exact") return MatchMode::kExact;
  if (text == "generalised" || text == "generalized") return MatchMode::kGeneralised;
  throw ConfigError("unknown evaluation mode '" + std::string(text) + "' (expected exact or generalised)");
}

void finalize(EvalReport& r) {
  r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
}

namespace {

void count(const std::set<ConceptId>& p, const std::set<ConceptId>& g, EvalReport& r) {
  for (const auto& c : p) {
    if (g.count(c)) {
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  for (const auto& c : g) {
    if (!p.count(c)) ++r.fn;
  }
}

void check_keys(const ConceptSets& pred, const ConceptSets& gold) {
  for (const auto& [doc, _] : pred) {
    if (!gold.count(doc)) throw InputError("predicted document '" + doc + "' has no gold entry");
  }
}

std::set<ConceptId> closure(const std::set<ConceptId>& ids, const OntologyGraph& graph) {
  std::set<ConceptId> out;
  for (const auto& id : ids) {
    if (!graph.is_annotatable(id)) throw InputError("unknown concept id '" + id + "'");
    out.insert(id);
    const auto anc = graph.ancestors(id);
    out.insert(anc.begin(), anc.end());
  }
  return out;
}

const std::set<ConceptId> kEmpty;

}  // namespace

EvalReport exact_scores(const ConceptSets& pred, const ConceptSets& gold) {
  check_keys(pred, gold);
  EvalReport r;
  r.mode = MatchMode::kExact;
  for (const auto& [doc, g] : gold) {
    const auto it = pred.find(doc);
    count(it == pred.end() ? kEmpty : it->second, g, r);
  }
  finalize(r);
  return r;
}

EvalReport generalised_scores(const ConceptSets& pred, const ConceptSets& gold, const OntologyGraph& graph) {
  check_keys(pred, gold);
  EvalReport r;
  r.mode = MatchMode::kGeneralised;
  for (const auto& [doc, g] : gold) {
    const auto it = pred.find(doc);
    count(closure(it == pred.end() ? kEmpty : it->second, graph), closure(g, graph), r);
  }
  finalize(r);
  return r;
}

std::pair<ConceptSets, ConceptSets> rare_slice(const ConceptSets& pred, const ConceptSets& gold,
                                               const FrequentSet& frequent) {
  auto filter = [&](const ConceptSets& in) {
    ConceptSets out;
    for (const auto& [doc, set] : in) {
      auto& kept = out[doc];
      for (const auto& c : set) {
        if (!frequent.contains(c)) kept.insert(c);
      }
    }
    return out;
  };
  return {filter(pred), filter(gold)};
}

}  // namespace phenotag
