#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace phenotag {

using ConceptId = std::string;

struct Concept {
  ConceptId id;
  std::string name;
  std::vector<std::string> synonyms;
  std::string definition;
  std::vector<ConceptId> parents;

  // Definition text used by the KG encoder; falls back to the name.
  const std::string& definition_or_name() const { return definition.empty() ? name : definition; }
};

// Is-a DAG restricted to the descendants of a root concept. The root is kept
// as a sentinel but is never annotatable. Immutable once built.
class OntologyGraph {
 public:
  OntologyGraph() = default;

  // Builds the graph from raw concepts. Only descendants of root_id are kept;
  // parents outside the kept set are pruned.
  // Throws ConfigError if root_id is absent, IntegrityError on an is-a cycle.
  static OntologyGraph from_concepts(std::vector<Concept> concepts, const ConceptId& root_id);

  const ConceptId& root_id() const { return root_id_; }
  bool contains(std::string_view id) const;
  bool is_annotatable(std::string_view id) const { return contains(id) && id != root_id_; }
  const Concept& concept_at(std::string_view id) const;

  // Annotatable ids (root excluded), ascending.
  const std::vector<ConceptId>& annotatable_ids() const { return annotatable_; }
  std::size_t size() const { return annotatable_.size(); }

  const std::vector<ConceptId>& parents(std::string_view id) const;
  const std::vector<ConceptId>& children(std::string_view id) const;

  // Transitive ancestors strictly below the root, excluding id itself.
  std::set<ConceptId> ancestors(std::string_view id) const;
  // Transitive descendants, excluding id itself.
  std::set<ConceptId> descendants(std::string_view id) const;
  // Direct parents and children, root excluded.
  std::set<ConceptId> neighbours(std::string_view id) const;

  // Shortest is-a distance from the root (root = 0).
  std::size_t depth(std::string_view id) const;
  // depth -> number of annotatable concepts at that depth.
  std::map<std::size_t, std::size_t> depth_histogram() const;

 private:
  ConceptId root_id_;
  std::map<ConceptId, Concept, std::less<>> concepts_;
  std::map<ConceptId, std::vector<ConceptId>, std::less<>> children_;
  std::map<ConceptId, std::size_t, std::less<>> depth_;
  std::vector<ConceptId> annotatable_;
};

// Parses the OBO 1.2 subset used here: [Term] stanzas with id, name, def,
// synonym, is_a and is_obsolete. Other tags and stanza kinds are ignored.
// Throws ParseError (with line number) on malformed stanzas.
std::vector<Concept> parse_obo_terms(std::istream& source);

OntologyGraph parse_obo(std::istream& source, const ConceptId& root_id);
OntologyGraph load_obo(const std::string& path, const ConceptId& root_id);

// Top-cap ids by descending count, ties by ascending id; zero counts dropped.
std::vector<ConceptId> compute_frequent_set(const OntologyGraph& graph,
                                            const std::map<ConceptId, std::size_t>& match_counts,
                                            std::size_t cap);

// Frequent concept list with O(1) index lookup, in the fixed order used by
// the concept-classifier head.
class FrequentSet {
 public:
  FrequentSet() = default;
  explicit FrequentSet(std::vector<ConceptId> ids);

  const std::vector<ConceptId>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }
  // Index in head order, or -1 if not frequent.
  long index_of(std::string_view id) const;
  const ConceptId& at(std::size_t i) const { return ids_.at(i); }

 private:
  std::vector<ConceptId> ids_;
  std::unordered_map<ConceptId, std::size_t> index_;
};

}  // namespace phenotag
