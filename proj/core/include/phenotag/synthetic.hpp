#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "phenotag/corpus.hpp"
#include "phenotag/ontology.hpp"
#include "phenotag/random.hpp"

namespace phenotag {

inline constexpr const char* kSyntheticRoot = "HP:0000118";

// Pronounceable pseudo-words, never repeated within one generator.
class PseudoWords {
 public:
  explicit PseudoWords(std::uint64_t seed) : rng_(seed) {}
  std::string next(std::size_t min_syllables = 2, std::size_t max_syllables = 3);

 private:
  Rng rng_;
  std::set<std::string> used_;
};

struct TreeOntologyConfig {
  std::size_t concepts = 50;  // annotatable concepts below the root
  std::size_t root_children = 3;
  std::size_t min_definition_words = 3;
  std::size_t max_definition_words = 8;
  std::size_t definition_vocabulary = 200;
  std::uint64_t seed = 0;
};

// Random tree under kSyntheticRoot: the first root_children concepts hang
// off the root, every later concept picks a uniformly random earlier concept
// as its parent. Definitions are random pseudo-word sequences. The returned
// list starts with the root.
std::vector<Concept> generate_tree_ontology(const TreeOntologyConfig& cfg);

void write_obo(std::ostream& out, const std::vector<Concept>& concepts);

struct SyntheticCorpusConfig {
  std::size_t concepts = 60;
  std::size_t root_children = 4;
  double multiword_name_rate = 0.3;
  std::size_t cue_words = 3;        // context words tied to each concept
  std::size_t filler_words = 40;    // context words shared by all concepts
  double zipf_exponent = 1.0;
  std::size_t train_docs = 600;
  std::size_t validation_docs = 100;
  std::size_t test_docs = 200;
  std::size_t max_sentences = 3;
  double empty_sentence_rate = 0.2;  // sentences without any concept
  std::size_t min_concept_sentences = 1;  // per document, capped by its sentence count
  // Each document draws its alias rate uniformly from this list, so some
  // documents are nearly keyword-matchable and others are mostly aliases.
  std::vector<double> alias_rates{0.0, 0.2, 0.6};
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  std::vector<Concept> concepts;           // root first
  std::map<ConceptId, std::string> alias;  // contextual synonym per concept, never in the ontology
  std::vector<Document> train;             // gold annotations (canonical forms and aliases)
  std::vector<Document> validation;
  std::vector<Document> test;
};

// Documents mention concepts through their canonical name or their alias in
// the same concept-specific contexts.
SyntheticCorpus generate_corpus(const SyntheticCorpusConfig& cfg);

// Copies of docs whose annotations are replaced by keyword matches.
std::vector<Document> silver_copy(const std::vector<Document>& docs, const OntologyGraph& graph);

// Gold annotations whose covered text is the concept's alias.
struct AliasOccurrence {
  std::string doc_id;
  std::size_t doc_index;
  Annotation annotation;
};
std::vector<AliasOccurrence> alias_occurrences(const SyntheticCorpus& corpus, const std::vector<Document>& docs);

}  // namespace phenotag
