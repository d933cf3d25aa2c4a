#pragma once

#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "phenotag/corpus.hpp"
#include "phenotag/ontology.hpp"

namespace phenotag {

enum class Comparator { kLess, kLessEqual, kGreater, kGreaterEqual };

Comparator comparator_from_string(std::string_view text);
std::string_view to_string(Comparator c);

// "analyte value unit" with an abnormal-range predicate, e.g. hgb < 12 g/dl.
struct LabRule {
  std::string analyte;  // surface text, tokenized when matching
  Comparator comparator = Comparator::kLess;
  double threshold = 0.0;
  std::string unit;
  ConceptId concept_id;

  bool holds(double value) const;
};

// JSON array of {"analyte", "comparator", "threshold", "unit", "concept_id"}.
// When graph is given, every concept must be annotatable (ConfigError).
std::vector<LabRule> parse_lab_rules(std::istream& in, const OntologyGraph* graph = nullptr);
std::vector<LabRule> load_lab_rules(const std::string& path, const OntologyGraph* graph = nullptr);

// Scans for analyte tokens followed by a number (integer or "d . d") and the
// unit tokens. Rules are tried in file order; the first whose predicate holds
// annotates the whole pattern. An analyte followed within three tokens by its
// unit but without a parseable number is skipped with a warning.
std::vector<Annotation> numeric_surrogate(const TokenSequence& tokens, const std::vector<LabRule>& rules,
                                          std::vector<std::string>* warnings = nullptr);

// Throws ConfigError unless the template has exactly one {span}.
void validate_template(std::string_view tmpl);
std::vector<std::string> parse_templates(std::istream& in);
std::vector<std::string> load_templates(const std::string& path);

// Instantiates the first n templates; each document carries one silver
// annotation covering exactly the tokens of the inserted span.
std::vector<Document> generate_contexts(std::string_view span, const ConceptId& concept_id,
                                        const std::vector<std::string>& templates, std::size_t n,
                                        const std::string& id_prefix = "ctx");

struct SuffixRule {
  std::string strip;   // removed from the end of the last word (must match)
  std::string append;  // then appended
  bool single_word_only = true;
};

struct LexicalRules {
  std::vector<SuffixRule> suffixes;
  // Word-level replacements such as hypoplasia -> hypoplastic; used by the
  // reorder rule "A B" -> "B' As" when B has an entry.
  std::map<std::string, std::string> word_pairs;
  bool reorder_of = false;  // "X of Y" <-> "Y X"

  bool empty() const { return suffixes.empty() && word_pairs.empty() && !reorder_of; }
};

LexicalRules parse_lexical_rules(std::istream& in);
LexicalRules load_lexical_rules(const std::string& path);

// Variants of a surface form under the rule set, deduplicated in generation
// order and never containing the (normalized) input.
std::vector<std::string> lexical_variants(std::string_view surface, const LexicalRules& rules);

// Adds each new annotation unless it overlaps an existing one. Returns the
// number added.
std::size_t merge_annotations(std::vector<Annotation>& existing, const std::vector<Annotation>& added);

}  // namespace phenotag
