#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phenotag/ontology.hpp"
#include "phenotag/tokenizer.hpp"

namespace phenotag {

enum class AnnotationSource { kGold, kSilver, kPredicted, kAugmented };

std::string_view to_string(AnnotationSource source);
AnnotationSource annotation_source_from_string(std::string_view text);

// Token span [start_token, end_token) tagged with one concept.
struct Annotation {
  std::size_t start_token = 0;
  std::size_t end_token = 0;
  ConceptId concept_id;
  AnnotationSource source = AnnotationSource::kGold;

  std::size_t length() const { return end_token - start_token; }
  bool overlaps(const Annotation& other) const {
    return start_token < other.end_token && other.start_token < end_token;
  }
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Document {
  std::string id;
  std::string text;
  TokenSequence tokens;
  std::vector<Annotation> annotations;

  static Document from_text(std::string id, std::string text);
};

// Throws DataError when spans fall outside the token range or reference
// concepts that are not annotatable in the graph.
void validate_document(const Document& doc, const OntologyGraph* graph = nullptr);

// JSONL corpus I/O: {"id", "text", "annotations": [{"start_token",
// "end_token", "concept_id", "source"?}]}. Texts are tokenized on read.
std::vector<Document> read_corpus(std::istream& in, AnnotationSource default_source = AnnotationSource::kGold);
std::vector<Document> load_corpus(const std::string& path, AnnotationSource default_source = AnnotationSource::kGold);
void write_corpus(std::ostream& out, const std::vector<Document>& docs);
void save_corpus(const std::string& path, const std::vector<Document>& docs);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kUnkToken = "[UNK]";

  Vocabulary();
  // Rebuilds from an id-ordered token list whose first two entries are the
  // specials. Throws DataError on duplicates or missing specials.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int32_t id_of(std::string_view token) const;
  const std::string& token_of(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::int32_t> encode(const TokenSequence& tokens) const;
  std::vector<std::int32_t> encode(const std::vector<std::string>& tokens) const;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Tokens with corpus frequency >= min_count, ordered by descending frequency
// then token string.
Vocabulary build_vocabulary(const std::vector<Document>& docs, std::size_t min_count);
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_count);

// Token-indexed trie over tokenized concept names and synonyms.
class SurfaceMatcher {
 public:
  static constexpr std::size_t kMaxSurfaceTokens = 10;

  explicit SurfaceMatcher(const OntologyGraph& graph);
  // Adds one surface form; surfaces longer than kMaxSurfaceTokens are skipped.
  void add_surface(std::string_view surface, const ConceptId& concept_id);

  // Leftmost-longest non-overlapping matches; a surface shared by several
  // concepts resolves to the lowest id.
  std::vector<Annotation> match(const TokenSequence& tokens) const;
  std::size_t surface_count() const { return surfaces_; }

 private:
  struct Node {
    std::unordered_map<std::string, std::uint32_t> next;
    std::optional<ConceptId> concept_id;
  };
  std::vector<Node> nodes_;
  std::size_t surfaces_ = 0;
};

// Silver annotations by shallow matching (the Keyword baseline).
std::vector<Annotation> shallow_match(const Document& doc, const OntologyGraph& graph);

// Number of matched spans per concept over a corpus.
std::map<ConceptId, std::size_t> count_matches(const std::vector<Document>& docs);

struct TrainingSample {
  std::string doc_id;
  std::size_t offset = 0;  // first token index within the document
  std::vector<std::int32_t> token_ids;
  std::vector<std::uint8_t> relevance;
  std::vector<ConceptId> concepts;  // empty string = no concept
  bool augmented = false;           // drawn from an augmentation corpus
  std::size_t size() const { return token_ids.size(); }
};

struct Window {
  std::size_t begin;
  std::size_t end;
};

struct WindowPlan {
  std::vector<Window> windows;
  std::vector<Annotation> kept;     // spans fully inside one window
  std::vector<Annotation> dropped;  // spans longer than max_len or uncuttable
  std::vector<std::string> warnings;
};

// Splits [0, n_tokens) into windows of at most max_len tokens, moving each
// boundary left so no annotation span is cut.
WindowPlan plan_windows(std::size_t n_tokens, const std::vector<Annotation>& annotations, std::size_t max_len);

struct SampleSet {
  std::vector<TrainingSample> samples;
  std::vector<std::string> warnings;
};

SampleSet to_training_samples(const Document& doc, const Vocabulary& vocab, std::size_t max_len);

}  // namespace phenotag
