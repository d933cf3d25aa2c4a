#include "phenotag/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "phenotag/errors.hpp"

namespace phenotag {

using nlohmann::ordered_json;

std::string_view to_string(AnnotationSource source) {
  switch (source) {
    case AnnotationSource::kGold: return "gold";
    case AnnotationSource::kSilver: return "silver";
    case AnnotationSource::kPredicted: return "predicted";
    case AnnotationSource::kAugmented: return "augmented";
  }
  return "gold";
}

AnnotationSource annotation_source_from_string(std::string_view text) {
  if (text == "gold") return AnnotationSource::kGold;
  if (text == "silver") return AnnotationSource::kSilver;
  if (text == "predicted") return AnnotationSource::kPredicted;
  if (text == "augmented") return AnnotationSource::kAugmented;
  throw DataError("unknown annotation source '" + std::string(text) + "'");
}

Document Document::from_text(std::string id, std::string text) {
  Document doc;
  doc.id = std::move(id);
  doc.text = std::move(text);
  doc.tokens = tokenize(doc.text);
  return doc;
}

void validate_document(const Document& doc, const OntologyGraph* graph) {
  const auto n = doc.tokens.size();
  for (const auto& a : doc.annotations) {
    if (!(a.start_token < a.end_token && a.end_token <= n)) {
      throw DataError("document " + doc.id + ": span [" + std::to_string(a.start_token) + ", " +
                      std::to_string(a.end_token) + ") outside " + std::to_string(n) + " tokens");
    }
    if (graph && !graph->is_annotatable(a.concept_id)) {
      throw DataError("document " + doc.id + ": unknown concept " + a.concept_id);
    }
  }
}

std::vector<Document> read_corpus(std::istream& in, AnnotationSource default_source) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = ordered_json::parse(line);
      Document doc = Document::from_text(j.at("id").get<std::string>(), j.at("text").get<std::string>());
      if (auto it = j.find("annotations"); it != j.end()) {
        for (const auto& a : *it) {
          Annotation ann;
          ann.start_token = a.at("start_token").get<std::size_t>();
          ann.end_token = a.at("end_token").get<std::size_t>();
          ann.concept_id = a.at("concept_id").get<std::string>();
          ann.source = a.contains("source") ? annotation_source_from_string(a.at("source").get<std::string>())
                                            : default_source;
          doc.annotations.push_back(std::move(ann));
        }
      }
      validate_document(doc);
      docs.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid corpus record: ") + e.what(), line_no);
    } catch (const DataError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return docs;
}

std::vector<Document> load_corpus(const std::string& path, AnnotationSource default_source) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path);
  return read_corpus(in, default_source);
}

void write_corpus(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& doc : docs) {
    ordered_json j;
    j["id"] = doc.id;
    j["text"] = doc.text;
    auto anns = ordered_json::array();
    for (const auto& a : doc.annotations) {
      anns.push_back({{"start_token", a.start_token},
                      {"end_token", a.end_token},
                      {"concept_id", a.concept_id},
                      {"source", to_string(a.source)}});
    }
    j["annotations"] = std::move(anns);
    out << j.dump() << '\n';
  }
}

void save_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  write_corpus(out, docs);
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

void Vocabulary::add(std::string token) {
  const auto id = static_cast<std::int32_t>(tokens_.size());
  if (!index_.emplace(token, id).second) throw DataError("duplicate vocabulary entry '" + token + "'");
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw DataError("vocabulary must start with [PAD] and [UNK]");
  }
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) v.add(std::move(tokens[i]));
  return v;
}

std::int32_t Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::int32_t> Vocabulary::encode(const TokenSequence& tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t.text));
  return ids;
}

std::vector<std::int32_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_count) {
  if (min_count < 1) throw UsageError("min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& list : token_lists) {
    for (const auto& t : list) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && tok != Vocabulary::kPadToken && tok != Vocabulary::kUnkToken) {
      ranked.emplace_back(tok, n);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens{std::string(Vocabulary::kPadToken), std::string(Vocabulary::kUnkToken)};
  for (auto& [tok, n] : ranked) tokens.push_back(std::move(tok));
  return Vocabulary::from_tokens(std::move(tokens));
}

Vocabulary build_vocabulary(const std::vector<Document>& docs, std::size_t min_count) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(docs.size());
  for (const auto& d : docs) lists.push_back(token_texts(d.tokens));
  return build_vocabulary(lists, min_count);
}

std::map<ConceptId, std::size_t> count_matches(const std::vector<Document>& docs) {
  std::map<ConceptId, std::size_t> counts;
  for (const auto& d : docs) {
    for (const auto& a : d.annotations) ++counts[a.concept_id];
  }
  return counts;
}

WindowPlan plan_windows(std::size_t n_tokens, const std::vector<Annotation>& annotations, std::size_t max_len) {
  if (max_len < 2) throw UsageError("max_len must be >= 2");
  WindowPlan plan;
  std::vector<Annotation> candidates;
  for (const auto& a : annotations) {
    if (a.length() > max_len) {
      plan.dropped.push_back(a);
      plan.warnings.push_back("span [" + std::to_string(a.start_token) + ", " + std::to_string(a.end_token) +
                              ") of " + a.concept_id + " longer than max_len " + std::to_string(max_len) +
                              "; dropped");
    } else {
      candidates.push_back(a);
    }
  }

  // forbidden[b] is true when a boundary at b would cut a span.
  std::vector<bool> forbidden(n_tokens + 1, false);
  for (const auto& a : candidates) {
    for (std::size_t b = a.start_token + 1; b < a.end_token && b <= n_tokens; ++b) forbidden[b] = true;
  }

  std::size_t pos = 0;
  while (pos < n_tokens) {
    std::size_t end = std::min(n_tokens, pos + max_len);
    if (end < n_tokens) {
      std::size_t b = end;
      while (b > pos && forbidden[b]) --b;
      if (b > pos) end = b;
    }
    plan.windows.push_back({pos, end});
    pos = end;
  }

  for (const auto& a : candidates) {
    const bool inside = std::any_of(plan.windows.begin(), plan.windows.end(), [&](const Window& w) {
      return a.start_token >= w.begin && a.end_token <= w.end;
    });
    if (inside) {
      plan.kept.push_back(a);
    } else {
      plan.dropped.push_back(a);
      plan.warnings.push_back("span [" + std::to_string(a.start_token) + ", " + std::to_string(a.end_token) +
                              ") of " + a.concept_id + " cannot be kept in one window; dropped");
    }
  }
  return plan;
}

SampleSet to_training_samples(const Document& doc, const Vocabulary& vocab, std::size_t max_len) {
  SampleSet out;
  auto plan = plan_windows(doc.tokens.size(), doc.annotations, max_len);
  out.warnings = std::move(plan.warnings);
  for (auto& w : out.warnings) w = "document " + doc.id + ": " + w;

  std::vector<std::uint8_t> relevance(doc.tokens.size(), 0);
  std::vector<ConceptId> concepts(doc.tokens.size());
  auto kept = plan.kept;
  std::stable_sort(kept.begin(), kept.end(), [](const Annotation& a, const Annotation& b) {
    return a.start_token != b.start_token ? a.start_token < b.start_token : a.length() > b.length();
  });
  for (const auto& a : kept) {
    for (std::size_t i = a.start_token; i < a.end_token; ++i) {
      if (relevance[i]) continue;
      relevance[i] = 1;
      concepts[i] = a.concept_id;
    }
  }

  const auto ids = vocab.encode(doc.tokens);
  for (const auto& w : plan.windows) {
    TrainingSample s;
    s.doc_id = doc.id;
    s.offset = w.begin;
    s.token_ids.assign(ids.begin() + static_cast<long>(w.begin), ids.begin() + static_cast<long>(w.end));
    s.relevance.assign(relevance.begin() + static_cast<long>(w.begin), relevance.begin() + static_cast<long>(w.end));
    s.concepts.assign(concepts.begin() + static_cast<long>(w.begin), concepts.begin() + static_cast<long>(w.end));
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace phenotag
