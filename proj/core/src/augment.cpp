#include "phenotag/augment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "phenotag/errors.hpp"
#include "phenotag/tokenizer.hpp"

namespace phenotag {

Comparator comparator_from_string(std::string_view text) {
  if (text == "<") return Comparator::kLess;
  if (text == "<=") return Comparator::kLessEqual;
  if (text == ">") return Comparator::kGreater;
  if (text == ">=") return Comparator::kGreaterEqual;
  throw ConfigError("unknown comparator '" + std::string(text) + "' (expected <, <=, > or >=)");
}

std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::kLess:
      return "<";
    case Comparator::kLessEqual:
      return "<=";
    case Comparator::kGreater:
      return ">";
    case Comparator::kGreaterEqual:
      return ">=";
  }
  return "<";
}

bool LabRule::holds(double value) const {
  switch (comparator) {
    case Comparator::kLess:
      return value < threshold;
    case Comparator::kLessEqual:
      return value <= threshold;
    case Comparator::kGreater:
      return value > threshold;
    case Comparator::kGreaterEqual:
      return value >= threshold;
  }
  return false;
}

std::vector<LabRule> parse_lab_rules(std::istream& in, const OntologyGraph* graph) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("lab rules are not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("lab rules must be a JSON array");
  std::vector<LabRule> rules;
  for (const auto& item : j) {
    LabRule r;
    try {
      r.analyte = item.at("analyte").get<std::string>();
      r.comparator = comparator_from_string(item.at("comparator").get<std::string>());
      r.threshold = item.at("threshold").get<double>();
      r.unit = item.at("unit").get<std::string>();
      r.concept_id = item.at("concept_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("invalid lab rule " + item.dump() + ": " + e.what());
    }
    if (tokenize(r.analyte).empty() || tokenize(r.unit).empty()) {
      throw ConfigError("lab rule " + item.dump() + " needs a non-empty analyte and unit");
    }
    if (graph && !graph->is_annotatable(r.concept_id)) {
      throw ConfigError("lab rule concept " + r.concept_id + " is not in the ontology");
    }
    rules.push_back(std::move(r));
  }
  return rules;
}

std::vector<LabRule> load_lab_rules(const std::string& path, const OntologyGraph* graph) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lab rules file " + path);
  return parse_lab_rules(in, graph);
}

namespace {

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool matches_at(const TokenSequence& tokens, std::size_t pos, const std::vector<std::string>& pattern) {
  if (pattern.empty() || pos + pattern.size() > tokens.size()) return false;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (tokens[pos + i].text != pattern[i]) return false;
  }
  return true;
}

}  // namespace

std::vector<Annotation> numeric_surrogate(const TokenSequence& tokens, const std::vector<LabRule>& rules,
                                          std::vector<std::string>* warnings) {
  std::vector<std::vector<std::string>> analytes, units;
  for (const auto& r : rules) {
    analytes.push_back(token_texts(tokenize(r.analyte)));
    units.push_back(token_texts(tokenize(r.unit)));
  }
  std::vector<Annotation> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t advance = 1;
    for (std::size_t r = 0; r < rules.size(); ++r) {
      if (!matches_at(tokens, i, analytes[r])) continue;
      const std::size_t j = i + analytes[r].size();
      std::size_t k = j;
      std::string number;
      if (k < tokens.size() && is_number(tokens[k].text)) {
        number = tokens[k].text;
        ++k;
        if (k + 1 < tokens.size() && tokens[k].text == "." && is_number(tokens[k + 1].text)) {
          number += "." + tokens[k + 1].text;
          k += 2;
        }
      }
      if (number.empty()) {
        // Same analyte, unit nearby, no readable value.
        bool unit_nearby = false;
        for (std::size_t q = r; q < rules.size() && !unit_nearby; ++q) {
          if (analytes[q] != analytes[r]) continue;
          for (std::size_t off = 1; off <= 3 && !unit_nearby; ++off) unit_nearby = matches_at(tokens, j + off, units[q]);
        }
        if (unit_nearby && warnings) {
          warnings->push_back("unparseable value after '" + rules[r].analyte + "' at token " + std::to_string(j));
        }
        break;
      }
      const double value = std::stod(number);
      bool pattern_found = false;
      for (std::size_t q = r; q < rules.size(); ++q) {
        if (analytes[q] != analytes[r] || !matches_at(tokens, k, units[q])) continue;
        pattern_found = true;
        advance = k + units[q].size() - i;
        if (rules[q].holds(value)) {
          out.push_back({i, k + units[q].size(), rules[q].concept_id, AnnotationSource::kAugmented});
          break;
        }
      }
      if (pattern_found) break;
    }
    i += advance;
  }
  return out;
}

void validate_template(std::string_view tmpl) {
  const auto first = tmpl.find("{span}");
  if (first == std::string_view::npos) {
    throw ConfigError("context template has no {span} placeholder: " + std::string(tmpl));
  }
  if (tmpl.find("{span}", first + 1) != std::string_view::npos) {
    throw ConfigError("context template has more than one {span} placeholder: " + std::string(tmpl));
  }
}

std::vector<std::string> parse_templates(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    validate_template(line);
    out.push_back(line);
  }
  return out;
}

std::vector<std::string> load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open templates file " + path);
  return parse_templates(in);
}

std::vector<Document> generate_contexts(std::string_view span, const ConceptId& concept_id,
                                        const std::vector<std::string>& templates, std::size_t n,
                                        const std::string& id_prefix) {
  if (n > templates.size()) {
    throw ConfigError("requested " + std::to_string(n) + " contexts but only " + std::to_string(templates.size()) +
                      " templates exist");
  }
  if (tokenize(span).empty()) throw UsageError("context span is empty");
  std::vector<Document> out;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& tmpl = templates[t];
    validate_template(tmpl);
    const auto pos = tmpl.find("{span}");
    std::string text = tmpl.substr(0, pos);
    const std::size_t span_begin = text.size();
    text += span;
    const std::size_t span_end = text.size();
    text += tmpl.substr(pos + 6);
    auto doc = Document::from_text(id_prefix + "-" + std::to_string(t), std::move(text));
    std::size_t first = doc.tokens.size(), last = 0;
    for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
      if (doc.tokens[i].begin < span_end && doc.tokens[i].end > span_begin) {
        first = std::min(first, i);
        last = i + 1;
      }
    }
    doc.annotations.push_back({first, last, concept_id, AnnotationSource::kSilver});
    out.push_back(std::move(doc));
  }
  return out;
}

LexicalRules parse_lexical_rules(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("lexical rules are not valid JSON: ") + e.what());
  }
  LexicalRules rules;
  try {
    if (j.contains("suffixes")) {
      for (const auto& s : j.at("suffixes")) {
        SuffixRule r;
        r.strip = s.value("strip", std::string());
        r.append = s.at("append").get<std::string>();
        r.single_word_only = s.value("single_word_only", true);
        rules.suffixes.push_back(std::move(r));
      }
    }
    if (j.contains("word_pairs")) {
      for (const auto& [from, to] : j.at("word_pairs").items()) {
        rules.word_pairs[normalize_surface(from)] = normalize_surface(to.get<std::string>());
      }
    }
    rules.reorder_of = j.value("reorder_of", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid lexical rules: ") + e.what());
  }
  return rules;
}

LexicalRules load_lexical_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexical rules file " + path);
  return parse_lexical_rules(in);
}

namespace {

std::string join(const std::vector<std::string>& words, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string plural(const std::string& w) { return ends_with(w, "s") ? w : w + "s"; }

std::string singular(const std::string& w) { return w.size() > 1 && ends_with(w, "s") ? w.substr(0, w.size() - 1) : w; }

}  // namespace

std::vector<std::string> lexical_variants(std::string_view surface, const LexicalRules& rules) {
  const auto norm = normalize_surface(surface);
  if (norm.empty() || rules.empty()) return {};
  std::vector<std::string> words;
  {
    std::istringstream ss(norm);
    for (std::string w; ss >> w;) words.push_back(w);
  }
  const std::size_t n = words.size();
  std::vector<std::string> candidates;

  for (const auto& rule : rules.suffixes) {
    if (rule.single_word_only && n != 1) continue;
    const auto& last = words.back();
    if (!ends_with(last, rule.strip)) continue;
    const auto base = last.substr(0, last.size() - rule.strip.size());
    if (base.empty()) continue;
    candidates.push_back(join(words, 0, n - 1) + (n > 1 ? " " : "") + base + rule.append);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto it = rules.word_pairs.find(words[i]);
    if (it == rules.word_pairs.end()) continue;
    auto replaced = words;
    replaced[i] = it->second;
    candidates.push_back(join(replaced, 0, n));
  }

  if (n == 2) {
    // "nail hypoplasia" -> "hypoplastic nails" / "hypoplastic nail"
    if (const auto it = rules.word_pairs.find(words[1]); it != rules.word_pairs.end()) {
      candidates.push_back(it->second + " " + plural(words[0]));
      candidates.push_back(it->second + " " + words[0]);
    }
    // and back: "hypoplastic nails" -> "nail hypoplasia"
    for (const auto& [from, to] : rules.word_pairs) {
      if (to == words[0]) candidates.push_back(singular(words[1]) + " " + from);
    }
  }

  if (rules.reorder_of) {
    const auto of = std::find(words.begin(), words.end(), "of");
    if (of != words.end() && of != words.begin() && of + 1 != words.end()) {
      const auto p = static_cast<std::size_t>(of - words.begin());
      candidates.push_back(join(words, p + 1, n) + " " + join(words, 0, p));
    } else if (n == 2) {
      candidates.push_back(words[1] + " of " + words[0]);
    }
  }

  std::vector<std::string> out;
  std::set<std::string> seen{norm};
  for (auto& c : candidates) {
    auto key = normalize_surface(c);
    if (key.empty() || !seen.insert(key).second) continue;
    out.push_back(std::move(key));
  }
  return out;
}

std::size_t merge_annotations(std::vector<Annotation>& existing, const std::vector<Annotation>& added) {
  std::size_t count = 0;
  for (const auto& a : added) {
    const bool clash = std::any_of(existing.begin(), existing.end(), [&](const Annotation& e) { return e.overlaps(a); });
    if (clash) continue;
    existing.push_back(a);
    ++count;
  }
  std::sort(existing.begin(), existing.end(), [](const Annotation& x, const Annotation& y) {
    return x.start_token != y.start_token ? x.start_token < y.start_token : x.end_token < y.end_token;
  });
  return count;
}

}  // namespace phenotag
