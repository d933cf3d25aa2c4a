#include "phenotag/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "phenotag/errors.hpp"
#include "phenotag/tokenizer.hpp"

namespace phenotag {

std::string PseudoWords::next(std::size_t min_syllables, std::size_t max_syllables) {
  static constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                                 "s", "t", "v", "z", "br", "tr", "st", "pl", "gr", "ch"};
  static constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const auto syllables = min_syllables + rng_.below(max_syllables - min_syllables + 1);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng_.below(std::size(kOnsets))];
      w += kVowels[rng_.below(std::size(kVowels))];
    }
    if (rng_.below(2)) w += "n";
    if (used_.insert(w).second) return w;
  }
  throw UsageError("pseudo-word space exhausted");
}

namespace {

std::string concept_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "HP:%07zu", 1000000 + i);
  return buf;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

Concept root_concept() {
  Concept root;
  root.id = kSyntheticRoot;
  root.name = "phenotypic abnormality";
  return root;
}

}  // namespace

std::vector<Concept> generate_tree_ontology(const TreeOntologyConfig& cfg) {
  if (cfg.min_definition_words == 0 || cfg.min_definition_words > cfg.max_definition_words) {
    throw ConfigError("definition word range is empty");
  }
  Rng rng(cfg.seed);
  PseudoWords words(cfg.seed ^ 0x5eed5eedULL);
  std::vector<std::string> vocabulary;
  for (std::size_t i = 0; i < cfg.definition_vocabulary; ++i) vocabulary.push_back(words.next());

  std::vector<Concept> out{root_concept()};
  for (std::size_t i = 1; i <= cfg.concepts; ++i) {
    Concept c;
    c.id = concept_id(i);
    c.name = words.next();
    const auto len = cfg.min_definition_words + rng.below(cfg.max_definition_words - cfg.min_definition_words + 1);
    std::vector<std::string> def;
    for (std::size_t k = 0; k < len; ++k) def.push_back(vocabulary[rng.below(vocabulary.size())]);
    c.definition = join(def);
    c.parents.push_back(i <= cfg.root_children ? std::string(kSyntheticRoot) : concept_id(1 + rng.below(i - 1)));
    out.push_back(std::move(c));
  }
  return out;
}

void write_obo(std::ostream& out, const std::vector<Concept>& concepts) {
  out << "format-version: 1.2\nontology: synthetic\n";
  for (const auto& c : concepts) {
    out << "\n[Term]\nid: " << c.id << "\nname: " << c.name << "\n";
    if (!c.definition.empty()) out << "def: \"" << c.definition << "\" []\n";
    for (const auto& s : c.synonyms) out << "synonym: \"" << s << "\" EXACT []\n";
    for (const auto& p : c.parents) out << "is_a: " << p << "\n";
  }
}

namespace {

struct Frame {
  const char* before;   // text before the first cue
  const char* between;  // between surface and second cue
  const char* after;
};

// "<before> <cue> <surface> <between> <cue> <after>"
constexpr Frame kFrames[] = {
    {"patient presented with", "", "today ."},
    {"on exam there was", "and", "noted ."},
    {"", "", "was reported by the family ."},
    {"history of", "with", "since admission ."},
    {"she complains of", "and", "over the past week ."},
};

constexpr const char* kEmptyFrames[] = {
    "vitals were stable and {f} {g} unchanged .",
    "plan to continue {f} and {g} tomorrow .",
    "discussed {f} with the {g} team .",
};

struct ConceptProfile {
  std::vector<std::string> cues;
  double weight = 0.0;
};

void replace_all(std::string& s, const std::string& key, const std::string& value) {
  for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size())) {
    s.replace(pos, key.size(), value);
  }
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticCorpusConfig& cfg) {
  if (cfg.concepts == 0) throw ConfigError("synthetic corpus needs at least one concept");
  if (cfg.alias_rates.empty()) throw ConfigError("alias_rates must not be empty");
  if (cfg.cue_words < 2) throw ConfigError("cue_words must be >= 2");
  if (cfg.max_sentences == 0) throw ConfigError("max_sentences must be >= 1");
  Rng rng(cfg.seed);
  PseudoWords words(cfg.seed ^ 0xc0ffeeULL);

  SyntheticCorpus corpus;
  corpus.concepts.push_back(root_concept());
  std::vector<ConceptProfile> profiles(cfg.concepts + 1);
  for (std::size_t i = 1; i <= cfg.concepts; ++i) {
    Concept c;
    c.id = concept_id(i);
    c.name = words.next();
    if (rng.uniform() < cfg.multiword_name_rate) c.name += " " + words.next();
    c.parents.push_back(i <= cfg.root_children ? std::string(kSyntheticRoot) : concept_id(1 + rng.below(i - 1)));
    for (std::size_t k = 0; k < cfg.cue_words; ++k) profiles[i].cues.push_back(words.next());
    corpus.alias[c.id] = words.next();
    corpus.concepts.push_back(std::move(c));
  }
  for (std::size_t i = 1; i <= cfg.concepts; ++i) {
    auto& c = corpus.concepts[i];
    std::vector<std::string> def = profiles[i].cues;
    const auto& parent = c.parents.front();
    if (parent != kSyntheticRoot) {
      const auto p = static_cast<std::size_t>(std::stoul(parent.substr(3))) - 1000000;
      def.push_back(profiles[p].cues.front());
    }
    c.definition = join(def);
  }
  std::vector<std::string> fillers;
  for (std::size_t i = 0; i < cfg.filler_words; ++i) fillers.push_back(words.next());

  // Zipf-like popularity over a random ranking of the concepts.
  std::vector<std::size_t> ranking(cfg.concepts);
  for (std::size_t i = 0; i < cfg.concepts; ++i) ranking[i] = i + 1;
  rng.shuffle(ranking);
  std::vector<double> weights(cfg.concepts + 1, 0.0);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    weights[ranking[r]] = 1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
  }
  const DiscreteSampler pick_concept(weights);

  auto make_doc = [&](const std::string& id) {
    const double alias_rate = cfg.alias_rates[rng.below(cfg.alias_rates.size())];
    const auto sentences = 1 + rng.below(cfg.max_sentences);
    std::string text;
    struct Pending {
      std::size_t begin, end;
      ConceptId concept_id;
    };
    std::vector<Pending> pending;
    for (std::size_t s = 0; s < sentences; ++s) {
      if (!text.empty()) text += ' ';
      const bool must_mention = pending.size() + (sentences - s) <= cfg.min_concept_sentences;
      if (!must_mention && rng.uniform() < cfg.empty_sentence_rate) {
        std::string sentence = kEmptyFrames[rng.below(std::size(kEmptyFrames))];
        replace_all(sentence, "{f}", fillers[rng.below(fillers.size())]);
        replace_all(sentence, "{g}", fillers[rng.below(fillers.size())]);
        text += sentence;
        continue;
      }
      const auto ci = pick_concept(rng);
      const auto& c = corpus.concepts[ci];
      const auto& cues = profiles[ci].cues;
      const auto a = rng.below(cues.size());
      auto b = rng.below(cues.size() - 1);
      if (b >= a) ++b;
      const auto surface = rng.uniform() < alias_rate ? corpus.alias[c.id] : c.name;
      const auto& frame = kFrames[rng.below(std::size(kFrames))];
      if (*frame.before) text += std::string(frame.before) + " ";
      text += cues[a] + " ";
      const auto begin = text.size();
      text += surface;
      pending.push_back({begin, text.size(), c.id});
      text += " ";
      if (*frame.between) text += std::string(frame.between) + " ";
      text += cues[b] + " " + frame.after;
    }
    auto doc = Document::from_text(id, text);
    for (const auto& p : pending) {
      std::size_t first = doc.tokens.size(), last = 0;
      for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
        if (doc.tokens[t].begin < p.end && doc.tokens[t].end > p.begin) {
          first = std::min(first, t);
          last = t + 1;
        }
      }
      doc.annotations.push_back({first, last, p.concept_id, AnnotationSource::kGold});
    }
    return doc;
  };

  auto make_split = [&](const std::string& prefix, std::size_t n) {
    std::vector<Document> docs;
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%s-%04zu", prefix.c_str(), i);
      docs.push_back(make_doc(buf));
    }
    return docs;
  };
  corpus.train = make_split("train", cfg.train_docs);
  corpus.validation = make_split("val", cfg.validation_docs);
  corpus.test = make_split("test", cfg.test_docs);
  return corpus;
}

std::vector<Document> silver_copy(const std::vector<Document>& docs, const OntologyGraph& graph) {
  std::vector<Document> out = docs;
  for (auto& d : out) d.annotations = shallow_match(d, graph);
  return out;
}

std::vector<AliasOccurrence> alias_occurrences(const SyntheticCorpus& corpus, const std::vector<Document>& docs) {
  std::vector<AliasOccurrence> out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& a : docs[d].annotations) {
      const auto it = corpus.alias.find(a.concept_id);
      if (it == corpus.alias.end()) continue;
      std::vector<std::string> covered;
      for (std::size_t t = a.start_token; t < a.end_token; ++t) covered.push_back(docs[d].tokens[t].text);
      if (join(covered) == normalize_surface(it->second)) out.push_back({docs[d].id, d, a});
    }
  }
  return out;
}

}  // namespace phenotag
