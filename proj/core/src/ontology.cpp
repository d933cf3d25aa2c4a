#include "phenotag/ontology.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <optional>

#include "phenotag/errors.hpp"

namespace phenotag {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_concept_id(std::string_view id) {
  const auto colon = id.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == id.size()) return false;
  for (char c : id.substr(0, colon)) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  for (char c : id.substr(colon + 1)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// Reads a leading "quoted string" with backslash escapes.
std::string parse_quoted(std::string_view value, std::size_t line) {
  value = trim(value);
  if (value.empty() || value.front() != '"') throw ParseError("expected quoted string", line);
  std::string out;
  for (std::size_t i = 1; i < value.size(); ++i) {
    const char c = value[i];
    if (c == '\\' && i + 1 < value.size()) {
      out.push_back(value[++i]);
    } else if (c == '"') {
      return out;
    } else {
      out.push_back(c);
    }
  }
  throw ParseError("unterminated quoted string", line);
}

std::string first_word(std::string_view value) {
  value = trim(value);
  const auto end = value.find_first_of(" \t!");
  return std::string(value.substr(0, end));
}

struct PendingTerm {
  Concept parsed;
  std::size_t line = 0;
  bool obsolete = false;
};

}  // namespace

std::vector<Concept> parse_obo_terms(std::istream& source) {
  std::vector<Concept> out;
  std::set<ConceptId> seen;
  std::optional<PendingTerm> term;
  bool in_other_stanza = false;

  auto flush = [&]() {
    if (!term) return;
    const auto& c = term->parsed;
    if (c.id.empty()) throw ParseError("[Term] stanza without id", term->line);
    if (c.name.empty()) throw ParseError("term " + c.id + " has no name", term->line);
    if (!seen.insert(c.id).second) throw ParseError("duplicate term id " + c.id, term->line);
    if (!term->obsolete) out.push_back(std::move(term->parsed));
    term.reset();
  };

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(source, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '!') continue;
    if (line.front() == '[') {
      flush();
      if (line == "[Term]") {
        term = PendingTerm{};
        term->line = line_no;
        in_other_stanza = false;
      } else if (line.back() == ']') {
        in_other_stanza = true;
      } else {
        throw ParseError("malformed stanza header", line_no);
      }
      continue;
    }
    if (!term) {
      // Header tags and non-Term stanzas are skipped.
      (void)in_other_stanza;
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw ParseError("expected 'tag: value' in term" +
                           (term->parsed.id.empty() ? std::string() : " " + term->parsed.id),
                       line_no);
    }
    const std::string_view tag = trim(line.substr(0, colon));
    const std::string_view value = trim(line.substr(colon + 1));
    auto& c = term->parsed;
    if (tag == "id") {
      c.id = first_word(value);
      if (!valid_concept_id(c.id)) throw ParseError("invalid concept id '" + c.id + "'", line_no);
    } else if (tag == "name") {
      c.name = std::string(value);
    } else if (tag == "def") {
      c.definition = parse_quoted(value, line_no);
    } else if (tag == "synonym") {
      auto text = parse_quoted(value, line_no);
      if (!text.empty()) c.synonyms.push_back(std::move(text));
    } else if (tag == "is_a") {
      auto parent = first_word(value);
      if (!valid_concept_id(parent)) throw ParseError("invalid is_a target '" + parent + "'", line_no);
      c.parents.push_back(std::move(parent));
    } else if (tag == "is_obsolete") {
      term->obsolete = (value == "true");
    }
  }
  flush();
  return out;
}

OntologyGraph OntologyGraph::from_concepts(std::vector<Concept> concepts, const ConceptId& root_id) {
  std::map<ConceptId, Concept, std::less<>> all;
  for (auto& c : concepts) {
    auto id = c.id;
    all.emplace(std::move(id), std::move(c));
  }
  if (!all.count(root_id)) throw ConfigError("root concept " + root_id + " not found in ontology");

  std::map<ConceptId, std::vector<ConceptId>, std::less<>> all_children;
  for (const auto& [id, c] : all) {
    for (const auto& p : c.parents) {
      if (all.count(p)) all_children[p].push_back(id);
    }
  }

  // Descendants of the root via reverse is-a edges.
  std::set<ConceptId> keep{root_id};
  std::deque<ConceptId> queue{root_id};
  while (!queue.empty()) {
    const auto id = queue.front();
    queue.pop_front();
    auto it = all_children.find(id);
    if (it == all_children.end()) continue;
    for (const auto& child : it->second) {
      if (keep.insert(child).second) queue.push_back(child);
    }
  }

  OntologyGraph g;
  g.root_id_ = root_id;
  for (const auto& id : keep) {
    Concept c = all.at(id);
    std::vector<ConceptId> parents;
    for (const auto& p : c.parents) {
      if (keep.count(p) && std::find(parents.begin(), parents.end(), p) == parents.end()) {
        parents.push_back(p);
      }
    }
    c.parents = std::move(parents);
    g.concepts_.emplace(id, std::move(c));
  }
  for (const auto& [id, c] : g.concepts_) {
    for (const auto& p : c.parents) g.children_[p].push_back(id);
  }
  for (auto& [id, kids] : g.children_) std::sort(kids.begin(), kids.end());

  // Cycle detection: iterative DFS over parent edges with colouring.
  {
    enum class Mark { kNone, kActive, kDone };
    std::map<ConceptId, Mark, std::less<>> mark;
    for (const auto& [start, unused] : g.concepts_) {
      if (mark[start] == Mark::kDone) continue;
      // stack of (node, next parent index)
      std::vector<std::pair<ConceptId, std::size_t>> stack{{start, 0}};
      mark[start] = Mark::kActive;
      while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& parents = g.concepts_.at(node).parents;
        if (next < parents.size()) {
          const ConceptId parent = parents[next++];
          if (mark[parent] == Mark::kActive) {
            std::string cycle = parent;
            bool in_cycle = false;
            for (const auto& [n, i] : stack) {
              if (n == parent) in_cycle = true;
              if (in_cycle && n != parent) cycle += " -> " + n;
            }
            cycle += " -> " + parent;
            throw IntegrityError("is-a cycle detected: " + cycle);
          }
          if (mark[parent] == Mark::kNone) {
            mark[parent] = Mark::kActive;
            stack.emplace_back(parent, 0);
          }
        } else {
          mark[node] = Mark::kDone;
          stack.pop_back();
        }
      }
    }
  }

  // Depth as shortest distance from the root.
  g.depth_[root_id] = 0;
  queue = {root_id};
  while (!queue.empty()) {
    const auto id = queue.front();
    queue.pop_front();
    const auto d = g.depth_.at(id);
    for (const auto& child : g.children(id)) {
      if (!g.depth_.count(child)) {
        g.depth_[child] = d + 1;
        queue.push_back(child);
      }
    }
  }

  for (const auto& [id, unused] : g.concepts_) {
    if (id != root_id) g.annotatable_.push_back(id);
  }
  return g;
}

bool OntologyGraph::contains(std::string_view id) const { return concepts_.find(id) != concepts_.end(); }

const Concept& OntologyGraph::concept_at(std::string_view id) const {
  auto it = concepts_.find(id);
  if (it == concepts_.end()) throw LookupError("unknown concept " + std::string(id));
  return it->second;
}

const std::vector<ConceptId>& OntologyGraph::parents(std::string_view id) const {
  return concept_at(id).parents;
}

const std::vector<ConceptId>& OntologyGraph::children(std::string_view id) const {
  static const std::vector<ConceptId> kNone;
  concept_at(id);
  auto it = children_.find(id);
  return it == children_.end() ? kNone : it->second;
}

std::set<ConceptId> OntologyGraph::ancestors(std::string_view id) const {
  std::set<ConceptId> out;
  std::deque<ConceptId> queue(parents(id).begin(), parents(id).end());
  while (!queue.empty()) {
    auto p = std::move(queue.front());
    queue.pop_front();
    if (p == root_id_ || !out.insert(p).second) continue;
    for (const auto& pp : parents(p)) queue.push_back(pp);
  }
  return out;
}

std::set<ConceptId> OntologyGraph::descendants(std::string_view id) const {
  std::set<ConceptId> out;
  std::deque<ConceptId> queue(children(id).begin(), children(id).end());
  while (!queue.empty()) {
    auto c = std::move(queue.front());
    queue.pop_front();
    if (!out.insert(c).second) continue;
    for (const auto& cc : children(c)) queue.push_back(cc);
  }
  return out;
}

std::set<ConceptId> OntologyGraph::neighbours(std::string_view id) const {
  std::set<ConceptId> out;
  for (const auto& p : parents(id)) {
    if (p != root_id_) out.insert(p);
  }
  for (const auto& c : children(id)) out.insert(c);
  return out;
}

std::size_t OntologyGraph::depth(std::string_view id) const {
  auto it = depth_.find(id);
  if (it == depth_.end()) throw LookupError("unknown concept " + std::string(id));
  return it->second;
}

std::map<std::size_t, std::size_t> OntologyGraph::depth_histogram() const {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& id : annotatable_) ++hist[depth(id)];
  return hist;
}

OntologyGraph parse_obo(std::istream& source, const ConceptId& root_id) {
  return OntologyGraph::from_concepts(parse_obo_terms(source), root_id);
}

OntologyGraph load_obo(const std::string& path, const ConceptId& root_id) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open ontology file " + path);
  return parse_obo(in, root_id);
}

std::vector<ConceptId> compute_frequent_set(const OntologyGraph& graph,
                                            const std::map<ConceptId, std::size_t>& match_counts,
                                            std::size_t cap) {
  std::vector<std::pair<ConceptId, std::size_t>> ranked;
  for (const auto& [id, count] : match_counts) {
    if (count > 0 && graph.is_annotatable(id)) ranked.emplace_back(id, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<ConceptId> out;
  out.reserve(ranked.size());
  for (auto& [id, count] : ranked) out.push_back(std::move(id));
  return out;
}

FrequentSet::FrequentSet(std::vector<ConceptId> ids) : ids_(std::move(ids)) {
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
}

long FrequentSet::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

}  // namespace phenotag
