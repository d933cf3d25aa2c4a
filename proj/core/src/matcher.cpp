#include "phenotag/corpus.hpp"

namespace phenotag {

SurfaceMatcher::SurfaceMatcher(const OntologyGraph& graph) : nodes_(1) {
  for (const auto& id : graph.annotatable_ids()) {
    const auto& c = graph.concept_at(id);
    add_surface(c.name, id);
    for (const auto& s : c.synonyms) add_surface(s, id);
  }
}

void SurfaceMatcher::add_surface(std::string_view surface, const ConceptId& concept_id) {
  const auto tokens = tokenize(surface);
  if (tokens.empty() || tokens.size() > kMaxSurfaceTokens) return;
  std::uint32_t node = 0;
  for (const auto& t : tokens) {
    auto it = nodes_[node].next.find(t.text);
    if (it == nodes_[node].next.end()) {
      const auto child = static_cast<std::uint32_t>(nodes_.size());
      nodes_[node].next.emplace(t.text, child);
      nodes_.emplace_back();
      node = child;
    } else {
      node = it->second;
    }
  }
  auto& slot = nodes_[node].concept_id;
  if (!slot || concept_id < *slot) slot = concept_id;
  ++surfaces_;
}

std::vector<Annotation> SurfaceMatcher::match(const TokenSequence& tokens) const {
  std::vector<Annotation> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::uint32_t node = 0;
    std::size_t best_len = 0;
    const ConceptId* best = nullptr;
    for (std::size_t j = i; j < tokens.size() && j - i < kMaxSurfaceTokens; ++j) {
      auto it = nodes_[node].next.find(tokens[j].text);
      if (it == nodes_[node].next.end()) break;
      node = it->second;
      if (nodes_[node].concept_id) {
        best_len = j - i + 1;
        best = &*nodes_[node].concept_id;
      }
    }
    if (best) {
      out.push_back({i, i + best_len, *best, AnnotationSource::kSilver});
      i += best_len;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<Annotation> shallow_match(const Document& doc, const OntologyGraph& graph) {
  return SurfaceMatcher(graph).match(doc.tokens);
}

}  // namespace phenotag
