#include "phenotag/embedding_table.hpp"

#include <iomanip>

namespace phenotag {

ConceptEmbeddingTable::ConceptEmbeddingTable(std::vector<ConceptId> ids, Tensor<float> vectors)
    : ids_(std::move(ids)), vectors_(std::move(vectors)) {
  if (vectors_.rank() != 2 || vectors_.dim(0) != ids_.size()) {
    throw ShapeError("embedding table of shape " + shape_string(vectors_.shape()) + " for " +
                     std::to_string(ids_.size()) + " concepts");
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw DataError("duplicate concept in embedding table: " + ids_[i]);
  }
}

long ConceptEmbeddingTable::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

std::span<const float> ConceptEmbeddingTable::vector(std::string_view id) const {
  const long i = index_of(id);
  if (i < 0) throw LookupError("no embedding for concept " + std::string(id));
  return row(static_cast<std::size_t>(i));
}

void ConceptEmbeddingTable::write_tsv(std::ostream& out) const {
  out << std::setprecision(9);
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out << ids_[i];
    for (float x : row(i)) out << '\t' << x;
    out << '\n';
  }
}

}  // namespace phenotag
