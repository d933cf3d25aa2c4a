#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "phenotag/ontology.hpp"
#include "phenotag/tensor.hpp"

namespace phenotag {

// One learned vector per concept, rows in id order.
class ConceptEmbeddingTable {
 public:
  ConceptEmbeddingTable() = default;
  ConceptEmbeddingTable(std::vector<ConceptId> ids, Tensor<float> vectors);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t dim() const { return vectors_.rank() == 2 ? vectors_.dim(1) : 0; }
  const std::vector<ConceptId>& ids() const { return ids_; }
  const Tensor<float>& vectors() const { return vectors_; }
  bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }
  // Row index or -1.
  long index_of(std::string_view id) const;
  std::span<const float> vector(std::string_view id) const;
  std::span<const float> row(std::size_t i) const { return vectors_.row(i); }

  // concept_id<TAB>v1<TAB>...<TAB>vd per line.
  void write_tsv(std::ostream& out) const;

 private:
  std::vector<ConceptId> ids_;
  Tensor<float> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace phenotag
