#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "phenotag/checkpoint.hpp"
#include "phenotag/corpus.hpp"
#include "phenotag/embedding_table.hpp"
#include "phenotag/nn.hpp"
#include "phenotag/ontology.hpp"

namespace phenotag {

struct KgModelConfig {
  std::size_t dim = 64;  // concept embedding size
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t max_len = 64;
};

// Encodes a concept definition into one vector: Transformer encoder, then
// concat(max-pool, mean-pool) over token states projected to dim. A separate
// output table provides the context-token vectors of the skip-gram objective.
template <typename T>
class BasicKgModel {
 public:
  BasicKgModel(const KgModelConfig& cfg, Vocabulary vocab, std::uint64_t seed);

  // definitions: token-id lists (each non-empty, truncated to max_len).
  // Returns [definitions.size(), dim].
  Var<T> encode(const std::vector<std::vector<std::int32_t>>& definitions) const;
  // Pooled [n, 2*hidden] features before the projection, for inspection.
  Var<T> pooled_features(const std::vector<std::vector<std::int32_t>>& definitions) const;
  std::vector<T> encode_concept(std::span<const std::int32_t> definition) const;
  // Context-token vectors from the output table: [ids.size(), dim].
  Var<T> context_vectors(std::span<const std::int32_t> ids) const;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  const KgModelConfig& config() const { return cfg_; }

  std::vector<std::int32_t> definition_ids(const Concept& c) const;

 private:
  KgModelConfig cfg_;
  Vocabulary vocab_;
  ParameterSet<T> params_;
  TransformerEncoder<T> encoder_;
  Linear<T> pool_projection_;
  Var<T> context_table_;
};

using KgModel = BasicKgModel<float>;

// Vocabulary over tokenized definitions (names where a definition is empty).
Vocabulary build_definition_vocabulary(const OntologyGraph& graph);

// L4, listwise: -log( e^{-|a-n|} / (e^{-|a-n|} + sum_k e^{-|a-u_k|}) ), averaged
// over the batch. anchor/neighbour: [B, d]; negatives: [B*K, d] grouped by anchor.
template <typename T>
Var<T> relational_loss(const Var<T>& anchor, const Var<T>& neighbour, const Var<T>& negatives, std::size_t k);

// L5, skip-gram with negative sampling: -log s(u+ . v) - sum_k log s(-u-_k . v),
// averaged over the batch. concept: [B, d]; positive: [B, d]; negatives: [B*K, d].
template <typename T>
Var<T> semantic_loss(const Var<T>& concept_vec, const Var<T>& positive, const Var<T>& negatives, std::size_t k);

struct KgTrainConfig {
  std::size_t steps = 30000;
  double lr = 2e-5;
  std::size_t batch = 64;
  std::size_t negatives = 5;
  double weight_decay = 0.01;
  double relational_weight = 1.0;
  double semantic_weight = 1.0;
  std::uint64_t seed = 0;
};

struct KgStepLog {
  std::size_t step;
  double relational;
  double semantic;
  double total;
};

struct KgTrainResult {
  ConceptEmbeddingTable embeddings;
  std::vector<KgStepLog> history;
};

using KgStepCallback = std::function<void(const KgStepLog&)>;

KgTrainResult train_kg(KgModel& model, const OntologyGraph& graph, const KgTrainConfig& config,
                       const KgStepCallback& on_step = {});

// Embeds every annotatable concept with the current parameters.
ConceptEmbeddingTable embed_concepts(const KgModel& model, const OntologyGraph& graph);

struct KgStructureReport {
  double ranking_accuracy = 0.0;   // P(d(a, neighbour) < d(a, unrelated))
  double neighbour_mean = 0.0;     // mean parent-child distance
  double non_neighbour_mean = 0.0; // mean distance of random non-adjacent pairs
  std::size_t triples = 0;
};

// Concepts that are neither id, its neighbours, nor its ancestors/descendants.
bool unrelated(const OntologyGraph& graph, const ConceptId& a, const ConceptId& b);

KgStructureReport measure_structure(const OntologyGraph& graph, const ConceptEmbeddingTable& table,
                                    std::uint64_t seed);

Checkpoint to_checkpoint(const KgModel& model, const ConceptEmbeddingTable& table);
void save_kg(const KgModel& model, const ConceptEmbeddingTable& table, const std::filesystem::path& dir);
struct LoadedKg {
  std::unique_ptr<KgModel> model;
  ConceptEmbeddingTable embeddings;
};
LoadedKg load_kg(const std::filesystem::path& dir);

}  // namespace phenotag
