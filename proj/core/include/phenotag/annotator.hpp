#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "phenotag/checkpoint.hpp"
#include "phenotag/corpus.hpp"
#include "phenotag/embedding_table.hpp"
#include "phenotag/inference_config.hpp"
#include "phenotag/nn.hpp"
#include "phenotag/ontology.hpp"

namespace phenotag {

struct AnnotatorModelConfig {
  std::size_t hidden = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t max_len = 64;
  std::size_t dim = 64;  // must equal the concept embedding size
};

struct TokenPrediction {
  float relevance_prob = 0.0f;
  std::vector<float> concept_dist;  // aligned with the frequent set order
  std::vector<float> embedding;     // v_t
};

template <typename T>
struct AnnotatorOutputs {
  Var<T> relevance;       // [n] probabilities
  Var<T> concept_logits;  // [n, |H_freq|]; empty Var when the frequent set is empty
  Var<T> embeddings;      // [n, dim]
};

// Encoder plus relevance head (hidden -> 1), concept head (hidden -> |H_freq|)
// and projection head (hidden -> dim).
template <typename T>
class BasicAnnotatorModel {
 public:
  BasicAnnotatorModel(const AnnotatorModelConfig& cfg, Vocabulary vocab, FrequentSet frequent, std::uint64_t seed);

  AnnotatorOutputs<T> forward(const PackedBatch& batch) const;
  // One prediction per token. Throws UsageError for windows longer than
  // max_len or ids outside the vocabulary.
  std::vector<TokenPrediction> predict_tokens(std::span<const std::int32_t> window) const;
  std::vector<std::vector<TokenPrediction>> predict_windows(const std::vector<std::vector<std::int32_t>>& windows) const;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  const FrequentSet& frequent() const { return frequent_; }
  const AnnotatorModelConfig& config() const { return cfg_; }

 private:
  void check_window(std::span<const std::int32_t> window) const;

  AnnotatorModelConfig cfg_;
  Vocabulary vocab_;
  FrequentSet frequent_;
  ParameterSet<T> params_;
  TransformerEncoder<T> encoder_;
  Linear<T> relevance_head_;
  Linear<T> concept_head_;
  Linear<T> projection_;
};

using AnnotatorModel = BasicAnnotatorModel<float>;

inline constexpr int kMaskedLabel = -1;

// L1: mean over unmasked tokens of -[w*y*log p + (1-y)*log(1-p)], p clamped
// to [1e-7, 1 - 1e-7]. labels: 0, 1 or kMaskedLabel. Throws UsageError when
// every position is masked.
template <typename T>
Var<T> loss_relevance(const Var<T>& probs, std::span<const int> labels, double positive_weight = 1.0);

// L2: mean of -log softmax(logits)[label] over tokens with a label; zero when
// none contributes. labels: frequent-set index or kMaskedLabel.
template <typename T>
Var<T> loss_frequent(const Var<T>& logits, std::span<const int> labels);

// L3: mean Euclidean distance between token vectors [m, d] and their
// (frozen) concept vectors [m, d]; zero when m = 0.
template <typename T>
Var<T> loss_distance(const Var<T>& token_vectors, const Tensor<T>& concept_vectors);

enum class TrainMode { kPretrain, kFinetune };

struct AnnotatorTrainConfig {
  std::size_t steps = 100000;
  double lr = 1e-4;
  std::size_t batch = 64;
  double weight_decay = 0.01;
  double lambda_relevance = 1.0;
  double lambda_frequent = 1.0;
  double lambda_distance = 1.0;
  double positive_weight = 1.0;
  // Share of each batch drawn from augmented samples when both pools exist.
  double augmented_share = 0.5;
  // Probability of replacing a labelled token with a random vocabulary token.
  // Replaced tokens keep only their distance target.
  double span_corruption = 0.0;
  // Every save_every steps the model is written to checkpoint_dir; 0 disables.
  std::size_t save_every = 0;
  std::string checkpoint_dir;
  std::uint64_t seed = 0;
};

// Pretraining: 100k steps; fine-tuning: 5k steps; lr 1e-4 and batch 64 for both.
AnnotatorTrainConfig default_train_config(TrainMode mode);

struct AnnotatorStepLog {
  std::size_t step;
  double relevance;
  double frequent;
  double distance;
  double total;
};

using AnnotatorStepCallback = std::function<void(const AnnotatorStepLog&)>;

std::vector<AnnotatorStepLog> train_annotator(AnnotatorModel& model, const std::vector<TrainingSample>& samples,
                                              const ConceptEmbeddingTable& kg, const AnnotatorTrainConfig& config,
                                              const AnnotatorStepCallback& on_step = {});

Checkpoint to_checkpoint(const AnnotatorModel& model, const ConceptEmbeddingTable& kg, const InferenceConfig& inference);
void save_annotator(const AnnotatorModel& model, const ConceptEmbeddingTable& kg, const InferenceConfig& inference,
                    const std::filesystem::path& dir);

struct LoadedAnnotator {
  std::unique_ptr<AnnotatorModel> model;
  ConceptEmbeddingTable embeddings;
  InferenceConfig inference;
};
// Throws DataError for a checkpoint of another kind.
LoadedAnnotator annotator_from_checkpoint(const Checkpoint& ckpt);
LoadedAnnotator load_annotator(const std::filesystem::path& dir);

}  // namespace phenotag
