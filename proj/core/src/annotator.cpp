#include "phenotag/annotator.hpp"

#include <cmath>
#include <sstream>

#include "phenotag/config.hpp"

namespace phenotag {

template <typename T>
BasicAnnotatorModel<T>::BasicAnnotatorModel(const AnnotatorModelConfig& cfg, Vocabulary vocab, FrequentSet frequent,
                                            std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)), frequent_(std::move(frequent)) {
  Rng rng(seed);
  EncoderConfig enc;
  enc.vocab_size = vocab_.size();
  enc.hidden = cfg.hidden;
  enc.layers = cfg.layers;
  enc.heads = cfg.heads;
  enc.ffn = cfg.ffn;
  enc.max_len = cfg.max_len;
  encoder_ = TransformerEncoder<T>(params_, "annotator.encoder", enc, rng);
  relevance_head_ = Linear<T>(params_, "annotator.relevance_head", cfg.hidden, 1, rng);
  if (!frequent_.empty()) {
    concept_head_ = Linear<T>(params_, "annotator.concept_head", cfg.hidden, frequent_.size(), rng);
  }
  projection_ = Linear<T>(params_, "annotator.projection", cfg.hidden, cfg.dim, rng);
}

template <typename T>
AnnotatorOutputs<T> BasicAnnotatorModel<T>::forward(const PackedBatch& batch) const {
  const auto states = encoder_(batch.ids, batch.segments);
  AnnotatorOutputs<T> out;
  out.relevance = ops::reshape(ops::sigmoid(relevance_head_(states)), Shape{batch.ids.size()});
  if (!frequent_.empty()) out.concept_logits = concept_head_(states);
  out.embeddings = projection_(states);
  return out;
}

template <typename T>
void BasicAnnotatorModel<T>::check_window(std::span<const std::int32_t> window) const {
  if (window.size() > cfg_.max_len) {
    throw UsageError("window of " + std::to_string(window.size()) + " tokens exceeds max_len " +
                     std::to_string(cfg_.max_len));
  }
  for (auto id : window) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw UsageError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab_.size()));
    }
  }
}

template <typename T>
std::vector<std::vector<TokenPrediction>> BasicAnnotatorModel<T>::predict_windows(
    const std::vector<std::vector<std::int32_t>>& windows) const {
  std::vector<std::vector<TokenPrediction>> result(windows.size());
  PackedBatch batch;
  for (const auto& w : windows) {
    check_window(w);
    batch.append(w);
  }
  if (batch.ids.empty()) return result;

  NoGradGuard no_grad;
  const auto out = forward(batch);
  Tensor<T> dist;
  if (!frequent_.empty()) dist = ops::softmax(out.concept_logits).value();
  const auto& rel = out.relevance.value();
  const auto& emb = out.embeddings.value();
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& seg = batch.segments[w];
    auto& preds = result[w];
    preds.resize(seg.length);
    for (std::size_t i = 0; i < seg.length; ++i) {
      const std::size_t r = seg.offset + i;
      auto& p = preds[i];
      p.relevance_prob = static_cast<float>(rel[r]);
      if (!frequent_.empty()) {
        const auto row = dist.row(r);
        p.concept_dist.assign(row.begin(), row.end());
      }
      const auto e = emb.row(r);
      p.embedding.assign(e.begin(), e.end());
    }
  }
  return result;
}

template <typename T>
std::vector<TokenPrediction> BasicAnnotatorModel<T>::predict_tokens(std::span<const std::int32_t> window) const {
  return predict_windows({std::vector<std::int32_t>(window.begin(), window.end())}).front();
}

template class BasicAnnotatorModel<float>;
template class BasicAnnotatorModel<double>;

template <typename T>
Var<T> loss_relevance(const Var<T>& probs, std::span<const int> labels, double positive_weight) {
  if (probs.value().size() != labels.size()) {
    throw ShapeError("loss_relevance: " + shape_string(probs.shape()) + " probabilities for " +
                     std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> rows;
  std::vector<T> pos_coef, neg_coef;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kMaskedLabel) continue;
    if (labels[i] != 0 && labels[i] != 1) throw UsageError("relevance label must be 0 or 1");
    rows.push_back(i);
    pos_coef.push_back(static_cast<T>(labels[i] * positive_weight));
    neg_coef.push_back(static_cast<T>(1 - labels[i]));
  }
  if (rows.empty()) throw UsageError("loss_relevance: every position is masked");
  const auto column = ops::reshape(probs, Shape{labels.size(), 1});
  const auto p = ops::clamp(ops::reshape(ops::gather_rows(column, std::span<const std::size_t>(rows)), Shape{rows.size()}),
                            1e-7, 1.0 - 1e-7);
  const auto term = ops::add(ops::mul(Var<T>(Tensor<T>::vector(pos_coef)), ops::log(p)),
                             ops::mul(Var<T>(Tensor<T>::vector(neg_coef)), ops::log(ops::affine(p, -1.0, 1.0))));
  return ops::affine(ops::mean(term), -1.0);
}

template <typename T>
Var<T> loss_frequent(const Var<T>& logits, std::span<const int> labels) {
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kMaskedLabel) continue;
    rows.push_back(i);
    cols.push_back(static_cast<std::size_t>(labels[i]));
  }
  if (rows.empty()) return Var<T>(Tensor<T>::scalar(T(0)));
  if (!logits || logits.value().rank() != 2 || logits.value().rows() != labels.size()) {
    throw ShapeError("loss_frequent: logits " + (logits ? shape_string(logits.shape()) : std::string("<none>")) +
                     " for " + std::to_string(labels.size()) + " labels");
  }
  const auto classes = logits.value().cols();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (labels[rows[i]] < 0 || cols[i] >= classes) {
      throw UsageError("frequent label " + std::to_string(labels[rows[i]]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  const auto lsm = ops::log_softmax(ops::gather_rows(logits, std::span<const std::size_t>(rows)));
  return ops::affine(ops::mean(ops::pick(lsm, std::span<const std::size_t>(cols))), -1.0);
}

template <typename T>
Var<T> loss_distance(const Var<T>& token_vectors, const Tensor<T>& concept_vectors) {
  const auto& tv = token_vectors.value();
  if (tv.cols() != concept_vectors.cols()) {
    throw ConfigError("token vectors have dimension " + std::to_string(tv.cols()) +
                      " but concept embeddings have dimension " + std::to_string(concept_vectors.cols()));
  }
  if (tv.rows() != concept_vectors.rows()) {
    throw ShapeError("loss_distance: " + shape_string(tv.shape()) + " vs " + shape_string(concept_vectors.shape()));
  }
  if (tv.rank() != 2 || tv.rows() == 0) return Var<T>(Tensor<T>::scalar(T(0)));
  return ops::mean(ops::euclidean_distance(token_vectors, Var<T>(concept_vectors)));
}

template Var<float> loss_relevance<float>(const Var<float>&, std::span<const int>, double);
template Var<double> loss_relevance<double>(const Var<double>&, std::span<const int>, double);
template Var<float> loss_frequent<float>(const Var<float>&, std::span<const int>);
template Var<double> loss_frequent<double>(const Var<double>&, std::span<const int>);
template Var<float> loss_distance<float>(const Var<float>&, const Tensor<float>&);
template Var<double> loss_distance<double>(const Var<double>&, const Tensor<double>&);

AnnotatorTrainConfig default_train_config(TrainMode mode) {
  AnnotatorTrainConfig cfg;
  cfg.lr = 1e-4;
  cfg.batch = 64;
  cfg.steps = mode == TrainMode::kPretrain ? 100000 : 5000;
  return cfg;
}

namespace {

// Cycles through a pool in freshly shuffled order, one epoch at a time.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> pool, Rng& rng) : order_(std::move(pool)), rng_(rng) {}
  bool empty() const { return order_.empty(); }
  std::size_t next() {
    if (pos_ == 0) rng_.shuffle(order_);
    const auto v = order_[pos_];
    pos_ = (pos_ + 1) % order_.size();
    return v;
  }

 private:
  std::vector<std::size_t> order_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

double parameter_norm(const ParameterSet<float>& params) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (float x : params.at(i).var.value().values()) s += static_cast<double>(x) * x;
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<AnnotatorStepLog> train_annotator(AnnotatorModel& model, const std::vector<TrainingSample>& samples,
                                              const ConceptEmbeddingTable& kg, const AnnotatorTrainConfig& config,
                                              const AnnotatorStepCallback& on_step) {
  std::vector<AnnotatorStepLog> history;
  if (config.steps == 0) return history;
  if (samples.empty()) throw DataError("no training samples");
  if (config.batch == 0) throw ConfigError("batch must be >= 1");
  if (kg.dim() != model.config().dim) {
    throw ConfigError("annotator projection dimension " + std::to_string(model.config().dim) +
                      " differs from concept embedding dimension " + std::to_string(kg.dim()));
  }

  // Per-token embedding rows, resolved once.
  std::vector<std::vector<long>> kg_rows(samples.size());
  std::vector<std::size_t> original, augmented;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& sample = samples[s];
    if (sample.size() > model.config().max_len) {
      throw DataError("sample from " + sample.doc_id + " has " + std::to_string(sample.size()) +
                      " tokens, above max_len " + std::to_string(model.config().max_len));
    }
    auto& rows = kg_rows[s];
    rows.assign(sample.size(), -1);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (!sample.relevance[i] || sample.concepts[i].empty()) continue;
      rows[i] = kg.index_of(sample.concepts[i]);
      if (rows[i] < 0) throw DataError("no concept embedding for " + sample.concepts[i] + " (document " + sample.doc_id + ")");
    }
    (sample.augmented ? augmented : original).push_back(s);
  }

  Rng rng(config.seed);
  EpochSampler original_sampler(original, rng), augmented_sampler(augmented, rng);
  std::size_t augmented_per_batch = 0;
  if (augmented.empty()) {
    augmented_per_batch = 0;
  } else if (original.empty()) {
    augmented_per_batch = config.batch;
  } else {
    augmented_per_batch = static_cast<std::size_t>(std::lround(config.augmented_share * static_cast<double>(config.batch)));
  }

  AdamW<float> optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  const auto& frequent = model.frequent();
  const auto vocab_size = static_cast<std::int32_t>(model.vocab().size());
  const std::size_t dim = kg.dim();

  for (std::size_t step = 0; step < config.steps; ++step) {
    PackedBatch batch;
    std::vector<int> relevance_labels, frequent_labels;
    std::vector<std::size_t> distance_rows;
    std::vector<float> distance_targets;
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto s = b < augmented_per_batch ? augmented_sampler.next() : original_sampler.next();
      const auto& sample = samples[s];
      std::vector<std::int32_t> ids = sample.token_ids;
      const std::size_t offset = batch.ids.size();
      for (std::size_t i = 0; i < sample.size(); ++i) {
        const bool relevant = sample.relevance[i] != 0;
        bool corrupted = false;
        if (relevant && config.span_corruption > 0.0 && vocab_size > 2 && rng.uniform() < config.span_corruption) {
          ids[i] = 2 + static_cast<std::int32_t>(rng.below(static_cast<std::size_t>(vocab_size - 2)));
          corrupted = true;
        }
        relevance_labels.push_back(corrupted ? kMaskedLabel : (relevant ? 1 : 0));
        const long f = relevant && !corrupted && !sample.concepts[i].empty() ? frequent.index_of(sample.concepts[i]) : -1;
        frequent_labels.push_back(f >= 0 ? static_cast<int>(f) : kMaskedLabel);
        if (kg_rows[s][i] >= 0) {
          distance_rows.push_back(offset + i);
          const auto v = kg.row(static_cast<std::size_t>(kg_rows[s][i]));
          distance_targets.insert(distance_targets.end(), v.begin(), v.end());
        }
      }
      batch.append(ids);
    }

    const auto out = model.forward(batch);
    Var<float> l1(Tensor<float>::scalar(0.0f));
    bool any_relevance = false;
    for (int y : relevance_labels) any_relevance |= y != kMaskedLabel;
    if (any_relevance) l1 = loss_relevance(out.relevance, relevance_labels, config.positive_weight);
    const auto l2 = loss_frequent(out.concept_logits, frequent_labels);
    const auto l3 = loss_distance(ops::gather_rows(out.embeddings, std::span<const std::size_t>(distance_rows)),
                                  Tensor<float>(Shape{distance_rows.size(), dim}, std::move(distance_targets)));
    const auto total = ops::add(ops::add(ops::affine(l1, config.lambda_relevance), ops::affine(l2, config.lambda_frequent)),
                                ops::affine(l3, config.lambda_distance));

    const AnnotatorStepLog log{step, static_cast<double>(l1.value().item()), static_cast<double>(l2.value().item()),
                               static_cast<double>(l3.value().item()), static_cast<double>(total.value().item())};
    if (!std::isfinite(log.total)) {
      std::ostringstream msg;
      msg << "non-finite annotator loss at step " << step << " (relevance=" << log.relevance
          << ", frequent=" << log.frequent << ", distance=" << log.distance
          << ", parameter norm=" << parameter_norm(model.params()) << ")";
      throw TrainingError(msg.str());
    }
    backward(total);
    optimizer.step(model.params());
    history.push_back(log);
    if (on_step) on_step(log);
    if (config.save_every > 0 && !config.checkpoint_dir.empty() && (step + 1) % config.save_every == 0) {
      save_annotator(model, kg, InferenceConfig{}, config.checkpoint_dir);
    }
  }
  return history;
}

Checkpoint to_checkpoint(const AnnotatorModel& model, const ConceptEmbeddingTable& kg, const InferenceConfig& inference) {
  Checkpoint ckpt;
  ckpt.kind = "annotator";
  ckpt.config = Json::object();
  ckpt.config["model"] = model.config();
  ckpt.config["inference"] = inference;
  ckpt.vocabulary = model.vocab().tokens();
  ckpt.frequent_set = model.frequent().ids();
  ckpt.concept_index = kg.ids();
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params().at(i);
    ckpt.tensors.push_back({p.name, p.var.value()});
  }
  ckpt.tensors.push_back({"concept_embeddings", kg.vectors()});
  return ckpt;
}

void save_annotator(const AnnotatorModel& model, const ConceptEmbeddingTable& kg, const InferenceConfig& inference,
                    const std::filesystem::path& dir) {
  save_checkpoint(to_checkpoint(model, kg, inference), dir);
}

LoadedAnnotator load_annotator(const std::filesystem::path& dir) { return annotator_from_checkpoint(load_checkpoint(dir)); }

LoadedAnnotator annotator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "annotator") throw DataError("expected an annotator checkpoint, found '" + ckpt.kind + "'");
  LoadedAnnotator out;
  const auto cfg = ckpt.config.at("model").get<AnnotatorModelConfig>();
  out.model = std::make_unique<AnnotatorModel>(cfg, Vocabulary::from_tokens(ckpt.vocabulary),
                                               FrequentSet(ckpt.frequent_set), 0);
  auto& params = out.model->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    const auto& stored = ckpt.tensor(p.name);
    if (stored.shape() != p.var.value().shape()) {
      throw IntegrityError("parameter " + p.name + " has shape " + shape_string(stored.shape()) + ", expected " +
                           shape_string(p.var.value().shape()));
    }
    p.var.mutable_value() = stored;
  }
  out.embeddings = ConceptEmbeddingTable(ckpt.concept_index, ckpt.tensor("concept_embeddings"));
  if (ckpt.config.contains("inference")) out.inference = ckpt.config.at("inference").get<InferenceConfig>();
  return out;
}

}  // namespace phenotag
