#include "phenotag/kg_embed.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "phenotag/config.hpp"

namespace phenotag {

template <typename T>
BasicKgModel<T>::BasicKgModel(const KgModelConfig& cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  Rng rng(seed);
  EncoderConfig enc;
  enc.vocab_size = vocab_.size();
  enc.hidden = cfg.hidden;
  enc.layers = cfg.layers;
  enc.heads = cfg.heads;
  enc.ffn = cfg.ffn;
  enc.max_len = cfg.max_len;
  encoder_ = TransformerEncoder<T>(params_, "kg.encoder", enc, rng);
  pool_projection_ = Linear<T>(params_, "kg.pool_projection", 2 * cfg.hidden, cfg.dim, rng);
  context_table_ = params_.add("kg.context_embedding", init_normal<T>(Shape{vocab_.size(), cfg.dim}, 0.02, rng));
}

template <typename T>
Var<T> BasicKgModel<T>::pooled_features(const std::vector<std::vector<std::int32_t>>& definitions) const {
  PackedBatch batch;
  for (const auto& def : definitions) {
    if (def.empty()) throw UsageError("cannot encode an empty definition");
    const auto len = std::min(def.size(), cfg_.max_len);
    batch.append(std::span<const std::int32_t>(def.data(), len));
  }
  const auto states = encoder_(batch.ids, batch.segments);
  return ops::concat(ops::segment_max(states, std::span<const Segment>(batch.segments)),
                     ops::segment_mean(states, std::span<const Segment>(batch.segments)), 1);
}

template <typename T>
Var<T> BasicKgModel<T>::encode(const std::vector<std::vector<std::int32_t>>& definitions) const {
  return pool_projection_(pooled_features(definitions));
}

template <typename T>
std::vector<T> BasicKgModel<T>::encode_concept(std::span<const std::int32_t> definition) const {
  NoGradGuard no_grad;
  const auto out = encode({std::vector<std::int32_t>(definition.begin(), definition.end())});
  return std::vector<T>(out.value().values().begin(), out.value().values().end());
}

template <typename T>
Var<T> BasicKgModel<T>::context_vectors(std::span<const std::int32_t> ids) const {
  return ops::embedding(context_table_, ids);
}

template <typename T>
std::vector<std::int32_t> BasicKgModel<T>::definition_ids(const Concept& c) const {
  auto ids = vocab_.encode(tokenize(c.definition_or_name()));
  if (ids.size() > cfg_.max_len) ids.resize(cfg_.max_len);
  return ids;
}

template class BasicKgModel<float>;
template class BasicKgModel<double>;

Vocabulary build_definition_vocabulary(const OntologyGraph& graph) {
  std::vector<std::vector<std::string>> lists;
  for (const auto& id : graph.annotatable_ids()) {
    lists.push_back(token_texts(tokenize(graph.concept_at(id).definition_or_name())));
  }
  return build_vocabulary(lists, 1);
}

template <typename T>
Var<T> relational_loss(const Var<T>& anchor, const Var<T>& neighbour, const Var<T>& negatives, std::size_t k) {
  const std::size_t b = anchor.value().rows();
  if (k == 0) throw UsageError("relational loss needs at least one negative");
  if (negatives.value().rows() != b * k) {
    throw ShapeError("relational_loss: " + shape_string(negatives.shape()) + " negatives for " + std::to_string(b) +
                     " anchors and k=" + std::to_string(k));
  }
  std::vector<std::size_t> repeat(b * k);
  for (std::size_t i = 0; i < b * k; ++i) repeat[i] = i / k;
  const auto positive = ops::reshape(ops::euclidean_distance(anchor, neighbour), Shape{b, 1});
  const auto negative =
      ops::reshape(ops::euclidean_distance(ops::gather_rows(anchor, std::span<const std::size_t>(repeat)), negatives),
                   Shape{b, k});
  const auto logits = ops::affine(ops::concat(positive, negative, 1), -1.0);
  const std::vector<std::size_t> first(b, 0);
  const auto picked = ops::pick(ops::log_softmax(logits), std::span<const std::size_t>(first));
  return ops::affine(ops::mean(picked), -1.0);
}

template <typename T>
Var<T> semantic_loss(const Var<T>& concept_vec, const Var<T>& positive, const Var<T>& negatives, std::size_t k) {
  const std::size_t b = concept_vec.value().rows();
  if (k == 0) throw UsageError("semantic loss needs at least one negative");
  if (negatives.value().rows() != b * k) {
    throw ShapeError("semantic_loss: " + shape_string(negatives.shape()) + " negatives for " + std::to_string(b) +
                     " concepts and k=" + std::to_string(k));
  }
  std::vector<std::size_t> repeat(b * k);
  for (std::size_t i = 0; i < b * k; ++i) repeat[i] = i / k;
  const auto pos = ops::sum(ops::log_sigmoid(ops::rowwise_dot(concept_vec, positive)));
  const auto neg = ops::sum(ops::log_sigmoid(
      ops::affine(ops::rowwise_dot(ops::gather_rows(concept_vec, std::span<const std::size_t>(repeat)), negatives), -1.0)));
  return ops::affine(ops::add(pos, neg), -1.0 / static_cast<double>(b));
}

template Var<float> relational_loss<float>(const Var<float>&, const Var<float>&, const Var<float>&, std::size_t);
template Var<double> relational_loss<double>(const Var<double>&, const Var<double>&, const Var<double>&, std::size_t);
template Var<float> semantic_loss<float>(const Var<float>&, const Var<float>&, const Var<float>&, std::size_t);
template Var<double> semantic_loss<double>(const Var<double>&, const Var<double>&, const Var<double>&, std::size_t);

namespace {

// Index-based view of the ontology used for pair and negative sampling.
struct GraphIndex {
  std::vector<ConceptId> ids;
  std::vector<std::vector<std::size_t>> neighbours;
  std::vector<std::unordered_set<std::size_t>> neighbour_set;
  std::vector<std::unordered_set<std::size_t>> ancestors;

  explicit GraphIndex(const OntologyGraph& graph) : ids(graph.annotatable_ids()) {
    std::unordered_map<std::string, std::size_t> row;
    for (std::size_t i = 0; i < ids.size(); ++i) row.emplace(ids[i], i);
    neighbours.resize(ids.size());
    neighbour_set.resize(ids.size());
    ancestors.resize(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (const auto& n : graph.neighbours(ids[i])) {
        neighbours[i].push_back(row.at(n));
        neighbour_set[i].insert(row.at(n));
      }
      for (const auto& a : graph.ancestors(ids[i])) ancestors[i].insert(row.at(a));
    }
  }

  bool related(std::size_t a, std::size_t b) const {
    return a == b || neighbour_set[a].count(b) || ancestors[a].count(b) || ancestors[b].count(a);
  }

  std::size_t sample_unrelated(std::size_t a, Rng& rng) const {
    const std::size_t n = ids.size();
    for (int attempt = 0; attempt < 64; ++attempt) {
      const auto u = rng.below(n);
      if (!related(a, u)) return u;
    }
    for (int attempt = 0; attempt < 64; ++attempt) {
      const auto u = rng.below(n);
      if (u != a && !neighbour_set[a].count(u)) return u;
    }
    for (int attempt = 0; attempt < 64 && n > 1; ++attempt) {
      const auto u = rng.below(n);
      if (u != a) return u;
    }
    return a;
  }
};

double parameter_norm(const ParameterSet<float>& params) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (float x : params.at(i).var.value().values()) s += static_cast<double>(x) * x;
  }
  return std::sqrt(s);
}

}  // namespace

ConceptEmbeddingTable embed_concepts(const KgModel& model, const OntologyGraph& graph) {
  NoGradGuard no_grad;
  const auto& ids = graph.annotatable_ids();
  Tensor<float> vectors(Shape{ids.size(), model.config().dim});
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < ids.size(); start += kChunk) {
    const auto end = std::min(ids.size(), start + kChunk);
    std::vector<std::vector<std::int32_t>> defs;
    for (std::size_t i = start; i < end; ++i) defs.push_back(model.definition_ids(graph.concept_at(ids[i])));
    const auto out = model.encode(defs);
    std::copy(out.value().values().begin(), out.value().values().end(),
              vectors.data() + start * model.config().dim);
  }
  return ConceptEmbeddingTable(ids, std::move(vectors));
}

KgTrainResult train_kg(KgModel& model, const OntologyGraph& graph, const KgTrainConfig& config,
                       const KgStepCallback& on_step) {
  KgTrainResult result;
  const GraphIndex index(graph);
  const std::size_t n = index.ids.size();
  if (n == 0 || config.steps == 0) {
    result.embeddings = embed_concepts(model, graph);
    return result;
  }
  if (config.batch == 0 || config.negatives == 0) throw ConfigError("kg batch and negatives must be >= 1");

  std::vector<std::vector<std::int32_t>> defs(n);
  std::vector<double> unigram(model.vocab().size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    defs[i] = model.definition_ids(graph.concept_at(index.ids[i]));
    if (defs[i].empty()) throw DataError("concept " + index.ids[i] + " has no definition tokens");
    for (auto id : defs[i]) unigram[static_cast<std::size_t>(id)] += 1.0;
  }
  for (auto& w : unigram) w = std::pow(w, 0.75);
  unigram[Vocabulary::kPad] = unigram[Vocabulary::kUnk] = 0.0;
  const DiscreteSampler token_sampler(unigram);

  std::vector<std::size_t> relational_anchors;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.neighbours[i].empty()) relational_anchors.push_back(i);
  }
  const bool use_relational = !relational_anchors.empty() && n > 1 && config.relational_weight != 0.0;

  Rng rng(config.seed);
  AdamW<float> optimizer({config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  const std::size_t b = config.batch, k = config.negatives;

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::size_t> anchors(b), neighbours(b), negatives(b * k);
    for (std::size_t i = 0; i < b; ++i) {
      anchors[i] = use_relational ? relational_anchors[rng.below(relational_anchors.size())] : rng.below(n);
      if (use_relational) {
        const auto& nb = index.neighbours[anchors[i]];
        neighbours[i] = nb[rng.below(nb.size())];
        for (std::size_t j = 0; j < k; ++j) negatives[i * k + j] = index.sample_unrelated(anchors[i], rng);
      }
    }

    // Encode each distinct concept of the batch once.
    std::unordered_map<std::size_t, std::size_t> row_of;
    std::vector<std::vector<std::int32_t>> batch_defs;
    auto row = [&](std::size_t concept_index) {
      auto [it, inserted] = row_of.emplace(concept_index, batch_defs.size());
      if (inserted) batch_defs.push_back(defs[concept_index]);
      return it->second;
    };
    std::vector<std::size_t> anchor_rows(b), neighbour_rows(b), negative_rows(b * k);
    for (std::size_t i = 0; i < b; ++i) anchor_rows[i] = row(anchors[i]);
    if (use_relational) {
      for (std::size_t i = 0; i < b; ++i) neighbour_rows[i] = row(neighbours[i]);
      for (std::size_t i = 0; i < b * k; ++i) negative_rows[i] = row(negatives[i]);
    }
    const auto embedded = model.encode(batch_defs);
    const auto anchor_vecs = ops::gather_rows(embedded, std::span<const std::size_t>(anchor_rows));

    std::vector<std::int32_t> positive_tokens(b), negative_tokens(b * k);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& def = defs[anchors[i]];
      positive_tokens[i] = def[rng.below(def.size())];
    }
    for (auto& t : negative_tokens) t = static_cast<std::int32_t>(token_sampler(rng));
    const auto semantic = semantic_loss(anchor_vecs, model.context_vectors(positive_tokens),
                                        model.context_vectors(negative_tokens), k);

    Var<float> total = ops::affine(semantic, config.semantic_weight);
    double relational_value = 0.0;
    if (use_relational) {
      const auto relational =
          relational_loss(anchor_vecs, ops::gather_rows(embedded, std::span<const std::size_t>(neighbour_rows)),
                          ops::gather_rows(embedded, std::span<const std::size_t>(negative_rows)), k);
      relational_value = relational.value().item();
      total = ops::add(total, ops::affine(relational, config.relational_weight));
    }

    const KgStepLog log{step, relational_value, static_cast<double>(semantic.value().item()),
                        static_cast<double>(total.value().item())};
    if (!std::isfinite(log.total)) {
      std::ostringstream msg;
      msg << "non-finite KG loss at step " << step << " (relational=" << log.relational
          << ", semantic=" << log.semantic << ", parameter norm=" << parameter_norm(model.params()) << ")";
      throw TrainingError(msg.str());
    }
    backward(total);
    optimizer.step(model.params());
    result.history.push_back(log);
    if (on_step) on_step(log);
  }

  result.embeddings = embed_concepts(model, graph);
  return result;
}

bool unrelated(const OntologyGraph& graph, const ConceptId& a, const ConceptId& b) {
  if (a == b || graph.neighbours(a).count(b)) return false;
  if (graph.ancestors(a).count(b) || graph.ancestors(b).count(a)) return false;
  return true;
}

namespace {

double row_distance(const ConceptEmbeddingTable& table, std::size_t a, std::size_t b) {
  const auto x = table.row(a);
  const auto y = table.row(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

KgStructureReport measure_structure(const OntologyGraph& graph, const ConceptEmbeddingTable& table,
                                    std::uint64_t seed) {
  KgStructureReport report;
  const GraphIndex index(graph);
  const std::size_t n = index.ids.size();
  if (n < 2) return report;
  std::vector<std::size_t> table_row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long r = table.index_of(index.ids[i]);
    if (r < 0) throw LookupError("no embedding for concept " + index.ids[i]);
    table_row[i] = static_cast<std::size_t>(r);
  }
  auto dist = [&](std::size_t a, std::size_t b) { return row_distance(table, table_row[a], table_row[b]); };

  Rng rng(seed);
  constexpr std::size_t kUnrelatedPerPair = 64;
  std::size_t correct = 0;
  double neighbour_sum = 0.0;
  std::size_t neighbour_pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> others;
    for (std::size_t u = 0; u < n; ++u) {
      if (!index.related(a, u)) others.push_back(u);
    }
    if (others.size() > kUnrelatedPerPair) {
      rng.shuffle(others);
      others.resize(kUnrelatedPerPair);
    }
    for (auto nb : index.neighbours[a]) {
      const double dn = dist(a, nb);
      neighbour_sum += dn;
      ++neighbour_pairs;
      for (auto u : others) {
        ++report.triples;
        if (dn < dist(a, u)) ++correct;
      }
    }
  }
  report.ranking_accuracy = report.triples ? static_cast<double>(correct) / static_cast<double>(report.triples) : 0.0;
  report.neighbour_mean = neighbour_pairs ? neighbour_sum / static_cast<double>(neighbour_pairs) : 0.0;

  double random_sum = 0.0;
  std::size_t random_pairs = 0;
  for (std::size_t attempt = 0; attempt < 20000 && random_pairs < 5000; ++attempt) {
    const auto a = rng.below(n);
    const auto b = rng.below(n);
    if (a == b || index.neighbour_set[a].count(b)) continue;
    random_sum += dist(a, b);
    ++random_pairs;
  }
  report.non_neighbour_mean = random_pairs ? random_sum / static_cast<double>(random_pairs) : 0.0;
  return report;
}

Checkpoint to_checkpoint(const KgModel& model, const ConceptEmbeddingTable& table) {
  Checkpoint ckpt;
  ckpt.kind = "kg";
  ckpt.config = nlohmann::ordered_json::object();
  ckpt.config["model"] = model.config();
  ckpt.vocabulary = model.vocab().tokens();
  ckpt.concept_index = table.ids();
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto& p = model.params().at(i);
    ckpt.tensors.push_back({p.name, p.var.value()});
  }
  ckpt.tensors.push_back({"concept_embeddings", table.vectors()});
  return ckpt;
}

void save_kg(const KgModel& model, const ConceptEmbeddingTable& table, const std::filesystem::path& dir) {
  save_checkpoint(to_checkpoint(model, table), dir);
}

LoadedKg load_kg(const std::filesystem::path& dir) {
  auto ckpt = load_checkpoint(dir);
  if (ckpt.kind != "kg") throw DataError("checkpoint in " + dir.string() + " is a '" + ckpt.kind + "' checkpoint, not kg");
  LoadedKg out;
  const auto cfg = ckpt.config.at("model").get<KgModelConfig>();
  out.model = std::make_unique<KgModel>(cfg, Vocabulary::from_tokens(ckpt.vocabulary), 0);
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
  return out;
}

}  // namespace phenotag
