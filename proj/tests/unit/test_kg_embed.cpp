#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "../support/generators.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/kg_embed.hpp"
#include "phenotag/synthetic.hpp"

using namespace phenotag;
using phenotag::test::gradcheck;
using phenotag::test::random_tensor;

namespace {

constexpr double kLossTolerance = 1e-6;
constexpr double kGradTolerance = 1e-3;

double dist(const Tensor<double>& a, std::size_t i, const Tensor<double>& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.dim(1); ++c) s += (a.at(i, c) - b.at(j, c)) * (a.at(i, c) - b.at(j, c));
  return std::sqrt(s);
}

double dot(const Tensor<double>& a, std::size_t i, const Tensor<double>& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.dim(1); ++c) s += a.at(i, c) * b.at(j, c);
  return s;
}

double relational_oracle(const Tensor<double>& a, const Tensor<double>& p, const Tensor<double>& n, std::size_t k) {
  const std::size_t b = a.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double pos = std::exp(-dist(a, i, p, i));
    double denom = pos;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(-dist(a, i, n, i * k + j));
    total += -std::log(pos / denom);
  }
  return total / static_cast<double>(b);
}

double semantic_oracle(const Tensor<double>& v, const Tensor<double>& p, const Tensor<double>& n, std::size_t k) {
  auto log_sigmoid = [](double x) { return -std::log1p(std::exp(-x)); };
  const std::size_t b = v.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    total -= log_sigmoid(dot(v, i, p, i));
    for (std::size_t j = 0; j < k; ++j) total -= log_sigmoid(-dot(v, i, n, i * k + j));
  }
  return total / static_cast<double>(b);
}

OntologyGraph tree_graph(std::size_t concepts, std::uint64_t seed) {
  TreeOntologyConfig cfg;
  cfg.concepts = concepts;
  cfg.seed = seed;
  return OntologyGraph::from_concepts(generate_tree_ontology(cfg), kSyntheticRoot);
}

std::vector<float> values_of(const ConceptEmbeddingTable& t) {
  return {t.vectors().values().begin(), t.vectors().values().end()};
}

KgModelConfig tiny_config() {
  KgModelConfig cfg;
  cfg.dim = 8;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn = 16;
  cfg.max_len = 16;
  return cfg;
}

}  // namespace

TEST_CASE("relational loss examples") {
  SUBCASE("all candidates equidistant gives ln(K+1)") {
    const Tensor<double> a(Shape{1, 2}, std::vector<double>{1, 2});
    const Tensor<double> negs(Shape{4, 2}, std::vector<double>{1, 2, 1, 2, 1, 2, 1, 2});
    const auto loss = relational_loss(Var<double>(a), Var<double>(a), Var<double>(negs), 4);
    CHECK(loss.value().item() == doctest::Approx(std::log(5.0)).epsilon(kLossTolerance));
  }
  SUBCASE("a far negative drives the loss toward zero") {
    const Tensor<double> a(Shape{1, 1}, std::vector<double>{0});
    const Tensor<double> far(Shape{1, 1}, std::vector<double>{50});
    CHECK(relational_loss(Var<double>(a), Var<double>(a), Var<double>(far), 1).value().item() < 1e-12);
  }
  SUBCASE("shape mismatch and zero negatives are rejected") {
    const Tensor<double> a(Shape{2, 2});
    CHECK_THROWS_AS(relational_loss(Var<double>(a), Var<double>(a), Var<double>(Tensor<double>(Shape{3, 2})), 2),
                    ShapeError);
    CHECK_THROWS_AS(relational_loss(Var<double>(a), Var<double>(a), Var<double>(a), 0), UsageError);
  }
}

TEST_CASE("semantic loss examples") {
  SUBCASE("orthogonal vectors give (K+1) ln 2") {
    const Tensor<double> v(Shape{1, 2}, std::vector<double>{1, 0});
    const Tensor<double> p(Shape{1, 2}, std::vector<double>{0, 1});
    const Tensor<double> n(Shape{2, 2}, std::vector<double>{0, 3, 0, -2});
    const auto loss = semantic_loss(Var<double>(v), Var<double>(p), Var<double>(n), 2);
    CHECK(loss.value().item() == doctest::Approx(3 * std::log(2.0)).epsilon(kLossTolerance));
  }
  SUBCASE("zero negatives are rejected") {
    const Tensor<double> v(Shape{1, 2});
    CHECK_THROWS_AS(semantic_loss(Var<double>(v), Var<double>(v), Var<double>(v), 0), UsageError);
  }
}

TEST_CASE("losses match scalar oracles on random inputs") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(4), k = 1 + rng.below(5), d = 1 + rng.below(6);
    const auto a = random_tensor({b, d}, rng, -2, 2);
    const auto p = random_tensor({b, d}, rng, -2, 2);
    const auto n = random_tensor({b * k, d}, rng, -2, 2);
    const double rel = relational_loss(Var<double>(a), Var<double>(p), Var<double>(n), k).value().item();
    const double sem = semantic_loss(Var<double>(a), Var<double>(p), Var<double>(n), k).value().item();
    CHECK(std::abs(rel - relational_oracle(a, p, n, k)) < kLossTolerance);
    CHECK(std::abs(sem - semantic_oracle(a, p, n, k)) < kLossTolerance);
    CHECK(rel >= 0.0);
    CHECK(sem >= 0.0);
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(23);
  const std::size_t b = 3, k = 2, d = 4;
  const std::vector<Tensor<double>> inputs{random_tensor({b, d}, rng, -1, 1), random_tensor({b, d}, rng, -1, 1),
                                           random_tensor({b * k, d}, rng, -1, 1)};
  CHECK(gradcheck([&](const auto& x) { return relational_loss(x[0], x[1], x[2], k); }, inputs) < kGradTolerance);
  CHECK(gradcheck([&](const auto& x) { return semantic_loss(x[0], x[1], x[2], k); }, inputs) < kGradTolerance);
}

TEST_CASE("concept encoder") {
  const auto graph = tree_graph(12, 3);
  const auto vocab = build_definition_vocabulary(graph);
  const BasicKgModel<double> model(tiny_config(), vocab, 5);

  SUBCASE("one-token definitions pool to identical max and mean halves") {
    const auto pooled = model.pooled_features({{4}});
    const auto h = tiny_config().hidden;
    for (std::size_t c = 0; c < h; ++c) CHECK(pooled.value().at(0, c) == doctest::Approx(pooled.value().at(0, h + c)));
  }
  SUBCASE("token order matters") {
    const auto a = model.encode({{2, 3, 4}, {4, 3, 2}});
    double diff = 0.0;
    for (std::size_t c = 0; c < a.value().dim(1); ++c) diff += std::abs(a.value().at(0, c) - a.value().at(1, c));
    CHECK(diff > 1e-6);
  }
  SUBCASE("batching does not change a row") {
    const auto alone = model.encode({{2, 5}});
    const auto batched = model.encode({{3, 3, 3, 3}, {2, 5}});
    for (std::size_t c = 0; c < alone.value().dim(1); ++c) {
      CHECK(alone.value().at(0, c) == doctest::Approx(batched.value().at(1, c)).epsilon(1e-9));
    }
  }
  SUBCASE("empty definitions are rejected") { CHECK_THROWS_AS(model.encode({{}}), UsageError); }
}

TEST_CASE("encoder gradients match finite differences") {
  const auto graph = tree_graph(6, 4);
  BasicKgModel<double> model(tiny_config(), build_definition_vocabulary(graph), 9);
  Rng rng(2);
  test::randomize_parameters(model.params(), rng);
  const std::vector<std::int32_t> ctx{2, 3, 4};
  auto loss = [&] {
    const auto e = model.encode({{2, 3, 4}, {5, 2}, {3}});
    const auto anchor = ops::gather_rows(e, std::span<const std::size_t>(std::vector<std::size_t>{0}));
    const auto pos = ops::gather_rows(e, std::span<const std::size_t>(std::vector<std::size_t>{1}));
    const auto neg = ops::gather_rows(e, std::span<const std::size_t>(std::vector<std::size_t>{2}));
    const auto rel = relational_loss(anchor, pos, neg, 1);
    const auto ctxv = model.context_vectors(ctx);
    const auto sem = semantic_loss(anchor, ops::gather_rows(ctxv, std::span<const std::size_t>(std::vector<std::size_t>{0})),
                                   ops::gather_rows(ctxv, std::span<const std::size_t>(std::vector<std::size_t>{1})), 1);
    return ops::add(rel, sem);
  };
  CHECK(test::gradcheck_params(model.params(), loss) < kGradTolerance);
}

TEST_CASE("training") {
  const auto graph = tree_graph(20, 8);
  const auto vocab = build_definition_vocabulary(graph);
  KgTrainConfig train;
  train.steps = 0;
  train.batch = 4;
  train.negatives = 2;
  train.lr = 1e-3;
  train.seed = 1;

  SUBCASE("zero steps returns the initial embeddings") {
    KgModel model(tiny_config(), vocab, 3);
    const auto before = embed_concepts(model, graph);
    const auto result = train_kg(model, graph, train);
    CHECK(result.history.empty());
    CHECK(values_of(result.embeddings) == values_of(before));
  }
  SUBCASE("same seed gives identical embeddings and history") {
    train.steps = 15;
    KgModel m1(tiny_config(), vocab, 3), m2(tiny_config(), vocab, 3);
    const auto r1 = train_kg(m1, graph, train);
    const auto r2 = train_kg(m2, graph, train);
    REQUIRE(r1.history.size() == 15);
    CHECK(values_of(r1.embeddings) == values_of(r2.embeddings));
    for (std::size_t i = 0; i < r1.history.size(); ++i) CHECK(r1.history[i].total == r2.history[i].total);
    CHECK(r1.embeddings.size() == graph.annotatable_ids().size());
  }
  SUBCASE("checkpoint round trip") {
    train.steps = 3;
    KgModel model(tiny_config(), vocab, 3);
    const auto result = train_kg(model, graph, train);
    const auto dir = std::filesystem::temp_directory_path() / "phenotag_kg_roundtrip";
    std::filesystem::remove_all(dir);
    save_kg(model, result.embeddings, dir);
    const auto loaded = load_kg(dir);
    CHECK(loaded.embeddings.ids() == result.embeddings.ids());
    CHECK(values_of(loaded.embeddings) == values_of(result.embeddings));
    CHECK(values_of(embed_concepts(*loaded.model, graph)) == values_of(result.embeddings));
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("unrelated pairs exclude the lineage") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto concepts = test::random_dag(2 + rng.below(15), rng);
    const auto graph = OntologyGraph::from_concepts(concepts, test::toy_id(0));
    const auto& ids = graph.annotatable_ids();
    for (const auto& a : ids) {
      for (const auto& b : ids) {
        const auto anc_a = test::bfs_ancestors(concepts, test::toy_id(0), a);
        const auto anc_b = test::bfs_ancestors(concepts, test::toy_id(0), b);
        const bool related = a == b || graph.neighbours(a).count(b) || anc_a.count(b) || anc_b.count(a);
        CHECK(unrelated(graph, a, b) == !related);
        CHECK(unrelated(graph, a, b) == unrelated(graph, b, a));
      }
    }
  }
}
