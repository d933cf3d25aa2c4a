#include <doctest.h>

#include <algorithm>

#include "../support/generators.hpp"
#include "../support/oracles.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/evaluator.hpp"

using namespace phenotag;

namespace {

OntologyGraph chain_graph() {
  // root -> A -> B -> C, root -> D
  std::vector<Concept> cs(5);
  cs[0].id = "HP:0000118";
  cs[1].id = "HP:0000001";
  cs[1].parents = {"HP:0000118"};
  cs[2].id = "HP:0000002";
  cs[2].parents = {"HP:0000001"};
  cs[3].id = "HP:0000003";
  cs[3].parents = {"HP:0000002"};
  cs[4].id = "HP:0000004";
  cs[4].parents = {"HP:0000118"};
  for (auto& c : cs) c.name = "n" + c.id.substr(8);
  return OntologyGraph::from_concepts(cs, "HP:0000118");
}

test::Counts counts_of(const ConceptSets& pred, const ConceptSets& gold) {
  std::vector<std::pair<std::vector<ConceptId>, std::vector<ConceptId>>> docs;
  for (const auto& [id, g] : gold) {
    std::vector<ConceptId> p;
    if (auto it = pred.find(id); it != pred.end()) p.assign(it->second.begin(), it->second.end());
    docs.emplace_back(p, std::vector<ConceptId>(g.begin(), g.end()));
  }
  return test::brute_force_counts(docs);
}

ConceptSets expand(const ConceptSets& sets, const std::vector<Concept>& concepts, const ConceptId& root) {
  ConceptSets out;
  for (const auto& [doc, ids] : sets) {
    auto& e = out[doc];
    for (const auto& id : ids) {
      e.insert(id);
      for (const auto& a : test::bfs_ancestors(concepts, root, id)) e.insert(a);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("exact scoring worked example") {
  const ConceptSets pred{{"d1", {"HP:0000001", "HP:0000002"}}, {"d2", {}}};
  const ConceptSets gold{{"d1", {"HP:0000002", "HP:0000003"}}, {"d2", {"HP:0000004"}}};
  const auto r = exact_scores(pred, gold);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 2);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(1.0 / 3));
  CHECK(r.f1 == doctest::Approx(0.4));
}

TEST_CASE("degenerate inputs score zero, not NaN") {
  const auto r = exact_scores({}, {});
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  const auto missing = exact_scores({}, ConceptSets{{"d", {"HP:0000001"}}});
  CHECK(missing.fn == 1);
  CHECK_THROWS_AS(exact_scores(ConceptSets{{"x", {}}}, ConceptSets{{"d", {}}}), InputError);
}

TEST_CASE("generalised scoring worked example") {
  const auto g = chain_graph();
  const ConceptSets pred{{"d", {"HP:0000003"}}};
  const ConceptSets gold{{"d", {"HP:0000002"}}};
  const auto exact = exact_scores(pred, gold);
  CHECK(exact.tp == 0);
  const auto gen = generalised_scores(pred, gold, g);
  CHECK(gen.tp == 2);
  CHECK(gen.fp == 1);
  CHECK(gen.fn == 0);
  CHECK(gen.mode == MatchMode::kGeneralised);
  CHECK_THROWS_AS(generalised_scores(ConceptSets{{"d", {"HP:9999999"}}}, gold, g), InputError);
}

TEST_CASE("concept sets from documents") {
  auto doc = Document::from_text("d", "a b c");
  doc.annotations = {{0, 1, "HP:0000001", AnnotationSource::kGold}, {2, 3, "HP:0000001", AnnotationSource::kGold}};
  const auto sets = concept_sets({doc});
  CHECK(sets.at("d") == std::set<ConceptId>{"HP:0000001"});
  CHECK(concept_sets({"a", "b"}, {{}, {doc.annotations[0]}}).at("b").size() == 1);
}

TEST_CASE("rare slice drops frequent concepts") {
  const FrequentSet frequent({"HP:0000001"});
  const auto [p, g] = rare_slice(ConceptSets{{"d", {"HP:0000001", "HP:0000002"}}},
                                 ConceptSets{{"d", {"HP:0000001", "HP:0000003"}}}, frequent);
  CHECK(p.at("d") == std::set<ConceptId>{"HP:0000002"});
  CHECK(g.at("d") == std::set<ConceptId>{"HP:0000003"});
}

TEST_CASE("scores agree with brute-force counting") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto concepts = test::random_dag(2 + rng.below(12), rng);
    const auto graph = OntologyGraph::from_concepts(concepts, test::toy_id(0));
    const auto& ids = graph.annotatable_ids();
    ConceptSets pred, gold;
    const auto docs = 1 + rng.below(5);
    for (std::size_t d = 0; d < docs; ++d) {
      const auto name = "doc" + std::to_string(d);
      auto& ps = pred[name];
      auto& gs = gold[name];
      for (const auto& id : ids) {
        if (rng.below(3) == 0) ps.insert(id);
        if (rng.below(3) == 0) gs.insert(id);
      }
    }
    const auto exact = exact_scores(pred, gold);
    const auto oracle = counts_of(pred, gold);
    CHECK(exact.tp == oracle.tp);
    CHECK(exact.fp == oracle.fp);
    CHECK(exact.fn == oracle.fn);
    CHECK(exact.precision == doctest::Approx(test::safe_div(oracle.tp, oracle.tp + oracle.fp)));
    CHECK(exact.recall == doctest::Approx(test::safe_div(oracle.tp, oracle.tp + oracle.fn)));
    CHECK(exact.f1 >= 0.0);
    CHECK(exact.f1 <= 1.0);
    CHECK(exact.f1 <= std::max(exact.precision, exact.recall) + 1e-12);
    CHECK(exact.f1 >= std::min(exact.precision, exact.recall) - 1e-12);

    const auto gen = generalised_scores(pred, gold, graph);
    const auto gen_oracle = counts_of(expand(pred, concepts, test::toy_id(0)), expand(gold, concepts, test::toy_id(0)));
    CHECK(gen.tp == gen_oracle.tp);
    CHECK(gen.fp == gen_oracle.fp);
    CHECK(gen.fn == gen_oracle.fn);
    CHECK(gen.tp >= exact.tp);

    const auto self = exact_scores(gold, gold);
    CHECK(self.fp == 0);
    CHECK(self.fn == 0);
    if (self.tp > 0) CHECK(self.f1 == 1.0);
  }
}

TEST_CASE("mode names round trip") {
  CHECK(match_mode_from_string(to_string(MatchMode::kExact)) == MatchMode::kExact);
  CHECK(match_mode_from_string(to_string(MatchMode::kGeneralised)) == MatchMode::kGeneralised);
  CHECK_THROWS(match_mode_from_string("fuzzy"));
}
