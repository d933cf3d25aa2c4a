// Runs the nine acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/generators.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "phenotag/annotator.hpp"
#include "phenotag/config.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/evaluator.hpp"
#include "phenotag/fixture.hpp"
#include "phenotag/inference.hpp"
#include "phenotag/kg_embed.hpp"
#include "phenotag/selective.hpp"
#include "phenotag/synthetic.hpp"

using namespace phenotag;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr std::size_t kMetricCorpora = 100;
constexpr double kMetricTolerance = 1e-9;
constexpr double kMetricSeconds = 30.0;
constexpr double kGradTolerance = 1e-3;
constexpr double kGradSeconds = 120.0;
constexpr std::size_t kDecisionFixtures = 10000;
constexpr std::size_t kDecisionSettings = 20;
constexpr std::size_t kTreeConcepts = 50;
constexpr std::size_t kKgSteps = 2000;
constexpr double kRankingAccuracy = 0.9;
constexpr double kKgSeconds = 300.0;
constexpr std::size_t kMaxPretrainSteps = 5000;
constexpr double kAliasRecovery = 0.70;
constexpr double kRecallGain = 0.10;
constexpr double kPretrainSeconds = 900.0;
constexpr double kSelectFraction = 0.2;
constexpr int kSelectionSeeds = 5;
constexpr double kSmokeSeconds = 600.0;
constexpr std::uint64_t kCorpusSeed = 5;
constexpr std::uint64_t kRunSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. metric oracle equivalence

Outcome metric_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::size_t mismatches = 0;
  for (std::size_t c = 0; c < kMetricCorpora; ++c) {
    const auto concepts = test::random_dag(1 + rng.below(15), rng);
    const auto root = test::toy_id(0);
    const auto graph = OntologyGraph::from_concepts(concepts, root);
    const auto& ids = graph.annotatable_ids();
    ConceptSets pred, gold;
    const auto docs = 1 + rng.below(20);
    for (std::size_t d = 0; d < docs; ++d) {
      const auto name = "d" + std::to_string(d);
      auto& g = gold[name];
      for (const auto& id : ids) {
        if (rng.below(4) == 0) g.insert(id);
      }
      if (rng.below(5) == 0) continue;  // document without predictions
      auto& p = pred[name];
      for (const auto& id : ids) {
        if (rng.below(4) == 0) p.insert(id);
      }
    }
    auto expand = [&](const ConceptSets& sets) {
      ConceptSets out;
      for (const auto& [doc, s] : sets) {
        auto& e = out[doc];
        for (const auto& id : s) {
          e.insert(id);
          for (const auto& a : test::bfs_ancestors(concepts, root, id)) e.insert(a);
        }
      }
      return out;
    };
    auto oracle = [&](const ConceptSets& p, const ConceptSets& g) {
      std::vector<std::pair<std::vector<ConceptId>, std::vector<ConceptId>>> rows;
      for (const auto& [doc, gs] : g) {
        std::vector<ConceptId> ps;
        if (auto it = p.find(doc); it != p.end()) ps.assign(it->second.begin(), it->second.end());
        rows.emplace_back(ps, std::vector<ConceptId>(gs.begin(), gs.end()));
      }
      return test::brute_force_counts(rows);
    };
    auto agrees = [&](const EvalReport& r, const test::Counts& o) {
      const double p = test::safe_div(o.tp, o.tp + o.fp);
      const double rc = test::safe_div(o.tp, o.tp + o.fn);
      const double f = test::safe_div(2 * p * rc, p + rc);
      return r.tp == o.tp && r.fp == o.fp && r.fn == o.fn && std::abs(r.precision - p) <= kMetricTolerance &&
             std::abs(r.recall - rc) <= kMetricTolerance && std::abs(r.f1 - f) <= kMetricTolerance;
    };
    if (!agrees(exact_scores(pred, gold), oracle(pred, gold))) ++mismatches;
    if (!agrees(generalised_scores(pred, gold, graph), oracle(expand(pred), expand(gold)))) ++mismatches;
  }
  const double elapsed = seconds_since(t0);
  return {mismatches == 0 && elapsed < kMetricSeconds,
          std::to_string(kMetricCorpora) + " corpora, " + std::to_string(mismatches) + " mismatches, " + fmt(elapsed, 2) +
              "s"};
}

// ---------------------------------------------------------------------------
// 2. hand-computed metric fixtures

Outcome metric_fixtures() {
  std::vector<Concept> cs(4);
  cs[0].id = "R";
  cs[1].id = "A";
  cs[1].parents = {"R"};
  cs[2].id = "B";
  cs[2].parents = {"A"};
  cs[3].id = "C";
  cs[3].parents = {"R"};
  for (auto& c : cs) c.name = "name " + c.id;
  const auto chain = OntologyGraph::from_concepts(cs, "R");

  struct Case {
    std::string name;
    EvalReport got;
    std::size_t tp, fp, fn;
    double p, r, f;
  };
  const std::vector<Case> cases{
      {"exact {A,B} vs {A,C}", exact_scores({{"d", {"A", "B"}}}, {{"d", {"A", "C"}}}), 1, 1, 1, 0.5, 0.5, 0.5},
      {"generalised {B} vs {A}", generalised_scores({{"d", {"B"}}}, {{"d", {"A"}}}, chain), 1, 1, 0, 0.5, 1.0, 2.0 / 3},
      {"generalised {A} vs {B}", generalised_scores({{"d", {"A"}}}, {{"d", {"B"}}}, chain), 1, 0, 1, 1.0, 0.5, 2.0 / 3},
      {"exact empty", exact_scores({}, {{"d", {}}}), 0, 0, 0, 0.0, 0.0, 0.0},
  };
  std::string failed;
  for (const auto& c : cases) {
    const bool ok = c.got.tp == c.tp && c.got.fp == c.fp && c.got.fn == c.fn && std::abs(c.got.precision - c.p) < 1e-12 &&
                    std::abs(c.got.recall - c.r) < 1e-12 && std::abs(c.got.f1 - c.f) < 1e-12;
    if (!ok) failed += (failed.empty() ? "" : ", ") + c.name;
  }
  const auto [rp, rg] = rare_slice({{"d", {"A", "B"}}}, {{"d", {"A", "C"}}}, FrequentSet({"A"}));
  if (rp.at("d") != std::set<ConceptId>{"B"} || rg.at("d") != std::set<ConceptId>{"C"}) failed += " rare slice";
  return {failed.empty(), failed.empty() ? std::to_string(cases.size() + 1) + " fixtures reproduced" : "failed: " + failed};
}

// ---------------------------------------------------------------------------
// 3. gradient correctness

Outcome gradients() {
  const auto t0 = Clock::now();
  Rng rng(303);
  using Vs = std::vector<Var<double>>;
  using test::random_tensor;
  const std::vector<Segment> segs{{0, 2}, {2, 3}};
  std::vector<std::pair<std::string, double>> errors;
  auto check = [&](const std::string& name, const std::function<Var<double>(const Vs&)>& f,
                   const std::vector<Tensor<double>>& inputs) { errors.emplace_back(name, test::gradcheck(f, inputs)); };

  check("matmul", [](const Vs& v) { return ops::sum(ops::matmul(v[0], v[1])); },
        {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  check("add/sub/mul", [](const Vs& v) { return ops::sum(ops::mul(ops::add(v[0], v[1]), ops::sub(v[0], v[1]))); },
        {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
  check("add_bias", [](const Vs& v) { return ops::sum(ops::mul(ops::add_bias(v[0], v[1]), v[0])); },
        {random_tensor({3, 2}, rng), random_tensor({2}, rng)});
  check("affine", [](const Vs& v) { return ops::sum(ops::mul(ops::affine(v[0], -1.5, 0.3), v[0])); },
        {random_tensor({2, 2}, rng)});
  check("relu", [](const Vs& v) { return ops::sum(ops::mul(ops::relu(v[0]), v[0])); },
        {test::random_tensor_away_from_zero({3, 3}, rng)});
  check("sigmoid", [](const Vs& v) { return ops::sum(ops::sigmoid(v[0])); }, {random_tensor({2, 3}, rng, -3, 3)});
  check("log", [](const Vs& v) { return ops::sum(ops::log(v[0])); }, {random_tensor({2, 3}, rng, 0.2, 2.0)});
  check("log_sigmoid", [](const Vs& v) { return ops::sum(ops::log_sigmoid(v[0])); }, {random_tensor({2, 3}, rng, -4, 4)});
  check("clamp", [](const Vs& v) { return ops::sum(ops::mul(ops::clamp(v[0], -0.5, 0.5), v[0])); },
        {random_tensor({1, 6}, rng, -0.45, 0.45)});
  check("softmax", [](const Vs& v) { return ops::sum(ops::mul(ops::softmax(v[0]), v[1])); },
        {random_tensor({3, 4}, rng, -2, 2), random_tensor({3, 4}, rng)});
  check("log_softmax", [](const Vs& v) { return ops::sum(ops::mul(ops::log_softmax(v[0]), v[1])); },
        {random_tensor({3, 4}, rng, -2, 2), random_tensor({3, 4}, rng)});
  check("embedding",
        [](const Vs& v) {
          const std::vector<std::int32_t> ids{2, 0, 2};
          return ops::sum(ops::mul(ops::embedding(v[0], ids), v[1]));
        },
        {random_tensor({4, 3}, rng), random_tensor({3, 3}, rng)});
  check("layer_norm", [](const Vs& v) { return ops::sum(ops::mul(ops::layer_norm(v[0], v[1], v[2]), v[3])); },
        {random_tensor({3, 5}, rng, -2, 2), random_tensor({5}, rng), random_tensor({5}, rng), random_tensor({3, 5}, rng)});
  check("mean_axis",
        [](const Vs& v) {
          return ops::add(ops::sum(ops::mul(ops::mean_axis(v[0], 0), ops::mean_axis(v[0], 0))),
                          ops::sum(ops::mul(ops::mean_axis(v[0], 1), ops::mean_axis(v[0], 1))));
        },
        {random_tensor({3, 4}, rng)});
  check("max_axis", [](const Vs& v) { return ops::sum(ops::mul(ops::max_axis(v[0], 1), ops::max_axis(v[0], 1))); },
        {random_tensor({3, 4}, rng)});
  check("segment_mean", [&](const Vs& v) { return ops::sum(ops::mul(ops::segment_mean(v[0], segs), v[1])); },
        {random_tensor({5, 3}, rng), random_tensor({2, 3}, rng)});
  check("segment_max", [&](const Vs& v) { return ops::sum(ops::mul(ops::segment_max(v[0], segs), v[1])); },
        {random_tensor({5, 3}, rng), random_tensor({2, 3}, rng)});
  check("concat",
        [](const Vs& v) {
          return ops::add(ops::sum(ops::mul(ops::concat(v[0], v[1], 1), ops::concat(v[1], v[0], 1))),
                          ops::sum(ops::mul(ops::concat(v[0], v[1], 0), ops::concat(v[1], v[0], 0))));
        },
        {random_tensor({2, 2}, rng), random_tensor({2, 2}, rng)});
  check("euclidean_distance", [](const Vs& v) { return ops::sum(ops::euclidean_distance(v[0], v[1])); },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)});
  check("rowwise_dot", [](const Vs& v) { return ops::sum(ops::mul(ops::rowwise_dot(v[0], v[1]), v[2])); },
        {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng), random_tensor({3}, rng)});
  check("mean", [](const Vs& v) { return ops::mean(ops::mul(v[0], v[0])); }, {random_tensor({3, 4}, rng)});
  check("gather_rows",
        [](const Vs& v) {
          const std::vector<std::size_t> rows{1, 1, 0};
          return ops::sum(ops::mul(ops::gather_rows(v[0], rows), v[1]));
        },
        {random_tensor({2, 3}, rng), random_tensor({3, 3}, rng)});
  check("pick",
        [](const Vs& v) {
          const std::vector<std::size_t> cols{2, 0, 1};
          return ops::sum(ops::mul(ops::pick(v[0], cols), ops::pick(v[0], cols)));
        },
        {random_tensor({3, 3}, rng)});
  check("reshape", [](const Vs& v) { return ops::sum(ops::mul(ops::reshape(v[0], {6}), v[1])); },
        {random_tensor({2, 3}, rng), random_tensor({6}, rng)});
  check("segment_attention",
        [&](const Vs& v) { return ops::sum(ops::mul(ops::segment_attention(v[0], v[1], v[2], segs, 2), v[3])); },
        {random_tensor({5, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5, 4}, rng), random_tensor({5, 4}, rng)});

  const std::vector<int> rel{1, 0, kMaskedLabel, 1};
  const std::vector<int> freq{2, kMaskedLabel, 0, 1};
  const auto target = random_tensor({4, 3}, rng);
  check("L1 relevance", [&](const Vs& v) { return loss_relevance(ops::sigmoid(v[0]), rel, 2.0); },
        {random_tensor({4}, rng, -2, 2)});
  check("L2 frequent", [&](const Vs& v) { return loss_frequent(v[0], freq); }, {random_tensor({4, 3}, rng, -2, 2)});
  check("L3 distance", [&](const Vs& v) { return loss_distance(v[0], target); }, {random_tensor({4, 3}, rng, -2, 2)});
  check("L4 relational", [](const Vs& v) { return relational_loss(v[0], v[1], v[2], 5); },
        {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng), random_tensor({10, 4}, rng)});
  check("L5 semantic", [](const Vs& v) { return semantic_loss(v[0], v[1], v[2], 5); },
        {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng), random_tensor({10, 4}, rng)});

  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& [name, err] : errors) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    if (!(err <= kGradTolerance)) failed += " " + name;
  }
  const double elapsed = seconds_since(t0);
  return {failed.empty() && elapsed < kGradSeconds,
          std::to_string(errors.size()) + " checks, worst " + worst_name + " " + fmt(worst, 8) + ", " + fmt(elapsed, 2) +
              "s" + (failed.empty() ? "" : "; failed:" + failed)};
}

// ---------------------------------------------------------------------------
// 4. decision rule equivalence

Outcome decision_rule() {
  Rng rng(404);
  std::size_t disagreements = 0, total = 0, distance_branch = 0, frequent_branch = 0;
  for (std::size_t setting = 0; setting < kDecisionSettings; ++setting) {
    const double tau_p = 0.05 + 0.9 * rng.uniform();
    const double tau_d = 0.1 + 2.0 * rng.uniform();
    const std::size_t n = 5 + rng.below(40), dim = 2 + rng.below(6);
    std::vector<ConceptId> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(test::toy_id(i + 1));
    std::vector<float> values(n * dim);
    for (auto& v : values) v = static_cast<float>(rng.uniform() * 2 - 1);
    const ConceptEmbeddingTable table(ids, Tensor<float>(Shape{n, dim}, values));
    std::vector<ConceptId> freq_ids;
    for (const auto& id : ids) {
      if (rng.below(3) == 0) freq_ids.push_back(id);
    }
    rng.shuffle(freq_ids);
    const FrequentSet frequent(freq_ids);
    for (std::size_t k = 0; k < kDecisionFixtures / kDecisionSettings; ++k) {
      TokenPrediction p;
      p.relevance_prob = static_cast<float>(rng.uniform());
      p.concept_dist.resize(freq_ids.size());
      for (auto& x : p.concept_dist) x = static_cast<float>(rng.below(6)) / 6.0f;  // frequent ties
      p.embedding.resize(dim);
      for (auto& x : p.embedding) x = static_cast<float>(rng.uniform() * 2 - 1);
      const auto got = decide_token(p, frequent, table, {tau_p, tau_d});
      const auto want =
          test::brute_force_decide(p.relevance_prob, p.concept_dist, freq_ids, p.embedding, table, tau_p, tau_d);
      disagreements += got.concept_id != want;
      distance_branch += got.branch == DecisionBranch::kDistance;
      frequent_branch += got.branch == DecisionBranch::kFrequent;
      ++total;
    }
  }
  return {disagreements == 0 && total == kDecisionFixtures,
          std::to_string(total) + " fixtures, " + std::to_string(disagreements) + " disagreements (" +
              std::to_string(frequent_branch) + " frequent, " + std::to_string(distance_branch) + " distance)"};
}

// ---------------------------------------------------------------------------
// 5. KG structure recovery

Outcome kg_structure() {
  const auto t0 = Clock::now();
  const auto run = fixture_run_config(kRunSeed);
  TreeOntologyConfig tree;
  tree.concepts = kTreeConcepts;
  tree.seed = kRunSeed;
  const auto graph = OntologyGraph::from_concepts(generate_tree_ontology(tree), kSyntheticRoot);
  KgModel model(run.kg_model, build_definition_vocabulary(graph), kRunSeed);
  auto train = run.kg_train;
  train.steps = kKgSteps;
  const auto result = train_kg(model, graph, train);
  const auto report = measure_structure(graph, result.embeddings, kRunSeed);
  const double elapsed = seconds_since(t0);
  return {report.ranking_accuracy >= kRankingAccuracy && report.neighbour_mean < report.non_neighbour_mean &&
              elapsed < kKgSeconds,
          "ranking accuracy " + fmt(report.ranking_accuracy) + ", parent-child " + fmt(report.neighbour_mean) +
              " vs non-neighbour " + fmt(report.non_neighbour_mean) + ", " + fmt(elapsed, 1) + "s"};
}

// ---------------------------------------------------------------------------
// Shared synthetic experiment for 6 and 7.

struct Experiment {
  RunConfig run = fixture_run_config(kRunSeed);
  SyntheticCorpus corpus;
  OntologyGraph graph;
  ConceptEmbeddingTable table;
  std::unique_ptr<AnnotatorModel> model;
  CalibrationResult calibration;
  double pretrain_seconds = 0.0;

  std::vector<TrainingSample> samples(const std::vector<Document>& docs) const {
    std::vector<TrainingSample> out;
    for (const auto& d : docs) {
      auto s = to_training_samples(d, model->vocab(), run.annotator.max_len);
      out.insert(out.end(), s.samples.begin(), s.samples.end());
    }
    return out;
  }

  EvalReport test_scores(const AnnotatorModel& m, const InferenceConfig& cfg) const {
    std::vector<std::string> ids;
    for (const auto& d : corpus.test) ids.push_back(d.id);
    return exact_scores(concept_sets(ids, annotate_corpus(m, table, corpus.test, cfg)), concept_sets(corpus.test));
  }
};

Experiment& experiment() {
  static std::unique_ptr<Experiment> e;
  if (e) return *e;
  e = std::make_unique<Experiment>();
  const auto t0 = Clock::now();
  SyntheticCorpusConfig sc;
  sc.seed = kCorpusSeed;
  e->corpus = generate_corpus(sc);
  e->graph = OntologyGraph::from_concepts(e->corpus.concepts, kSyntheticRoot);
  const auto silver = silver_copy(e->corpus.train, e->graph);

  KgModel kg(e->run.kg_model, build_definition_vocabulary(e->graph), kRunSeed);
  e->table = train_kg(kg, e->graph, e->run.kg_train).embeddings;

  const auto frequent = compute_frequent_set(e->graph, count_matches(silver), e->run.frequent_cap);
  e->model = std::make_unique<AnnotatorModel>(e->run.annotator, build_vocabulary(silver, e->run.min_count),
                                              FrequentSet(frequent), kRunSeed);
  if (e->run.pretrain.steps > kMaxPretrainSteps) throw ConfigError("pretraining budget exceeded");
  train_annotator(*e->model, e->samples(silver), e->table, e->run.pretrain);
  e->calibration = calibrate_thresholds(*e->model, e->table, e->corpus.validation);
  e->pretrain_seconds = seconds_since(t0);
  return *e;
}

// ---------------------------------------------------------------------------
// 6. contextual-synonym recovery

Outcome synonym_recovery() {
  auto& e = experiment();
  const auto occurrences = alias_occurrences(e.corpus, e.corpus.test);
  std::vector<std::vector<TokenPrediction>> preds;
  for (const auto& d : e.corpus.test) preds.push_back(predict_document(*e.model, d));
  std::size_t hits = 0;
  for (const auto& o : occurrences) {
    bool hit = false;
    for (auto t = o.annotation.start_token; t < o.annotation.end_token && !hit; ++t) {
      const auto d = decide_token(preds[o.doc_index][t], e.model->frequent(), e.table, e.calibration.best);
      hit = d.branch == DecisionBranch::kDistance && d.concept_id == o.annotation.concept_id;
    }
    hits += hit;
  }
  const double alias_rate = occurrences.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(occurrences.size());
  const auto model = e.test_scores(*e.model, e.calibration.best);
  const auto keyword = exact_scores(concept_sets(silver_copy(e.corpus.test, e.graph)), concept_sets(e.corpus.test));
  const bool pass = alias_rate >= kAliasRecovery && model.recall - keyword.recall >= kRecallGain &&
                    e.pretrain_seconds < kPretrainSeconds;
  return {pass, "alias distance-branch recovery " + fmt(alias_rate) + " over " + std::to_string(occurrences.size()) +
                    " occurrences; recall " + fmt(model.recall) + " vs keyword " + fmt(keyword.recall) + "; tau_p " +
                    fmt(e.calibration.best.tau_p, 2) + " tau_d " + fmt(e.calibration.best.tau_d, 3) + "; " +
                    fmt(e.pretrain_seconds, 1) + "s"};
}

// ---------------------------------------------------------------------------
// 7. selective supervision ordering

Outcome selective_supervision() {
  auto& e = experiment();
  const auto base = to_checkpoint(*e.model, e.table, e.calibration.best);
  std::map<std::string, const Document*> by_id;
  for (const auto& d : e.corpus.train) by_id[d.id] = &d;

  auto finetuned_f1 = [&](const std::vector<std::string>& ids, std::uint64_t seed) {
    std::vector<Document> docs;
    for (const auto& id : ids) docs.push_back(*by_id.at(id));
    auto loaded = annotator_from_checkpoint(base);
    auto cfg = e.run.finetune;
    cfg.seed = seed;
    train_annotator(*loaded.model, e.samples(docs), e.table, cfg);
    const auto cal = calibrate_thresholds(*loaded.model, e.table, e.corpus.validation);
    return e.test_scores(*loaded.model, cal.best).f1;
  };

  std::vector<SelectionScore> uncertainty, random;
  for (const auto& d : e.corpus.train) {
    uncertainty.push_back({d.id, score_uncertainty(*e.model, d, e.calibration.best.tau_p), Strategy::kUncertainty});
    random.push_back({d.id, 0.0, Strategy::kRandom});
  }
  const auto uncertain_ids = select(uncertainty, Strategy::kUncertainty, kSelectFraction, 0);
  double unc = 0.0, rnd = 0.0;
  for (int s = 1; s <= kSelectionSeeds; ++s) {
    unc += finetuned_f1(uncertain_ids, static_cast<std::uint64_t>(s));
    rnd += finetuned_f1(select(random, Strategy::kRandom, kSelectFraction, static_cast<std::uint64_t>(s)),
                        static_cast<std::uint64_t>(s));
  }
  unc /= kSelectionSeeds;
  rnd /= kSelectionSeeds;

  // Oracle scores against hand-counted symmetric differences.
  const auto silver = silver_copy(e.corpus.train, e.graph);
  std::size_t oracle_mismatch = 0;
  for (std::size_t i = 0; i < silver.size(); ++i) {
    std::vector<ConceptId> a, b;
    for (const auto& x : silver[i].annotations) a.push_back(x.concept_id);
    for (const auto& x : e.corpus.train[i].annotations) b.push_back(x.concept_id);
    std::size_t count = 0;
    std::vector<ConceptId> seen;
    for (const auto* side : {&a, &b}) {
      for (const auto& id : *side) {
        if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
        seen.push_back(id);
        const bool in_a = std::find(a.begin(), a.end(), id) != a.end();
        const bool in_b = std::find(b.begin(), b.end(), id) != b.end();
        count += in_a != in_b;
      }
    }
    oracle_mismatch += score_oracle(silver[i].annotations, e.corpus.train[i].annotations) != count;
  }
  return {unc >= rnd && oracle_mismatch == 0,
          "fine-tuned F1 uncertainty " + fmt(unc) + " vs random " + fmt(rnd) + " over " + std::to_string(kSelectionSeeds) +
              " seeds; oracle mismatches " + std::to_string(oracle_mismatch) + "/" + std::to_string(silver.size())};
}

// ---------------------------------------------------------------------------
// 8. determinism and persistence

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  std::vector<std::string> problems;
  TreeOntologyConfig tree;
  tree.concepts = 20;
  tree.seed = 3;
  const auto graph = OntologyGraph::from_concepts(generate_tree_ontology(tree), kSyntheticRoot);
  auto run = fixture_run_config(kRunSeed);
  run.kg_train.steps = 50;

  auto train_once = [&] {
    KgModel m(run.kg_model, build_definition_vocabulary(graph), kRunSeed);
    return train_kg(m, graph, run.kg_train);
  };
  const auto k1 = train_once(), k2 = train_once();
  bool same = k1.history.size() == k2.history.size();
  for (std::size_t i = 0; same && i < k1.history.size(); ++i) same = k1.history[i].total == k2.history[i].total;
  const auto v1 = k1.embeddings.vectors().values(), v2 = k2.embeddings.vectors().values();
  if (!same || !std::equal(v1.begin(), v1.end(), v2.begin(), v2.end())) problems.push_back("kg training differs");

  SyntheticCorpusConfig sc;
  sc.seed = 11;
  sc.concepts = 12;
  sc.train_docs = 40;
  sc.validation_docs = 5;
  sc.test_docs = 10;
  const auto corpus = generate_corpus(sc);
  const auto cgraph = OntologyGraph::from_concepts(corpus.concepts, kSyntheticRoot);
  KgModel kg(run.kg_model, build_definition_vocabulary(cgraph), kRunSeed);
  const auto table = embed_concepts(kg, cgraph);
  const auto silver = silver_copy(corpus.train, cgraph);
  const auto vocab = build_vocabulary(silver, 1);
  const FrequentSet frequent(compute_frequent_set(cgraph, count_matches(silver), run.frequent_cap));
  std::vector<TrainingSample> samples;
  for (const auto& d : silver) {
    auto s = to_training_samples(d, vocab, run.annotator.max_len);
    samples.insert(samples.end(), s.samples.begin(), s.samples.end());
  }
  auto pre = run.pretrain;
  pre.steps = 30;
  AnnotatorModel a1(run.annotator, vocab, frequent, kRunSeed), a2(run.annotator, vocab, frequent, kRunSeed);
  const auto h1 = train_annotator(a1, samples, table, pre);
  const auto h2 = train_annotator(a2, samples, table, pre);
  same = h1.size() == h2.size();
  for (std::size_t i = 0; same && i < h1.size(); ++i) same = h1[i].total == h2[i].total;
  if (!same) problems.push_back("annotator training differs");
  const InferenceConfig thresholds{0.5, 1.0};
  const auto out1 = annotate_corpus(a1, table, corpus.test, thresholds, 1);
  if (out1 != annotate_corpus(a2, table, corpus.test, thresholds, 3)) problems.push_back("annotations differ");

  const auto dir = fs::temp_directory_path() / "phenotag_acceptance_ckpt";
  fs::remove_all(dir);
  save_annotator(a1, table, thresholds, dir / "a");
  const auto loaded = load_annotator(dir / "a");
  save_annotator(*loaded.model, loaded.embeddings, loaded.inference, dir / "b");
  if (read_bytes(dir / "a" / "params.bin") != read_bytes(dir / "b" / "params.bin") ||
      checkpoint_hash(dir / "a") != checkpoint_hash(dir / "b")) {
    problems.push_back("checkpoint round trip not bit-exact");
  }
  if (annotate_corpus(*loaded.model, loaded.embeddings, corpus.test, loaded.inference) != out1) {
    problems.push_back("reloaded model annotates differently");
  }
  {
    std::fstream f(dir / "a" / "params.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(17);
    f.put('\x55');
  }
  try {
    load_annotator(dir / "a");
    problems.push_back("corrupted checkpoint accepted");
  } catch (const IntegrityError&) {
  }
  fs::remove_all(dir);

  std::string detail = problems.empty() ? "training, annotation and checkpoints reproducible; corruption rejected" : "";
  for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------------------
// 9. end-to-end smoke run of the command-line tool

Outcome smoke() {
  const auto t0 = Clock::now();
  const fs::path fixture = PHENOTAG_FIXTURE_DIR;
  const fs::path work = fs::temp_directory_path() / "phenotag_acceptance_smoke";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string cli = PHENOTAG_CLI;
  const std::string cfg = " --config " + (fixture / "config.json").string();
  const std::string test_docs = (fixture / "test.jsonl").string();
  const std::vector<std::pair<std::string, std::string>> steps{
      {"match", "match" + cfg + " --out " + (work / "silver.jsonl").string()},
      {"train-kg", "train-kg" + cfg + " --out " + (work / "kg").string()},
      {"pretrain", "pretrain" + cfg + " --in " + (work / "silver.jsonl").string() + " --kg " + (work / "kg").string() +
                       " --out " + (work / "ckpt").string()},
      {"annotate", "annotate" + cfg + " --checkpoint " + (work / "ckpt").string() + " --in " + test_docs + " --out " +
                       (work / "pred.jsonl").string()},
      {"eval", "eval" + cfg + " --pred " + (work / "pred.jsonl").string() + " --gold " + test_docs + " --out " +
                   (work / "report.json").string()},
  };
  for (const auto& [name, args] : steps) {
    const std::string cmd = cli + " " + args + " > " + (work / (name + ".log")).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != 0) return {false, name + " exited with " + std::to_string(code)};
  }
  const double elapsed = seconds_since(t0);
  Json report;
  try {
    std::ifstream in(work / "report.json");
    report = Json::parse(in);
  } catch (const std::exception& ex) {
    return {false, std::string("report is not valid JSON: ") + ex.what()};
  }
  bool valid = true;
  for (const char* key : {"precision", "recall", "f1"}) {
    valid = valid && report.contains(key) && report[key].is_number() && report[key].get<double>() >= 0.0 &&
            report[key].get<double>() <= 1.0;
  }
  for (const char* key : {"tp", "fp", "fn"}) valid = valid && report.contains(key) && report[key].is_number_unsigned();
  fs::remove_all(work);
  return {valid && elapsed < kSmokeSeconds,
          "pipeline exit 0, exact F1 " + (valid ? fmt(report["f1"].get<double>()) : std::string("?")) + ", " +
              fmt(elapsed, 1) + "s"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"hand-computed metric fixtures", metric_fixtures},
      {"gradient correctness", gradients},
      {"decision rule equivalence", decision_rule},
      {"KG structure recovery", kg_structure},
      {"contextual-synonym recovery", synonym_recovery},
      {"selective supervision ordering", selective_supervision},
      {"determinism and persistence", determinism},
      {"end-to-end smoke run", smoke},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " AC" << i + 1 << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
