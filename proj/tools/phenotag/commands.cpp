#include "commands.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "phenotag/annotator.hpp"
#include "phenotag/augment.hpp"
#include "phenotag/checkpoint.hpp"
#include "phenotag/corpus.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/evaluator.hpp"
#include "phenotag/inference.hpp"
#include "phenotag/kg_embed.hpp"
#include "phenotag/ontology.hpp"
#include "phenotag/parallel.hpp"
#include "phenotag/selective.hpp"
#include "phenotag/tokenizer.hpp"

namespace phenotag::cli {

namespace {

OntologyGraph load_ontology(RunContext& ctx, const std::string& flag) {
  const auto path = ctx.input_path(flag, ctx.config().paths.ontology, "ontology");
  ctx.record_input("ontology", path);
  return load_obo(path, ctx.config().root_id);
}

std::vector<Document> load_docs(RunContext& ctx, const std::string& role, const std::string& path,
                                AnnotationSource source) {
  ctx.record_input(role, path);
  return load_corpus(path, source);
}

void write_jsonl(RunContext& ctx, const fs::path& path, const std::vector<Document>& docs) {
  save_corpus(path.string(), docs);
  ctx.record_output("corpus", path);
  ctx.write_manifest(path);
}

// Reports progress on stderr roughly ten times per run.
auto progress(const std::string& label, std::size_t steps) {
  const std::size_t every = std::max<std::size_t>(1, steps / 10);
  return [label, every, steps](const auto& log) {
    if (log.step % every == 0 || log.step + 1 == steps) {
      std::cerr << label << " step " << log.step + 1 << "/" << steps << " loss " << log.total << "\n";
    }
  };
}

void write_history(const fs::path& path, const std::vector<AnnotatorStepLog>& history) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (const auto& h : history) {
    out << Json{{"step", h.step}, {"relevance", h.relevance}, {"frequent", h.frequent}, {"distance", h.distance},
                {"total", h.total}}
               .dump()
        << "\n";
  }
}

std::vector<TrainingSample> samples_of(const std::vector<Document>& docs, const Vocabulary& vocab, std::size_t max_len,
                                       bool augmented) {
  std::vector<TrainingSample> out;
  for (const auto& doc : docs) {
    auto set = to_training_samples(doc, vocab, max_len);
    for (const auto& w : set.warnings) std::cerr << "warning: " << w << "\n";
    for (auto& s : set.samples) {
      s.augmented = augmented;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// Thresholds stored with a trained annotator: calibrated on the validation
// corpus when one is configured, else the configured values.
InferenceConfig choose_thresholds(RunContext& ctx, const AnnotatorModel& model, const ConceptEmbeddingTable& table,
                                  const std::string& validation_flag, const InferenceConfig& fallback) {
  const auto path = ctx.optional_input(validation_flag, ctx.config().paths.validation);
  if (!path) return fallback;
  const auto docs = load_docs(ctx, "validation", *path, AnnotationSource::kGold);
  if (!ctx.config().calibrate_thresholds) return default_thresholds(model, table, docs);
  const auto cal = calibrate_thresholds(model, table, docs);
  ctx.set_result("validation_f1", cal.best_f1);
  std::cerr << "calibrated tau_p " << cal.best.tau_p << " tau_d " << cal.best.tau_d << " (validation F1 "
            << cal.best_f1 << ")\n";
  return cal.best;
}

Json to_json_report(const EvalReport& r) {
  return Json{{"mode", to_string(r.mode)}, {"slice", to_string(r.slice)}, {"tp", r.tp},
              {"fp", r.fp},               {"fn", r.fn},                   {"precision", r.precision},
              {"recall", r.recall},       {"f1", r.f1}};
}

Json to_json(const InferenceConfig& c) { return Json{{"tau_p", c.tau_p}, {"tau_d", c.tau_d}}; }

}  // namespace

void run_ontology_stats(const CommonFlags& common, const OntologyStatsFlags& flags) {
  RunContext ctx("ontology-stats", common);
  const auto graph = load_ontology(ctx, flags.ontology);
  Json stats;
  stats["root"] = graph.root_id();
  stats["concepts"] = graph.size();
  std::size_t with_definition = 0, synonyms = 0, max_depth = 0;
  for (const auto& id : graph.annotatable_ids()) {
    const auto& c = graph.concept_at(id);
    with_definition += c.definition.empty() ? 0 : 1;
    synonyms += c.synonyms.size();
  }
  Json histogram = Json::object();
  for (const auto& [depth, n] : graph.depth_histogram()) {
    histogram[std::to_string(depth)] = n;
    max_depth = std::max(max_depth, depth);
  }
  stats["with_definition"] = with_definition;
  stats["synonyms"] = synonyms;
  stats["surface_forms"] = SurfaceMatcher(graph).surface_count();
  stats["max_depth"] = max_depth;
  stats["depth_histogram"] = histogram;
  if (const auto corpus = ctx.optional_input(flags.corpus, "")) {
    auto docs = load_docs(ctx, "corpus", *corpus, AnnotationSource::kGold);
    for (auto& d : docs) d.annotations = shallow_match(d, graph);
    const auto counts = count_matches(docs);
    stats["matched_concepts"] = counts.size();
    stats["frequent_set"] = compute_frequent_set(graph, counts, ctx.config().frequent_cap).size();
  }
  std::cout << stats.dump(2) << "\n";
  if (!common.out.empty()) {
    const auto out = ctx.output_path();
    std::ofstream(out) << stats.dump(2) << "\n";
    ctx.record_output("stats", out);
    ctx.write_manifest(out);
  }
}

void run_match(const CommonFlags& common, const MatchFlags& flags) {
  RunContext ctx("match", common);
  const auto graph = load_ontology(ctx, "");
  auto docs = load_docs(ctx, "in", ctx.input_path(flags.in, ctx.config().paths.corpus, "input corpus (--in)"),
                        AnnotationSource::kGold);
  const SurfaceMatcher matcher(graph);
  parallel_for(docs.size(), ctx.workers(), [&](std::size_t i) { docs[i].annotations = matcher.match(docs[i].tokens); });
  std::size_t spans = 0;
  for (const auto& d : docs) spans += d.annotations.size();
  ctx.set_result("documents", docs.size());
  ctx.set_result("annotations", spans);
  write_jsonl(ctx, ctx.output_path(ctx.config().paths.silver), docs);
}

void run_augment(const CommonFlags& common, const AugmentFlags& flags) {
  RunContext ctx("augment", common);
  const auto& cfg = ctx.config();
  const auto graph = load_ontology(ctx, "");
  const auto docs = load_docs(ctx, "in", ctx.input_path(flags.in, cfg.paths.silver, "silver corpus (--in)"),
                              AnnotationSource::kSilver);

  std::vector<Document> out;
  if (const auto path = ctx.optional_input(flags.rules, cfg.paths.rules)) {
    ctx.record_input("rules", *path);
    const auto rules = load_lab_rules(*path, &graph);
    std::vector<std::vector<Annotation>> found(docs.size());
    std::vector<std::vector<std::string>> warnings(docs.size());
    parallel_for(docs.size(), ctx.workers(),
                 [&](std::size_t i) { found[i] = numeric_surrogate(docs[i].tokens, rules, &warnings[i]); });
    std::size_t added = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      for (const auto& w : warnings[i]) std::cerr << "warning: " << docs[i].id << ": " << w << "\n";
      auto copy = docs[i];
      const auto n = merge_annotations(copy.annotations, found[i]);
      if (n == 0) continue;
      added += n;
      copy.id += "+num";
      out.push_back(std::move(copy));
    }
    ctx.set_result("numeric_annotations", added);
  }

  if (const auto path = ctx.optional_input(flags.templates, cfg.paths.templates)) {
    ctx.record_input("templates", *path);
    const auto templates = load_templates(*path);
    LexicalRules lexical;
    if (cfg.augment.lexical_variants) {
      if (const auto lex = ctx.optional_input(flags.lexical_rules, cfg.paths.lexical_rules)) {
        ctx.record_input("lexical_rules", *lex);
        lexical = load_lexical_rules(*lex);
      }
    }
    // Every distinct (concept, surface) pair seen in the corpus, plus its
    // lexical variants, is placed into the first n templates.
    std::map<ConceptId, std::set<std::string>> surfaces;
    for (const auto& d : docs) {
      for (const auto& a : d.annotations) {
        std::string text;
        for (auto t = a.start_token; t < a.end_token; ++t) text += (text.empty() ? "" : " ") + d.tokens[t].text;
        surfaces[a.concept_id].insert(text);
      }
    }
    const auto n = std::min(cfg.augment.contexts_per_span, templates.size());
    std::size_t generated = 0;
    for (const auto& [concept_id, forms] : surfaces) {
      std::set<std::string> all = forms;
      for (const auto& f : forms) {
        for (auto& v : lexical_variants(f, lexical)) all.insert(std::move(v));
      }
      std::size_t k = 0;
      for (const auto& form : all) {
        auto ctx_docs = generate_contexts(form, concept_id, templates, n,
                                          "ctx-" + concept_id + "-" + std::to_string(k++));
        generated += ctx_docs.size();
        for (auto& d : ctx_docs) out.push_back(std::move(d));
      }
    }
    ctx.set_result("context_documents", generated);
  }
  ctx.set_result("documents", out.size());
  write_jsonl(ctx, ctx.output_path(cfg.paths.augmented), out);
}

void run_train_kg(const CommonFlags& common, const TrainKgFlags& flags) {
  RunContext ctx("train-kg", common);
  ctx.require_seed();
  const auto& cfg = ctx.config();
  const auto graph = load_ontology(ctx, flags.ontology);
  KgModel model(cfg.kg_model, build_definition_vocabulary(graph), *cfg.seed);
  std::vector<KgStepLog> history;
  const auto report = progress("train-kg", cfg.kg_train.steps);
  const auto result = train_kg(model, graph, cfg.kg_train, [&](const KgStepLog& log) {
    history.push_back(log);
    report(log);
  });
  const auto out = ctx.output_path(cfg.paths.kg_checkpoint);
  save_kg(model, result.embeddings, out);
  {
    std::ofstream hist(out / "history.jsonl");
    for (const auto& h : history) {
      hist << Json{{"step", h.step}, {"relational", h.relational}, {"semantic", h.semantic}, {"total", h.total}}.dump()
           << "\n";
    }
  }
  const auto structure = measure_structure(graph, result.embeddings, *cfg.seed);
  ctx.set_result("ranking_accuracy", structure.ranking_accuracy);
  ctx.set_result("neighbour_mean", structure.neighbour_mean);
  ctx.set_result("non_neighbour_mean", structure.non_neighbour_mean);
  ctx.record_output("checkpoint", out);
  ctx.write_manifest(out);
}

void run_pretrain(const CommonFlags& common, const PretrainFlags& flags) {
  RunContext ctx("pretrain", common);
  ctx.require_seed();
  const auto& cfg = ctx.config();
  const auto graph = load_ontology(ctx, flags.ontology);
  const auto silver = load_docs(ctx, "silver", ctx.input_path(flags.in, cfg.paths.silver, "silver corpus (--in)"),
                                AnnotationSource::kSilver);
  std::vector<Document> augmented;
  if (const auto path = ctx.optional_input(flags.augmented, cfg.paths.augmented)) {
    augmented = load_docs(ctx, "augmented", *path, AnnotationSource::kAugmented);
  }
  for (const auto& d : silver) validate_document(d, &graph);
  for (const auto& d : augmented) validate_document(d, &graph);

  const auto kg_dir = ctx.input_path(flags.kg, cfg.paths.kg_checkpoint, "KG checkpoint (--kg)");
  ctx.record_input("kg_checkpoint", kg_dir);
  const auto kg = load_kg(kg_dir);

  std::vector<Document> all = silver;
  all.insert(all.end(), augmented.begin(), augmented.end());
  const auto frequent = compute_frequent_set(graph, count_matches(silver), cfg.frequent_cap);
  AnnotatorModel model(cfg.annotator, build_vocabulary(all, cfg.min_count), FrequentSet(frequent), *cfg.seed);
  auto samples = samples_of(silver, model.vocab(), cfg.annotator.max_len, false);
  auto extra = samples_of(augmented, model.vocab(), cfg.annotator.max_len, true);
  samples.insert(samples.end(), extra.begin(), extra.end());

  const auto history = train_annotator(model, samples, kg.embeddings, cfg.pretrain, progress("pretrain", cfg.pretrain.steps));
  const auto thresholds = choose_thresholds(ctx, model, kg.embeddings, flags.validation, cfg.inference);
  const auto out = ctx.output_path(cfg.paths.checkpoint);
  save_annotator(model, kg.embeddings, thresholds, out);
  write_history(out / "history.jsonl", history);
  ctx.set_result("thresholds", to_json(thresholds));
  ctx.set_result("frequent_set", frequent.size());
  ctx.set_result("samples", samples.size());
  ctx.record_output("checkpoint", out);
  ctx.write_manifest(out);
}

void run_finetune(const CommonFlags& common, const FinetuneFlags& flags) {
  RunContext ctx("finetune", common);
  ctx.require_seed();
  const auto& cfg = ctx.config();
  const auto base = ctx.input_path(flags.checkpoint, cfg.paths.checkpoint, "annotator checkpoint (--checkpoint)");
  ctx.record_input("checkpoint", base);
  auto loaded = load_annotator(base);
  auto docs = load_docs(ctx, "gold", ctx.input_path(flags.in, cfg.paths.corpus, "gold corpus (--in)"),
                        AnnotationSource::kGold);
  if (const auto ids_path = ctx.optional_input(flags.ids, "")) {
    ctx.record_input("selection", *ids_path);
    std::ifstream in(*ids_path);
    Json selection;
    try {
      selection = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("selection file " + *ids_path + " is not valid JSON: " + e.what());
    }
    if (!selection.contains("selected") || !selection["selected"].is_array()) {
      throw DataError("selection file " + *ids_path + " has no \"selected\" array");
    }
    std::set<std::string> keep;
    for (const auto& id : selection["selected"]) keep.insert(id.get<std::string>());
    std::erase_if(docs, [&](const Document& d) { return !keep.count(d.id); });
    if (docs.size() != keep.size()) throw DataError("selection names documents missing from the gold corpus");
  }
  const auto samples = samples_of(docs, loaded.model->vocab(), loaded.model->config().max_len, false);
  const auto history =
      train_annotator(*loaded.model, samples, loaded.embeddings, cfg.finetune, progress("finetune", cfg.finetune.steps));
  const auto thresholds = choose_thresholds(ctx, *loaded.model, loaded.embeddings, flags.validation, loaded.inference);
  const auto out = ctx.output_path();
  save_annotator(*loaded.model, loaded.embeddings, thresholds, out);
  write_history(out / "history.jsonl", history);
  ctx.set_result("documents", docs.size());
  ctx.set_result("thresholds", to_json(thresholds));
  ctx.record_output("checkpoint", out);
  ctx.write_manifest(out);
}

void run_select(const CommonFlags& common, const SelectFlags& flags) {
  RunContext ctx("select", common);
  auto& cfg = ctx.config();
  if (!flags.strategy.empty()) cfg.selection.strategy = flags.strategy;
  if (flags.fraction) cfg.selection.fraction = *flags.fraction;
  const auto strategy = strategy_from_string(cfg.selection.strategy);
  if (strategy == Strategy::kRandom) ctx.require_seed();

  const auto docs = load_docs(ctx, "in", ctx.input_path(flags.in, cfg.paths.corpus, "corpus (--in)"),
                              AnnotationSource::kGold);
  std::vector<SelectionScore> scores(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) scores[i] = {docs[i].id, 0.0, strategy};
  if (strategy == Strategy::kUncertainty) {
    const auto path = ctx.input_path(flags.checkpoint, cfg.paths.checkpoint, "annotator checkpoint (--checkpoint)");
    ctx.record_input("checkpoint", path);
    const auto loaded = load_annotator(path);
    parallel_for(docs.size(), ctx.workers(), [&](std::size_t i) {
      scores[i].score = score_uncertainty(*loaded.model, docs[i], loaded.inference.tau_p);
    });
  } else if (strategy == Strategy::kOracle) {
    const auto graph = load_ontology(ctx, flags.ontology);
    parallel_for(docs.size(), ctx.workers(), [&](std::size_t i) {
      scores[i].score = static_cast<double>(score_oracle(shallow_match(docs[i], graph), docs[i].annotations));
    });
  }
  const auto chosen = select(scores, strategy, cfg.selection.fraction, cfg.seed.value_or(0));

  Json report;
  report["strategy"] = to_string(strategy);
  report["fraction"] = cfg.selection.fraction;
  report["selected"] = chosen;
  auto table = Json::array();
  for (const auto& s : scores) table.push_back({{"doc_id", s.doc_id}, {"score", s.score}});
  report["scores"] = std::move(table);
  ctx.set_result("selected", chosen.size());
  if (common.out.empty()) {
    std::cout << report.dump(2) << "\n";
    return;
  }
  const auto out = ctx.output_path();
  std::ofstream(out) << report.dump(2) << "\n";
  ctx.record_output("selection", out);
  ctx.write_manifest(out);
}

void run_annotate(const CommonFlags& common, const AnnotateFlags& flags) {
  RunContext ctx("annotate", common);
  const auto& cfg = ctx.config();
  const auto path = ctx.input_path(flags.checkpoint, cfg.paths.checkpoint, "annotator checkpoint (--checkpoint)");
  ctx.record_input("checkpoint", path);
  const auto loaded = load_annotator(path);
  if (const auto onto = ctx.optional_input("", cfg.paths.ontology)) ctx.record_input("ontology", *onto);
  auto docs = load_docs(ctx, "in", ctx.input_path(flags.in, "", "documents (--in)"), AnnotationSource::kGold);
  auto thresholds = loaded.inference;
  if (flags.tau_p) thresholds.tau_p = *flags.tau_p;
  if (flags.tau_d) thresholds.tau_d = *flags.tau_d;
  validate(thresholds);
  const auto predicted = annotate_corpus(*loaded.model, loaded.embeddings, docs, thresholds, ctx.workers());
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].annotations = predicted[i];
  ctx.set_result("thresholds", to_json(thresholds));
  ctx.set_result("documents", docs.size());
  write_jsonl(ctx, ctx.output_path(), docs);
}

void run_eval(const CommonFlags& common, const EvalFlags& flags) {
  RunContext ctx("eval", common);
  const auto mode = match_mode_from_string(flags.mode);
  if (flags.slice != "all" && flags.slice != "rare_only") throw ConfigError("unknown slice '" + flags.slice + "'");
  const auto pred = load_docs(ctx, "pred", ctx.input_path(flags.pred, "", "predictions (--pred)"),
                              AnnotationSource::kPredicted);
  const auto gold = load_docs(ctx, "gold", ctx.input_path(flags.gold, "", "gold corpus (--gold)"),
                              AnnotationSource::kGold);
  auto pred_sets = concept_sets(pred);
  auto gold_sets = concept_sets(gold);
  if (flags.slice == "rare_only") {
    const auto path = ctx.input_path(flags.checkpoint, ctx.config().paths.checkpoint,
                                     "annotator checkpoint for the frequent set (--checkpoint)");
    ctx.record_input("checkpoint", path);
    const auto ckpt = load_checkpoint(path);
    std::tie(pred_sets, gold_sets) = rare_slice(pred_sets, gold_sets, FrequentSet(ckpt.frequent_set));
  }
  EvalReport report;
  if (mode == MatchMode::kExact) {
    report = exact_scores(pred_sets, gold_sets);
  } else {
    report = generalised_scores(pred_sets, gold_sets, load_ontology(ctx, flags.ontology));
  }
  report.slice = flags.slice == "all" ? Slice::kAll : Slice::kRareOnly;
  const auto json = to_json_report(report);
  std::cout << json.dump(2) << "\n";
  if (!common.out.empty()) {
    const auto out = ctx.output_path();
    std::ofstream(out) << json.dump(2) << "\n";
    ctx.set_result("report", json);
    ctx.record_output("report", out);
    ctx.write_manifest(out);
  }
}

}  // namespace phenotag::cli
