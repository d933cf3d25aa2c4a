#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/version.hpp"

namespace {

using namespace phenotag::cli;

void add_common(CLI::App* cmd, CommonFlags& common, const std::string& out_help) {
  cmd->add_option("--config", common.config, "Run configuration (JSON)");
  cmd->add_option("--seed", common.seed, "Random seed; overrides the config");
  cmd->add_option("--workers", common.workers, "Worker threads for document-level parallelism");
  cmd->add_option("--out", common.out, out_help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ontology-grounded phenotype concept annotation"};
  app.set_version_flag("--version", std::string(phenotag::kVersion));
  app.require_subcommand(1);

  CommonFlags common;

  OntologyStatsFlags stats;
  auto* stats_cmd = app.add_subcommand("ontology-stats", "Summarize an OBO ontology under the configured root");
  add_common(stats_cmd, common, "Also write the statistics JSON here");
  stats_cmd->add_option("--ontology", stats.ontology, "OBO file");
  stats_cmd->add_option("--corpus", stats.corpus, "Corpus JSONL for keyword-match coverage");
  stats_cmd->callback([&] { run_ontology_stats(common, stats); });

  MatchFlags match;
  auto* match_cmd = app.add_subcommand("match", "Keyword-match a corpus into silver annotations");
  add_common(match_cmd, common, "Silver corpus JSONL");
  match_cmd->add_option("--in", match.in, "Input corpus JSONL");
  match_cmd->callback([&] { run_match(common, match); });

  AugmentFlags augment;
  auto* augment_cmd = app.add_subcommand("augment", "Build an augmentation corpus from a silver corpus");
  add_common(augment_cmd, common, "Augmentation corpus JSONL");
  augment_cmd->add_option("--in", augment.in, "Silver corpus JSONL");
  augment_cmd->add_option("--rules", augment.rules, "Lab rules JSON");
  augment_cmd->add_option("--templates", augment.templates, "Context templates, one per line");
  augment_cmd->add_option("--lexical-rules", augment.lexical_rules, "Lexical variant rules JSON");
  augment_cmd->callback([&] { run_augment(common, augment); });

  TrainKgFlags kg;
  auto* kg_cmd = app.add_subcommand("train-kg", "Train concept embeddings from the ontology");
  add_common(kg_cmd, common, "KG checkpoint directory");
  kg_cmd->add_option("--ontology", kg.ontology, "OBO file");
  kg_cmd->callback([&] { run_train_kg(common, kg); });

  PretrainFlags pretrain;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Train the annotator on silver (and augmented) data");
  add_common(pretrain_cmd, common, "Annotator checkpoint directory");
  pretrain_cmd->add_option("--ontology", pretrain.ontology, "OBO file");
  pretrain_cmd->add_option("--in", pretrain.in, "Silver corpus JSONL");
  pretrain_cmd->add_option("--augmented", pretrain.augmented, "Augmentation corpus JSONL");
  pretrain_cmd->add_option("--kg", pretrain.kg, "KG checkpoint directory");
  pretrain_cmd->add_option("--validation", pretrain.validation, "Gold JSONL for threshold calibration");
  pretrain_cmd->callback([&] { run_pretrain(common, pretrain); });

  FinetuneFlags finetune;
  auto* finetune_cmd = app.add_subcommand("finetune", "Continue training an annotator on gold documents");
  add_common(finetune_cmd, common, "Fine-tuned checkpoint directory");
  finetune_cmd->add_option("--checkpoint", finetune.checkpoint, "Pretrained annotator checkpoint");
  finetune_cmd->add_option("--in", finetune.in, "Gold corpus JSONL");
  finetune_cmd->add_option("--ids", finetune.ids, "Selection JSON written by `select`");
  finetune_cmd->add_option("--validation", finetune.validation, "Gold JSONL for threshold calibration");
  finetune_cmd->callback([&] { run_finetune(common, finetune); });

  SelectFlags select;
  auto* select_cmd = app.add_subcommand("select", "Choose documents for fine-tuning");
  add_common(select_cmd, common, "Selection JSON (default: standard output)");
  select_cmd->add_option("--checkpoint", select.checkpoint, "Annotator checkpoint (uncertainty)");
  select_cmd->add_option("--in", select.in, "Gold corpus JSONL");
  select_cmd->add_option("--ontology", select.ontology, "OBO file (oracle)");
  select_cmd->add_option("--strategy", select.strategy, "random | uncertainty | oracle");
  select_cmd->add_option("--fraction", select.fraction, "Share of documents to select, in (0, 1]");
  select_cmd->callback([&] { run_select(common, select); });

  AnnotateFlags annotate;
  auto* annotate_cmd = app.add_subcommand("annotate", "Predict concept annotations");
  add_common(annotate_cmd, common, "Predicted corpus JSONL");
  annotate_cmd->add_option("--checkpoint", annotate.checkpoint, "Annotator checkpoint");
  annotate_cmd->add_option("--in", annotate.in, "Documents JSONL");
  annotate_cmd->add_option("--tau-p", annotate.tau_p, "Relevance threshold override");
  annotate_cmd->add_option("--tau-d", annotate.tau_d, "Distance threshold override");
  annotate_cmd->callback([&] { run_annotate(common, annotate); });

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold annotations");
  add_common(eval_cmd, common, "Also write the report JSON here");
  eval_cmd->add_option("--pred", eval.pred, "Predicted corpus JSONL");
  eval_cmd->add_option("--gold", eval.gold, "Gold corpus JSONL");
  eval_cmd->add_option("--mode", eval.mode, "exact | generalised");
  eval_cmd->add_option("--slice", eval.slice, "all | rare_only");
  eval_cmd->add_option("--ontology", eval.ontology, "OBO file (generalised mode)");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Annotator checkpoint (rare slice)");
  eval_cmd->callback([&] { run_eval(common, eval); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const phenotag::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const phenotag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
