#pragma once

#include <optional>
#include <string>

#include "run_context.hpp"

namespace phenotag::cli {

struct OntologyStatsFlags {
  std::string ontology;
  std::string corpus;  // optional: also report keyword-match coverage
};

struct MatchFlags {
  std::string in;
};

struct AugmentFlags {
  std::string in;
  std::string rules;
  std::string templates;
  std::string lexical_rules;
};

struct TrainKgFlags {
  std::string ontology;
};

struct PretrainFlags {
  std::string ontology;
  std::string in;
  std::string augmented;
  std::string kg;
  std::string validation;
};

struct FinetuneFlags {
  std::string checkpoint;
  std::string in;
  std::string ids;  // selection JSON from `select`
  std::string validation;
};

struct SelectFlags {
  std::string checkpoint;
  std::string in;
  std::string ontology;
  std::string strategy;
  std::optional<double> fraction;
};

struct AnnotateFlags {
  std::string checkpoint;
  std::string in;
  std::optional<double> tau_p;
  std::optional<double> tau_d;
};

struct EvalFlags {
  std::string pred;
  std::string gold;
  std::string mode = "exact";
  std::string slice = "all";
  std::string ontology;
  std::string checkpoint;  // frequent set for the rare slice
};

void run_ontology_stats(const CommonFlags& common, const OntologyStatsFlags& flags);
void run_match(const CommonFlags& common, const MatchFlags& flags);
void run_augment(const CommonFlags& common, const AugmentFlags& flags);
void run_train_kg(const CommonFlags& common, const TrainKgFlags& flags);
void run_pretrain(const CommonFlags& common, const PretrainFlags& flags);
void run_finetune(const CommonFlags& common, const FinetuneFlags& flags);
void run_select(const CommonFlags& common, const SelectFlags& flags);
void run_annotate(const CommonFlags& common, const AnnotateFlags& flags);
void run_eval(const CommonFlags& common, const EvalFlags& flags);

}  // namespace phenotag::cli
