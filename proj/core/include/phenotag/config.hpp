#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "phenotag/annotator.hpp"
#include "phenotag/inference_config.hpp"
#include "phenotag/kg_embed.hpp"

namespace phenotag {

using Json = nlohmann::ordered_json;

// JSON conversions. Missing keys keep their defaults; unknown keys and
// mistyped values raise ConfigError.
void to_json(Json& j, const KgModelConfig& c);
void from_json(const Json& j, KgModelConfig& c);
void to_json(Json& j, const KgTrainConfig& c);
void from_json(const Json& j, KgTrainConfig& c);
void to_json(Json& j, const AnnotatorModelConfig& c);
void from_json(const Json& j, AnnotatorModelConfig& c);
void to_json(Json& j, const AnnotatorTrainConfig& c);
void from_json(const Json& j, AnnotatorTrainConfig& c);
void to_json(Json& j, const InferenceConfig& c);
void from_json(const Json& j, InferenceConfig& c);

struct PathsConfig {
  std::string ontology;
  std::string corpus;      // training documents (text, optional annotations)
  std::string silver;      // keyword-matched training corpus used for pretraining
  std::string augmented;   // optional augmentation corpus mixed into pretraining
  std::string validation;  // gold-annotated documents for threshold calibration
  std::string kg_checkpoint;
  std::string checkpoint;  // annotator checkpoint
  std::string rules;       // lab rules JSON
  std::string templates;   // one context template per line
  std::string lexical_rules;
};

struct AugmentSettings {
  std::size_t contexts_per_span = 2;
  bool lexical_variants = true;
};

struct SelectionSettings {
  std::string strategy = "uncertainty";  // random | uncertainty | oracle
  double fraction = 0.2;
};

struct RunConfig {
  PathsConfig paths;
  std::string root_id = "HP:0000118";
  std::size_t frequent_cap = 400;
  std::size_t min_count = 1;
  KgModelConfig kg_model;
  KgTrainConfig kg_train;
  AnnotatorModelConfig annotator;
  AnnotatorTrainConfig pretrain = default_train_config(TrainMode::kPretrain);
  AnnotatorTrainConfig finetune = default_train_config(TrainMode::kFinetune);
  InferenceConfig inference;
  bool calibrate_thresholds = true;
  AugmentSettings augment;
  SelectionSettings selection;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;

  // Copies the run seed into every training block. Throws ConfigError when
  // no seed is set.
  void propagate_seed();
};

void to_json(Json& j, const PathsConfig& c);
void from_json(const Json& j, PathsConfig& c);
void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
// Hash of the canonical JSON serialization.
std::string config_hash(const RunConfig& c);

}  // namespace phenotag
