#include "phenotag/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "phenotag/errors.hpp"
#include "phenotag/hash.hpp"

namespace phenotag {

namespace {

void require_object(const Json& j, const char* what, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key '" + item.key() + "' in " + what);
    }
  }
}

template <typename V>
void read(const Json& j, const char* key, V& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<V, std::size_t> || std::is_same_v<V, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw ConfigError("");
    }
    out = it->template get<V>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("invalid value for '") + key + "': " + it->dump());
  }
}

}  // namespace

void to_json(Json& j, const KgModelConfig& c) {
  j = Json{{"dim", c.dim}, {"hidden", c.hidden}, {"layers", c.layers},
           {"heads", c.heads}, {"ffn", c.ffn}, {"max_len", c.max_len}};
}

void from_json(const Json& j, KgModelConfig& c) {
  require_object(j, "kg_model", {"dim", "hidden", "layers", "heads", "ffn", "max_len"});
  read(j, "dim", c.dim);
  read(j, "hidden", c.hidden);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "ffn", c.ffn);
  read(j, "max_len", c.max_len);
}

void to_json(Json& j, const KgTrainConfig& c) {
  j = Json{{"steps", c.steps},
           {"lr", c.lr},
           {"batch", c.batch},
           {"negatives", c.negatives},
           {"weight_decay", c.weight_decay},
           {"relational_weight", c.relational_weight},
           {"semantic_weight", c.semantic_weight},
           {"seed", c.seed}};
}

void from_json(const Json& j, KgTrainConfig& c) {
  require_object(j, "kg_train",
                 {"steps", "lr", "batch", "negatives", "weight_decay", "relational_weight", "semantic_weight", "seed"});
  read(j, "steps", c.steps);
  read(j, "lr", c.lr);
  read(j, "batch", c.batch);
  read(j, "negatives", c.negatives);
  read(j, "weight_decay", c.weight_decay);
  read(j, "relational_weight", c.relational_weight);
  read(j, "semantic_weight", c.semantic_weight);
  read(j, "seed", c.seed);
}

void to_json(Json& j, const AnnotatorModelConfig& c) {
  j = Json{{"hidden", c.hidden}, {"layers", c.layers},   {"heads", c.heads},
           {"ffn", c.ffn},       {"max_len", c.max_len}, {"dim", c.dim}};
}

void from_json(const Json& j, AnnotatorModelConfig& c) {
  require_object(j, "annotator", {"hidden", "layers", "heads", "ffn", "max_len", "dim"});
  read(j, "hidden", c.hidden);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "ffn", c.ffn);
  read(j, "max_len", c.max_len);
  read(j, "dim", c.dim);
}

void to_json(Json& j, const AnnotatorTrainConfig& c) {
  j = Json{{"steps", c.steps},
           {"lr", c.lr},
           {"batch", c.batch},
           {"weight_decay", c.weight_decay},
           {"lambda_relevance", c.lambda_relevance},
           {"lambda_frequent", c.lambda_frequent},
           {"lambda_distance", c.lambda_distance},
           {"positive_weight", c.positive_weight},
           {"augmented_share", c.augmented_share},
           {"span_corruption", c.span_corruption},
           {"save_every", c.save_every},
           {"checkpoint_dir", c.checkpoint_dir},
           {"seed", c.seed}};
}

void from_json(const Json& j, AnnotatorTrainConfig& c) {
  require_object(j, "training block",
                 {"steps", "lr", "batch", "weight_decay", "lambda_relevance", "lambda_frequent", "lambda_distance",
                  "positive_weight", "augmented_share", "span_corruption", "save_every", "checkpoint_dir", "seed"});
  read(j, "steps", c.steps);
  read(j, "lr", c.lr);
  read(j, "batch", c.batch);
  read(j, "weight_decay", c.weight_decay);
  read(j, "lambda_relevance", c.lambda_relevance);
  read(j, "lambda_frequent", c.lambda_frequent);
  read(j, "lambda_distance", c.lambda_distance);
  read(j, "positive_weight", c.positive_weight);
  read(j, "augmented_share", c.augmented_share);
  read(j, "span_corruption", c.span_corruption);
  read(j, "save_every", c.save_every);
  read(j, "checkpoint_dir", c.checkpoint_dir);
  read(j, "seed", c.seed);
  if (c.span_corruption < 0.0 || c.span_corruption > 1.0) throw ConfigError("span_corruption must lie in [0, 1]");
  if (c.augmented_share < 0.0 || c.augmented_share > 1.0) throw ConfigError("augmented_share must lie in [0, 1]");
}

void to_json(Json& j, const InferenceConfig& c) { j = Json{{"tau_p", c.tau_p}, {"tau_d", c.tau_d}}; }

void from_json(const Json& j, InferenceConfig& c) {
  require_object(j, "inference", {"tau_p", "tau_d"});
  read(j, "tau_p", c.tau_p);
  read(j, "tau_d", c.tau_d);
  validate(c);
}

void validate(const InferenceConfig& cfg) {
  if (!std::isfinite(cfg.tau_p) || cfg.tau_p <= 0.0 || cfg.tau_p >= 1.0) {
    throw ConfigError("tau_p must lie in (0, 1), got " + std::to_string(cfg.tau_p));
  }
  if (!std::isfinite(cfg.tau_d) || cfg.tau_d <= 0.0) {
    throw ConfigError("tau_d must be positive and finite, got " + std::to_string(cfg.tau_d));
  }
}

void to_json(Json& j, const PathsConfig& c) {
  j = Json{{"ontology", c.ontology},
           {"corpus", c.corpus},
           {"silver", c.silver},
           {"augmented", c.augmented},
           {"validation", c.validation},
           {"kg_checkpoint", c.kg_checkpoint},
           {"checkpoint", c.checkpoint},
           {"rules", c.rules},
           {"templates", c.templates},
           {"lexical_rules", c.lexical_rules}};
}

void from_json(const Json& j, PathsConfig& c) {
  require_object(j, "paths",
                 {"ontology", "corpus", "silver", "augmented", "validation", "kg_checkpoint", "checkpoint", "rules",
                  "templates", "lexical_rules"});
  read(j, "ontology", c.ontology);
  read(j, "corpus", c.corpus);
  read(j, "silver", c.silver);
  read(j, "augmented", c.augmented);
  read(j, "validation", c.validation);
  read(j, "kg_checkpoint", c.kg_checkpoint);
  read(j, "checkpoint", c.checkpoint);
  read(j, "rules", c.rules);
  read(j, "templates", c.templates);
  read(j, "lexical_rules", c.lexical_rules);
}

void to_json(Json& j, const RunConfig& c) {
  j = Json::object();
  j["paths"] = c.paths;
  j["root_id"] = c.root_id;
  j["frequent_cap"] = c.frequent_cap;
  j["min_count"] = c.min_count;
  j["kg_model"] = c.kg_model;
  j["kg_train"] = c.kg_train;
  j["annotator"] = c.annotator;
  j["pretrain"] = c.pretrain;
  j["finetune"] = c.finetune;
  j["inference"] = c.inference;
  j["calibrate_thresholds"] = c.calibrate_thresholds;
  j["augment"] = Json{{"contexts_per_span", c.augment.contexts_per_span},
                      {"lexical_variants", c.augment.lexical_variants}};
  j["selection"] = Json{{"strategy", c.selection.strategy}, {"fraction", c.selection.fraction}};
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["workers"] = c.workers;
}

void from_json(const Json& j, RunConfig& c) {
  require_object(j, "config",
                 {"paths", "root_id", "frequent_cap", "min_count", "kg_model", "kg_train", "annotator", "pretrain",
                  "finetune", "inference", "calibrate_thresholds", "augment", "selection", "seed", "workers"});
  if (j.contains("paths")) from_json(j.at("paths"), c.paths);
  read(j, "root_id", c.root_id);
  read(j, "frequent_cap", c.frequent_cap);
  read(j, "min_count", c.min_count);
  if (j.contains("kg_model")) from_json(j.at("kg_model"), c.kg_model);
  if (j.contains("kg_train")) from_json(j.at("kg_train"), c.kg_train);
  if (j.contains("annotator")) from_json(j.at("annotator"), c.annotator);
  if (j.contains("pretrain")) from_json(j.at("pretrain"), c.pretrain);
  if (j.contains("finetune")) from_json(j.at("finetune"), c.finetune);
  if (j.contains("inference")) from_json(j.at("inference"), c.inference);
  read(j, "calibrate_thresholds", c.calibrate_thresholds);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    require_object(a, "augment", {"contexts_per_span", "lexical_variants"});
    read(a, "contexts_per_span", c.augment.contexts_per_span);
    read(a, "lexical_variants", c.augment.lexical_variants);
  }
  if (j.contains("selection")) {
    const auto& s = j.at("selection");
    require_object(s, "selection", {"strategy", "fraction"});
    read(s, "strategy", c.selection.strategy);
    read(s, "fraction", c.selection.fraction);
  }
  if (j.contains("seed") && !j.at("seed").is_null()) {
    std::uint64_t seed = 0;
    read(j, "seed", seed);
    c.seed = seed;
  }
  read(j, "workers", c.workers);
  if (c.frequent_cap == 0) throw ConfigError("frequent_cap must be >= 1");
  if (c.min_count == 0) throw ConfigError("min_count must be >= 1");
  if (c.workers == 0) throw ConfigError("workers must be >= 1");
}

void RunConfig::propagate_seed() {
  if (!seed) throw ConfigError("a seed is required (set \"seed\" in the config or pass --seed)");
  kg_train.seed = *seed;
  pretrain.seed = *seed;
  finetune.seed = *seed;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<RunConfig>();
}

std::string config_hash(const RunConfig& c) { return content_hash(Json(c).dump()); }

}  // namespace phenotag
