#pragma once

namespace phenotag {

// Decision thresholds: relevance threshold tau_p in (0, 1) and Euclidean
// distance threshold tau_d > 0.
struct InferenceConfig {
  double tau_p = 0.5;
  double tau_d = 1.0;
};

// Throws ConfigError for non-finite or out-of-range thresholds.
void validate(const InferenceConfig& cfg);

}  // namespace phenotag
