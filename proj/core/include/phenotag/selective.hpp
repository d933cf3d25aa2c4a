#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phenotag/annotator.hpp"
#include "phenotag/corpus.hpp"

namespace phenotag {

enum class Strategy { kRandom, kUncertainty, kOracle };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view text);

struct SelectionScore {
  std::string doc_id;
  double score = 0.0;
  Strategy strategy = Strategy::kRandom;
};

// Labelled fractions offered as presets.
inline constexpr std::array<double, 5> kFractionPresets{0.2, 0.4, 0.5, 0.6, 0.8};

// Shannon entropy (natural log) of one distribution; zero entries contribute 0.
double entropy(std::span<const float> dist);

// Mean entropy over tokens with relevance >= tau_p, or over all tokens when
// none qualifies; 0 for an empty document.
double document_uncertainty(const std::vector<TokenPrediction>& preds, double tau_p);
double score_uncertainty(const AnnotatorModel& model, const Document& doc, double tau_p);

// Size of the symmetric difference of the two concept-id sets.
std::size_t score_oracle(const std::vector<Annotation>& silver, const std::vector<Annotation>& gold);

// ceil(fraction * n), guarded against floating-point overshoot.
std::size_t selection_size(std::size_t n, double fraction);

// random: doc ids sorted, shuffled with the seed, prefix taken. Other
// strategies: descending score, ties by ascending doc id. fraction must lie in
// (0, 1].
std::vector<std::string> select(const std::vector<SelectionScore>& scores, Strategy strategy, double fraction,
                                std::uint64_t seed);

}  // namespace phenotag
