#pragma once

#include <cstdint>
#include <filesystem>

#include "phenotag/config.hpp"
#include "phenotag/synthetic.hpp"

namespace phenotag {

// Small model and training settings that train the synthetic corpus in
// seconds on one CPU core. Paths point at the files written by
// write_fixture; pipeline outputs are left unset.
RunConfig fixture_run_config(std::uint64_t seed);

// Writes ontology.obo, train/validation/test JSONL (gold), aliases.json,
// lab_rules.json, templates.txt, lexical_rules.json and config.json.
void write_fixture(const SyntheticCorpus& corpus, const RunConfig& config, const std::filesystem::path& dir);

}  // namespace phenotag
