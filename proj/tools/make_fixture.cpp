// Writes the synthetic fixture: ontology, gold corpora, rule files and a
// desk-scale run configuration.
#include <CLI11.hpp>
#include <iostream>

#include "phenotag/errors.hpp"
#include "phenotag/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic fixture"};
  std::string out;
  std::uint64_t corpus_seed = 5;
  std::uint64_t run_seed = 7;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--corpus-seed", corpus_seed, "Seed of the corpus generator");
  app.add_option("--seed", run_seed, "Seed written into config.json");
  CLI11_PARSE(app, argc, argv);
  try {
    phenotag::SyntheticCorpusConfig cfg;
    cfg.seed = corpus_seed;
    phenotag::write_fixture(phenotag::generate_corpus(cfg), phenotag::fixture_run_config(run_seed), out);
  } catch (const phenotag::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
