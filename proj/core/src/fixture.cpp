#include "phenotag/fixture.hpp"

#include <fstream>

#include "phenotag/errors.hpp"

namespace phenotag {

RunConfig fixture_run_config(std::uint64_t seed) {
  RunConfig c;
  c.paths.ontology = "ontology.obo";
  c.paths.corpus = "train.jsonl";
  c.paths.validation = "validation.jsonl";
  c.paths.rules = "lab_rules.json";
  c.paths.templates = "templates.txt";
  c.paths.lexical_rules = "lexical_rules.json";
  c.root_id = kSyntheticRoot;
  c.kg_model = {.dim = 32, .hidden = 32, .layers = 1, .heads = 2, .ffn = 64, .max_len = 64};
  c.kg_train.steps = 500;
  c.kg_train.lr = 1e-3;
  c.kg_train.batch = 16;
  c.annotator = {.hidden = 32, .layers = 2, .heads = 2, .ffn = 64, .max_len = 64, .dim = 32};
  c.pretrain.steps = 1000;
  c.pretrain.lr = 1e-3;
  c.pretrain.batch = 16;
  c.pretrain.span_corruption = 0.3;
  c.finetune.steps = 200;
  c.finetune.lr = 3e-4;
  c.finetune.batch = 16;
  c.seed = seed;
  c.propagate_seed();
  return c;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_fixture(const SyntheticCorpus& corpus, const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "ontology.obo");
    write_obo(out, corpus.concepts);
  }
  {
    auto out = open_out(dir / "train.jsonl");
    write_corpus(out, corpus.train);
  }
  {
    auto out = open_out(dir / "validation.jsonl");
    write_corpus(out, corpus.validation);
  }
  {
    auto out = open_out(dir / "test.jsonl");
    write_corpus(out, corpus.test);
  }
  {
    Json aliases = Json::object();
    for (const auto& [id, alias] : corpus.alias) aliases[id] = alias;
    open_out(dir / "aliases.json") << aliases.dump(2) << "\n";
  }
  {
    // One rule on the first concept so numeric surrogates have a target.
    const auto& target = corpus.concepts.at(1).id;
    const Json rules = Json::array({Json{{"analyte", "hgb"}, {"comparator", "<"}, {"threshold", 12.0},
                                         {"unit", "g/dl"}, {"concept_id", target}}});
    open_out(dir / "lab_rules.json") << rules.dump(2) << "\n";
  }
  open_out(dir / "templates.txt") << "patient was admitted with {span} to the ward .\n"
                                     "there is evidence of {span} on examination .\n"
                                     "family reports {span} since last visit .\n";
  {
    const Json lexical{{"suffixes", Json::array({Json{{"strip", ""}, {"append", "ish"}},
                                                 Json{{"strip", "ia"}, {"append", "ic"}}})},
                       {"word_pairs", Json::object()},
                       {"reorder_of", true}};
    open_out(dir / "lexical_rules.json") << lexical.dump(2) << "\n";
  }
  open_out(dir / "config.json") << Json(config).dump(2) << "\n";
}

}  // namespace phenotag
