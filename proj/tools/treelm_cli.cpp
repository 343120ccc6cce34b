// Command-line front end; talks to the core exclusively through the C API.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "treelm.h"

namespace {

using nlohmann::json;

int exit_code(tlm_status s) {
  if (s == TLM_OK) return 0;
  if (s == TLM_E_NUMERIC) return 2;
  return 1;
}

int report(tlm_status s) {
  if (s != TLM_OK) std::cerr << "error: " << tlm_last_error() << "\n";
  return exit_code(s);
}

std::string fnv1a64_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "unreadable";
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// Reproducibility record written next to each primary output.
struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write() const {
    if (outputs.empty()) return;
    json m;
    m["command"] = command;
    m["build"] = tlm_version();
    m["seed"] = seed;
    m["config"] = config;
    json digests = json::object();
    for (const auto& path : inputs) digests[path] = fnv1a64_file(path);
    m["input_digests"] = digests;
    m["outputs"] = outputs;
    auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    m["wall_ms"] = wall;
    m["finished_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
    std::ofstream os(outputs.front() + ".manifest.json");
    os << m.dump(2) << "\n";
  }
};

const char* opt_cstr(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transition-based constituency parser and language model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tlm_version());

  // ------------------------------------------------------------------ oracle
  auto* oracle = app.add_subcommand(
      "oracle", "convert between bracketed treebanks and action-sequence files");
  std::string oracle_mode = "disc", oracle_in, oracle_out, oracle_words;
  bool oracle_decode = false;
  oracle->add_option("--mode", oracle_mode, "transition system: disc|gen")
      ->check(CLI::IsMember({"disc", "gen"}));
  oracle->add_flag("--decode", oracle_decode, "actions -> trees instead of trees -> actions");
  oracle->add_option("--words", oracle_words,
                     "surface word file (written on encode, read on decode)");
  oracle->add_option("input", oracle_in)->required();
  oracle->add_option("output", oracle_out)->required();

  // ------------------------------------------------------------------- train
  auto* train = app.add_subcommand("train", "train encoder and decoder jointly");
  std::string train_in, train_format = "trees", train_dev, train_pre, train_cfg, train_log;
  std::string train_out;
  std::uint64_t train_seed = 1;
  int train_threads = 1;
  train->add_option("--train", train_in, "training treebank or token file")->required();
  train->add_option("--format", train_format)->check(CLI::IsMember({"trees", "tokens"}));
  train->add_option("--dev", train_dev, "validation treebank");
  train->add_option("--pretrained", train_pre, "pretrained word vectors");
  train->add_option("--config", train_cfg, "flat key = value config file");
  auto* train_seed_opt =
      train->add_option("--seed", train_seed, "overrides the config file's seed");
  train->add_option("--threads", train_threads);
  train->add_option("--out", train_out, "checkpoint path")->required();
  train->add_option("--log", train_log, "validation log path");

  // ------------------------------------------------------------------- parse
  auto* parse = app.add_subcommand("parse", "parse sentences with the trained model");
  std::string parse_model, parse_in, parse_fmt = "trees", parse_method = "greedy", parse_out;
  int parse_samples = 100, parse_threads = 1;
  std::uint64_t parse_seed = 1;
  parse->add_option("--model", parse_model)->required();
  parse->add_option("--input", parse_in)->required();
  parse->add_option("--input-format", parse_fmt)->check(CLI::IsMember({"trees", "tokens"}));
  parse->add_option("--method", parse_method)->check(CLI::IsMember({"greedy", "rerank"}));
  parse->add_option("--samples", parse_samples, "rerank candidate samples");
  parse->add_option("--seed", parse_seed);
  parse->add_option("--threads", parse_threads);
  parse->add_option("--out", parse_out)->required();

  // ----------------------------------------------------------------- lm-eval
  auto* lmeval = app.add_subcommand("lm-eval", "estimate per-sentence log p(x) and perplexity");
  std::string lm_model, lm_in, lm_fmt = "trees", lm_method = "importance", lm_out;
  int lm_samples = 100, lm_threads = 1;
  std::uint64_t lm_seed = 1;
  lmeval->add_option("--model", lm_model)->required();
  lmeval->add_option("--input", lm_in)->required();
  lmeval->add_option("--input-format", lm_fmt)->check(CLI::IsMember({"trees", "tokens"}));
  lmeval->add_option("--method", lm_method)->check(CLI::IsMember({"importance", "elbo"}));
  lmeval->add_option("--samples", lm_samples);
  lmeval->add_option("--seed", lm_seed);
  lmeval->add_option("--threads", lm_threads);
  lmeval->add_option("--out", lm_out, "per-sentence TSV")->required();

  // ------------------------------------------------------------------- score
  auto* score = app.add_subcommand("score", "labeled bracketing P/R/F1");
  std::string score_gold, score_pred;
  bool score_verbose = false;
  score->add_option("--gold", score_gold)->required();
  score->add_option("--pred", score_pred)->required();
  score->add_flag("--verbose", score_verbose, "also emit a per-sentence TSV");

  // ------------------------------------------------------------------ sample
  auto* sample = app.add_subcommand("sample", "draw sentences from the generative model");
  std::string sample_model, sample_out;
  int sample_count = 10, sample_maxlen = 0;
  std::uint64_t sample_seed = 1;
  bool sample_trees = false;
  sample->add_option("--model", sample_model)->required();
  sample->add_option("--count", sample_count);
  sample->add_option("--max-len", sample_maxlen, "longest sentence to keep (0: model limit)");
  sample->add_option("--seed", sample_seed);
  sample->add_flag("--trees", sample_trees, "print full derivations instead of sentences");
  sample->add_option("--out", sample_out)->required();

  CLI11_PARSE(app, argc, argv);

  if (oracle->parsed()) {
    Manifest man;
    man.command = "oracle";
    man.config = {{"mode", oracle_mode}, {"decode", oracle_decode}};
    man.inputs = {oracle_in};
    man.outputs = {oracle_out};
    tlm_status s;
    if (oracle_decode) {
      if (!oracle_words.empty()) man.inputs.push_back(oracle_words);
      s = tlm_oracle_decode(oracle_in.c_str(), opt_cstr(oracle_words), oracle_out.c_str());
    } else {
      if (!oracle_words.empty()) man.outputs.push_back(oracle_words);
      s = tlm_oracle_encode(oracle_in.c_str(), oracle_out.c_str(), opt_cstr(oracle_words),
                            oracle_mode == "gen");
    }
    if (s == TLM_OK) man.write();
    return report(s);
  }

  if (train->parsed()) {
    std::uint64_t effective_seed =
        train_seed_opt->count() > 0 ? train_seed : TLM_SEED_FROM_CONFIG;
    Manifest man;
    man.command = "train";
    man.seed = train_seed;
    man.config = {{"format", train_format},
                  {"threads", train_threads},
                  {"seed_from_config", train_seed_opt->count() == 0}};
    if (!train_cfg.empty()) {
      std::ifstream cf(train_cfg);
      std::stringstream ss;
      ss << cf.rdbuf();
      man.config["config_file"] = train_cfg;
      man.config["config_text"] = ss.str();
    }
    man.inputs = {train_in};
    if (!train_dev.empty()) man.inputs.push_back(train_dev);
    if (!train_pre.empty()) man.inputs.push_back(train_pre);
    man.outputs = {train_out};
    if (!train_log.empty()) man.outputs.push_back(train_log);
    tlm_status s = tlm_train(train_in.c_str(), train_format.c_str(), opt_cstr(train_dev),
                             opt_cstr(train_pre), opt_cstr(train_cfg), effective_seed,
                             train_threads, train_out.c_str(), opt_cstr(train_log));
    if (s == TLM_OK) man.write();
    return report(s);
  }

  if (parse->parsed()) {
    Manifest man;
    man.command = "parse";
    man.seed = parse_seed;
    man.config = {{"method", parse_method},
                  {"samples", parse_samples},
                  {"input_format", parse_fmt},
                  {"threads", parse_threads}};
    man.inputs = {parse_model, parse_in};
    man.outputs = {parse_out};
    tlm_model* model = nullptr;
    tlm_status s = tlm_model_open(parse_model.c_str(), &model);
    if (s == TLM_OK) {
      s = tlm_parse_file(model, parse_in.c_str(), parse_fmt.c_str(), parse_method.c_str(),
                         parse_samples, parse_seed, parse_threads, parse_out.c_str());
      tlm_model_close(model);
    }
    if (s == TLM_OK) man.write();
    return report(s);
  }

  if (lmeval->parsed()) {
    Manifest man;
    man.command = "lm-eval";
    man.seed = lm_seed;
    man.config = {{"method", lm_method},
                  {"samples", lm_samples},
                  {"input_format", lm_fmt},
                  {"threads", lm_threads}};
    man.inputs = {lm_model, lm_in};
    man.outputs = {lm_out};
    tlm_model* model = nullptr;
    tlm_status s = tlm_model_open(lm_model.c_str(), &model);
    double ppl = 0;
    if (s == TLM_OK) {
      s = tlm_lm_eval_file(model, lm_in.c_str(), lm_fmt.c_str(), lm_method.c_str(), lm_samples,
                           lm_seed, lm_threads, lm_out.c_str(), &ppl);
      tlm_model_close(model);
    }
    if (s == TLM_OK) {
      std::cout << "perplexity: " << ppl << "\n";
      man.write();
    }
    return report(s);
  }

  if (score->parsed()) {
    double p = 0, r = 0, f = 0;
    std::string tsv = score_verbose ? score_pred + ".per_sentence.tsv" : std::string();
    tlm_status s = tlm_score_trees(score_gold.c_str(), score_pred.c_str(), opt_cstr(tsv), &p,
                                   &r, &f);
    if (s == TLM_OK) {
      std::printf("precision: %.2f\n", p);
      std::printf("recall: %.2f\n", r);
      std::printf("F1: %.2f\n", f);
      if (score_verbose) {
        std::ifstream is(tsv);
        std::cout << is.rdbuf();
      }
    }
    return report(s);
  }

  if (sample->parsed()) {
    Manifest man;
    man.command = "sample";
    man.seed = sample_seed;
    man.config = {{"count", sample_count}, {"max_len", sample_maxlen}, {"trees", sample_trees}};
    man.inputs = {sample_model};
    man.outputs = {sample_out};
    tlm_model* model = nullptr;
    tlm_status s = tlm_model_open(sample_model.c_str(), &model);
    if (s == TLM_OK) {
      s = tlm_sample(model, sample_count, sample_maxlen, sample_seed, sample_trees ? 1 : 0,
                     sample_out.c_str());
      tlm_model_close(model);
    }
    if (s == TLM_OK) man.write();
    return report(s);
  }

  return 0;
}
