#include "treelm.h"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "treelm/evalscore.hpp"
#include "treelm/inference.hpp"
#include "treelm/training.hpp"

using namespace treelm;

struct tlm_model {
  std::unique_ptr<Model> impl;
};

namespace {

thread_local std::string g_last_error;

tlm_status status_of(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Io:
      return TLM_E_IO;
    case ErrorCode::Format:
      return TLM_E_FORMAT;
    case ErrorCode::Invalid:
      return TLM_E_INVALID;
    case ErrorCode::Numeric:
      return TLM_E_NUMERIC;
  }
  return TLM_E_INTERNAL;
}

template <typename Fn>
tlm_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TLM_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TLM_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return TLM_E_INTERNAL;
  }
}

std::string require(const char* value, const char* what) {
  if (!value) fail(ErrorCode::Invalid, std::string(what) + " must not be NULL");
  return value;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::Io, "cannot write: " + path);
  return os;
}

std::vector<Instance> load_instances(const std::string& path, const std::string& format,
                                     const Vocab& vocab) {
  if (format == "trees") {
    auto read = read_treebank(path);
    return make_instances(read.trees, vocab);
  }
  if (format == "tokens") return read_token_file(path, vocab);
  fail(ErrorCode::Invalid, "unknown input format: " + format + " (expected trees|tokens)");
}

const Model& model_of(const tlm_model* model) {
  if (!model || !model->impl) fail(ErrorCode::Invalid, "NULL model handle");
  return *model->impl;
}

ParseMethod parse_method_of(const std::string& method) {
  if (method == "greedy") return ParseMethod::GreedyQ;
  if (method == "rerank") return ParseMethod::RerankJoint;
  fail(ErrorCode::Invalid, "unknown parse method: " + method + " (expected greedy|rerank)");
}

void write_lm_tsv(const std::string& path, std::span<const LmEstimate> estimates,
                  std::span<const Instance> instances, real perplexity) {
  std::ofstream os = open_out(path);
  os << "id\ttokens\tlog_px\tmethod\tk\tess\n";
  os << std::setprecision(17);
  for (size_t i = 0; i < estimates.size(); ++i) {
    const LmEstimate& e = estimates[i];
    os << i << '\t' << instances[i].words.size() << '\t' << e.log_px << '\t'
       << (e.method == LmMethod::Elbo ? "elbo" : "importance") << '\t' << e.samples << '\t';
    if (e.method == LmMethod::Importance)
      os << e.ess;
    else
      os << '-';
    os << '\n';
  }
  os << "# corpus perplexity=" << perplexity << " sentences=" << estimates.size() << '\n';
  if (!os) fail(ErrorCode::Io, "failed writing: " + path);
}

}  // namespace

extern "C" {

const char* tlm_version(void) { return "treelm 0.1.0"; }

const char* tlm_last_error(void) { return g_last_error.c_str(); }

tlm_status tlm_oracle_encode(const char* treebank_path, const char* actions_out,
                             const char* words_out, int generative) {
  return guarded([&] {
    auto read = read_treebank(require(treebank_path, "treebank_path"));
    TransitionMode mode =
        generative ? TransitionMode::Generative : TransitionMode::Discriminative;
    std::ofstream acts = open_out(require(actions_out, "actions_out"));
    std::ofstream words;
    if (words_out) words = open_out(words_out);
    for (const Tree& t : read.trees) {
      acts << action_tokens_to_line(oracle_tokens(t, mode)) << '\n';
      if (words_out) {
        auto ws = tree_words(t);
        auto ts = tree_pos_tags(t);
        for (size_t i = 0; i < ws.size(); ++i)
          words << (i ? " " : "") << tagged_token(ws[i], ts[i]);
        words << '\n';
      }
    }
    if (!acts || (words_out && !words)) fail(ErrorCode::Io, "failed writing oracle output");
  });
}

tlm_status tlm_oracle_decode(const char* actions_path, const char* words_path,
                             const char* trees_out) {
  return guarded([&] {
    std::ifstream is(require(actions_path, "actions_path"));
    if (!is) fail(ErrorCode::Io, "cannot open actions: " + std::string(actions_path));
    std::vector<std::vector<std::string>> word_lines, pos_lines;
    if (words_path) {
      std::ifstream ws(words_path);
      if (!ws) fail(ErrorCode::Io, "cannot open words: " + std::string(words_path));
      std::string line;
      while (std::getline(ws, line)) {
        std::istringstream ls(line);
        std::vector<std::string> sent, tags;
        std::string tok;
        while (ls >> tok) {
          auto [word, pos] = split_tagged_token(tok);
          sent.push_back(std::move(word));
          tags.push_back(std::move(pos));
        }
        word_lines.push_back(std::move(sent));
        pos_lines.push_back(std::move(tags));
      }
    }
    std::ofstream os = open_out(require(trees_out, "trees_out"));
    std::string line;
    size_t idx = 0;
    while (std::getline(is, line)) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      auto tokens = action_tokens_from_line(line);
      bool generative = false;
      for (const auto& t : tokens) generative = generative || t.kind == ActionKind::Gen;
      std::span<const std::string> words, pos;
      if (idx < word_lines.size()) {
        words = word_lines[idx];
        pos = pos_lines[idx];
      }
      if (!generative && words.empty())
        fail(ErrorCode::Invalid,
             "discriminative action line " + std::to_string(idx) + " needs a words file");
      os << tree_to_string(tree_from_action_tokens(tokens, words, pos)) << '\n';
      ++idx;
    }
    if (!os) fail(ErrorCode::Io, "failed writing trees");
  });
}

tlm_status tlm_train(const char* train_path, const char* train_format, const char* dev_path,
                     const char* pretrained_path, const char* config_path, uint64_t seed,
                     int threads, const char* checkpoint_out, const char* log_path) {
  (void)threads;  // training updates are single-writer; threads apply to inference
  return guarded([&] {
    TrainConfig cfg;
    if (config_path) cfg = load_train_config(config_path);
    if (seed != TLM_SEED_FROM_CONFIG) cfg.seed = seed;
    cfg.validate();
    std::string format = train_format ? train_format : "trees";

    std::vector<Instance> corpus, dev;
    Vocab vocab;
    if (format == "trees") {
      auto read = read_treebank(require(train_path, "train_path"));
      if (read.trees.empty()) fail(ErrorCode::Invalid, "empty training treebank");
      vocab = build_vocab(read.trees, cfg.min_count);
      corpus = make_instances(read.trees, vocab);
    } else if (format == "tokens") {
      if (cfg.lambda_a != 0)
        fail(ErrorCode::Invalid, "token-format training requires lambda_a = 0");
      // vocabulary from the raw tokens; a latent-tree run still needs
      // nonterminal symbols, supplied as generic labels X0..X9
      std::ifstream is(require(train_path, "train_path"));
      if (!is) fail(ErrorCode::Io, "cannot open: " + std::string(train_path));
      std::vector<Tree> pseudo;
      std::string line;
      while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::vector<Tree> leaves;
        std::string w;
        while (ls >> w) leaves.push_back(Tree::make_leaf(w));
        if (!leaves.empty()) pseudo.push_back(Tree::make_internal("X0", std::move(leaves)));
      }
      if (pseudo.empty()) fail(ErrorCode::Invalid, "empty training corpus");
      vocab = build_vocab(pseudo, cfg.min_count);
      for (int i = 1; i < 10; ++i) vocab.intern_nt("X" + std::to_string(i));
      corpus = read_token_file(train_path, vocab);
    } else {
      fail(ErrorCode::Invalid, "unknown train format: " + format);
    }

    const PretrainedTable* table_ptr = nullptr;
    PretrainedTable table;
    if (pretrained_path) {
      table = load_pretrained(pretrained_path, vocab);
      table_ptr = &table;
    } else if (cfg.model.pretrained_dim > 0) {
      // no vectors given: keep the configured slot, filled with zeros
      table.dim = cfg.model.pretrained_dim;
      table.vectors = Tensor(vocab.num_words(), cfg.model.pretrained_dim);
      table.present.assign(vocab.num_words(), false);
      table_ptr = &table;
    }

    if (dev_path) {
      auto read = read_treebank(dev_path);
      dev = make_instances(read.trees, vocab);
    }

    Model model(std::move(vocab), cfg.model, Rng(cfg.seed).child("init"), table_ptr);
    Trainer trainer(model, cfg);
    std::ofstream log;
    if (log_path) log = open_out(log_path);
    trainer.train(corpus, dev, require(checkpoint_out, "checkpoint_out"),
                  log_path ? &log : nullptr);
  });
}

tlm_status tlm_model_open(const char* checkpoint_path, tlm_model** out) {
  return guarded([&] {
    if (!out) fail(ErrorCode::Invalid, "out must not be NULL");
    auto impl = load_checkpoint(require(checkpoint_path, "checkpoint_path"));
    *out = new tlm_model{std::move(impl)};
  });
}

void tlm_model_close(tlm_model* model) { delete model; }

tlm_status tlm_model_info(const tlm_model* model, char* buf, size_t buf_len) {
  return guarded([&] {
    const Model& m = model_of(model);
    std::ostringstream os;
    os << tlm_version() << ": words=" << m.vocab.num_words() << " nonterminals="
       << m.vocab.num_nts() << " pos=" << m.vocab.num_pos() << " actions=" << m.num_actions()
       << " enc_lstm=" << m.cfg.enc_lstm_dim << " dec_lstm=" << m.cfg.dec_lstm_dim
       << " layers=" << m.cfg.lstm_layers;
    std::string s = os.str();
    if (!buf || buf_len == 0) fail(ErrorCode::Invalid, "bad info buffer");
    std::snprintf(buf, buf_len, "%s", s.c_str());
  });
}

tlm_status tlm_parse_file(const tlm_model* model, const char* input_path,
                          const char* input_format, const char* method, int samples,
                          uint64_t seed, int threads, const char* trees_out) {
  return guarded([&] {
    const Model& m = model_of(model);
    auto instances = load_instances(require(input_path, "input_path"),
                                    input_format ? input_format : "trees", m.vocab);
    auto results = parse_corpus(m, instances, parse_method_of(require(method, "method")),
                                samples, seed, threads);
    std::ofstream os = open_out(require(trees_out, "trees_out"));
    for (const auto& r : results) os << tree_to_string(r.tree) << '\n';
    if (!os) fail(ErrorCode::Io, "failed writing parses");
  });
}

tlm_status tlm_parse_sentence(const tlm_model* model, const char* const* words,
                              const char* const* pos, size_t len, const char* method,
                              int samples, uint64_t seed, char* tree_out, size_t tree_out_len,
                              double* log_q, double* log_joint) {
  return guarded([&] {
    const Model& m = model_of(model);
    if (!words || len == 0) fail(ErrorCode::Invalid, "empty sentence");
    std::vector<std::string> ws(len), ps;
    for (size_t i = 0; i < len; ++i) ws[i] = require(words[i], "words[i]");
    if (pos) {
      ps.resize(len);
      for (size_t i = 0; i < len; ++i) ps[i] = require(pos[i], "pos[i]");
    }
    Instance inst = make_instance_from_tokens(ws, ps, m.vocab);
    ParseResult result;
    if (parse_method_of(require(method, "method")) == ParseMethod::GreedyQ) {
      result = parse_greedy(m, inst);
    } else {
      Rng rng = Rng(seed).child(0);
      result = parse_rerank(m, inst, samples, rng);
    }
    std::string s = tree_to_string(result.tree);
    if (!tree_out || tree_out_len <= s.size())
      fail(ErrorCode::Invalid, "tree buffer too small: need " + std::to_string(s.size() + 1));
    std::memcpy(tree_out, s.c_str(), s.size() + 1);
    if (log_q) *log_q = result.log_q;
    if (log_joint) *log_joint = result.log_joint.value_or(0);
  });
}

tlm_status tlm_lm_eval_file(const tlm_model* model, const char* input_path,
                            const char* input_format, const char* method, int samples,
                            uint64_t seed, int threads, const char* tsv_out,
                            double* perplexity_out) {
  return guarded([&] {
    const Model& m = model_of(model);
    auto instances = load_instances(require(input_path, "input_path"),
                                    input_format ? input_format : "trees", m.vocab);
    if (instances.empty()) fail(ErrorCode::Invalid, "empty evaluation corpus");
    std::string method_s = require(method, "method");
    LmMethod lm;
    if (method_s == "importance")
      lm = LmMethod::Importance;
    else if (method_s == "elbo")
      lm = LmMethod::Elbo;
    else
      fail(ErrorCode::Invalid, "unknown lm method: " + method_s + " (expected importance|elbo)");
    auto estimates = lm_corpus(m, instances, lm, samples, seed, threads);
    real ppl = corpus_perplexity(estimates, instances);
    if (tsv_out) write_lm_tsv(tsv_out, estimates, instances, ppl);
    if (perplexity_out) *perplexity_out = ppl;
  });
}

tlm_status tlm_sample(const tlm_model* model, int count, int max_words, uint64_t seed,
                      int as_trees, const char* out_path) {
  return guarded([&] {
    const Model& m = model_of(model);
    if (count < 1) fail(ErrorCode::Invalid, "sample count must be >= 1");
    Rng rng = Rng(seed).child("sample");
    int truncated = 0;
    auto sentences =
        sample_sentences(m, count, max_words > 0 ? max_words : m.cfg.max_sentence_len, rng,
                         &truncated);
    std::ofstream os = open_out(require(out_path, "out_path"));
    for (const auto& s : sentences) {
      if (as_trees) {
        os << tree_to_string(s.tree) << '\n';
      } else {
        for (size_t i = 0; i < s.words.size(); ++i) os << (i ? " " : "") << s.words[i];
        os << '\n';
      }
    }
    if (truncated > 0) os << "# discarded " << truncated << " truncated samples\n";
    if (!os) fail(ErrorCode::Io, "failed writing samples");
  });
}

tlm_status tlm_score_trees(const char* gold_path, const char* pred_path,
                           const char* per_sentence_tsv, double* precision, double* recall,
                           double* f1) {
  return guarded([&] {
    auto gold = read_treebank(require(gold_path, "gold_path"));
    auto pred = read_treebank(require(pred_path, "pred_path"));
    std::vector<BracketScore> rows;
    BracketScore score =
        f1_score(gold.trees, pred.trees, per_sentence_tsv ? &rows : nullptr);
    if (per_sentence_tsv) {
      std::ofstream os = open_out(per_sentence_tsv);
      os << "id\tmatched\tgold\tpred\tprecision\trecall\tf1\n";
      os << std::setprecision(17);
      for (size_t i = 0; i < rows.size(); ++i)
        os << i << '\t' << rows[i].matched << '\t' << rows[i].gold_total << '\t'
           << rows[i].pred_total << '\t' << rows[i].precision << '\t' << rows[i].recall << '\t'
           << rows[i].f1 << '\n';
      if (!os) fail(ErrorCode::Io, "failed writing per-sentence scores");
    }
    if (precision) *precision = score.precision;
    if (recall) *recall = score.recall;
    if (f1) *f1 = score.f1;
  });
}

}  // extern "C"
