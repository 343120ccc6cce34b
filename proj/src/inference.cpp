#include "treelm/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include "treelm/training.hpp"

namespace treelm {

Tree tree_from_parse(const Model& model, const Instance& inst, std::span<const Action> actions) {
  auto tokens = tokens_from_actions(actions, model.vocab, inst.raw_words);
  return tree_from_action_tokens(tokens, inst.raw_words, inst.raw_pos);
}

ParseResult parse_greedy(const Model& model, const Instance& inst) {
  if (inst.words.empty()) fail(ErrorCode::Invalid, "parse of an empty sentence");
  Graph g;
  EncoderSample best = encoder_greedy(g, model, inst.words, inst.pos);
  ParseResult result;
  result.actions = std::move(best.actions);
  result.log_q = g.scalar_value(best.log_q);
  result.tree = tree_from_parse(model, inst, result.actions);
  result.method = ParseMethod::GreedyQ;
  return result;
}

ParseResult rerank_candidates(const Model& model, const Instance& inst,
                              std::span<const std::vector<Action>> candidates) {
  if (candidates.empty()) fail(ErrorCode::Invalid, "rerank over an empty candidate pool");
  // deduplicate identical derivations, keeping first-seen order
  std::vector<const std::vector<Action>*> pool;
  std::map<std::vector<int>, bool> seen;
  for (const auto& cand : candidates) {
    std::vector<int> key;
    key.reserve(cand.size());
    for (const Action& a : cand) key.push_back(action_index(a));
    if (!seen.emplace(std::move(key), true).second) continue;
    pool.push_back(&cand);
  }
  const std::vector<Action>* best = nullptr;
  real best_joint = -std::numeric_limits<real>::infinity();
  for (const auto* cand : pool) {
    std::vector<Action> gen = to_generative(*cand, inst.words);
    real log_joint = decoder_score(model, inst.words, gen);
    if (!best || log_joint > best_joint) {
      best = cand;
      best_joint = log_joint;
    }
  }
  ParseResult result;
  result.actions = *best;
  result.log_q = encoder_score(model, inst.words, inst.pos, result.actions);
  result.log_joint = best_joint;
  result.tree = tree_from_parse(model, inst, result.actions);
  result.method = ParseMethod::RerankJoint;
  return result;
}

ParseResult parse_rerank(const Model& model, const Instance& inst, int k, Rng& rng) {
  if (k < 1) fail(ErrorCode::Invalid, "rerank needs k >= 1");
  std::vector<std::vector<Action>> candidates;
  candidates.reserve(static_cast<size_t>(k) + 1);
  {
    Graph g;
    candidates.push_back(encoder_greedy(g, model, inst.words, inst.pos).actions);
  }
  for (int i = 0; i < k; ++i) {
    Graph g;
    candidates.push_back(encoder_sample(g, model, inst.words, inst.pos, rng).actions);
  }
  return rerank_candidates(model, inst, candidates);
}

namespace {

// One joint draw: a ~ q(.|x) with its log q and log p(x, a).
std::pair<real, real> draw_log_q_and_log_p(const Model& model, const Instance& inst, Rng& rng) {
  Graph g;
  EncoderSample sample = encoder_sample(g, model, inst.words, inst.pos, rng);
  std::vector<Action> gen = to_generative(sample.actions, inst.words);
  JointScore joint = decoder_score_node(g, model, inst.words, gen);
  return {g.scalar_value(sample.log_q), g.scalar_value(joint.log_joint)};
}

real logsumexp(std::span<const real> xs) {
  real mx = -std::numeric_limits<real>::infinity();
  for (real x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  real z = 0;
  for (real x : xs) z += std::exp(x - mx);
  return mx + std::log(z);
}

}  // namespace

LmEstimate lm_elbo(const Model& model, const Instance& inst, int k, Rng& rng) {
  if (k < 1) fail(ErrorCode::Invalid, "lm_elbo needs k >= 1");
  real total = 0;
  for (int i = 0; i < k; ++i) {
    auto [log_q, log_p] = draw_log_q_and_log_p(model, inst, rng);
    total += log_p - log_q;
  }
  LmEstimate est;
  est.method = LmMethod::Elbo;
  est.log_px = total / k;
  est.samples = k;
  est.ess = 0;
  return est;
}

LmEstimate lm_importance(const Model& model, const Instance& inst, int k, Rng& rng) {
  if (k < 1) fail(ErrorCode::Invalid, "lm_importance needs k >= 1");
  std::vector<real> log_w(k);
  for (int i = 0; i < k; ++i) {
    auto [log_q, log_p] = draw_log_q_and_log_p(model, inst, rng);
    log_w[i] = log_p - log_q;
  }
  real lse = logsumexp(log_w);
  LmEstimate est;
  est.method = LmMethod::Importance;
  est.log_px = lse - std::log(static_cast<real>(k));
  est.samples = k;
  real sum_sq = 0;
  for (real lw : log_w) {
    real w = std::exp(lw - lse);  // normalized weight
    sum_sq += w * w;
  }
  est.ess = sum_sq > 0 ? 1 / sum_sq : 0;
  return est;
}

namespace {

template <typename Out, typename Work>
std::vector<Out> run_indexed(size_t n, int threads, Work&& work) {
  std::vector<Out> out(n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) out[i] = work(i);
    return out;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto runner = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        out[i] = work(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(runner);
  runner();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace

std::vector<ParseResult> parse_corpus(const Model& model, std::span<const Instance> instances,
                                      ParseMethod method, int k, std::uint64_t seed, int threads) {
  Rng root(seed);
  return run_indexed<ParseResult>(instances.size(), threads, [&](size_t i) {
    if (method == ParseMethod::GreedyQ) return parse_greedy(model, instances[i]);
    Rng rng = root.child(i);
    return parse_rerank(model, instances[i], k, rng);
  });
}

std::vector<LmEstimate> lm_corpus(const Model& model, std::span<const Instance> instances,
                                  LmMethod method, int k, std::uint64_t seed, int threads) {
  Rng root(seed);
  return run_indexed<LmEstimate>(instances.size(), threads, [&](size_t i) {
    Rng rng = root.child(i);
    if (method == LmMethod::Elbo) return lm_elbo(model, instances[i], k, rng);
    return lm_importance(model, instances[i], k, rng);
  });
}

real corpus_perplexity(std::span<const LmEstimate> estimates,
                       std::span<const Instance> instances) {
  if (estimates.empty() || estimates.size() != instances.size())
    fail(ErrorCode::Invalid, "perplexity over mismatched estimate/instance lists");
  real nll = 0;
  real tokens = 0;
  for (size_t i = 0; i < estimates.size(); ++i) {
    nll -= estimates[i].log_px;
    tokens += static_cast<real>(instances[i].words.size());
  }
  return std::exp(nll / tokens);
}

std::vector<GeneratedSentence> sample_sentences(const Model& model, int count, int max_words,
                                                Rng& rng, int* truncated) {
  std::vector<GeneratedSentence> out;
  int dropped = 0;
  while (static_cast<int>(out.size()) < count) {
    Graph g;
    auto sample = decoder_sample(g, model, rng, max_words);
    if (!sample) {
      ++dropped;
      if (dropped > 1000 * count + 1000)
        fail(ErrorCode::Numeric, "sampling keeps exceeding max_words; model degenerate");
      continue;
    }
    GeneratedSentence s;
    s.log_joint = g.scalar_value(sample->log_joint);
    for (std::int32_t w : sample->words) s.words.push_back(model.vocab.word(w));
    auto tokens = tokens_from_actions(sample->actions, model.vocab, s.words);
    s.tree = tree_from_action_tokens(tokens, s.words, {});
    out.push_back(std::move(s));
  }
  if (truncated) *truncated = dropped;
  return out;
}

}  // namespace treelm
