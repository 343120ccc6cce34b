#ifndef TREELM_INFERENCE_HPP
#define TREELM_INFERENCE_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treelm/decoder.hpp"
#include "treelm/encoder.hpp"
#include "treelm/model.hpp"

namespace treelm {

enum class ParseMethod { GreedyQ, RerankJoint };
enum class LmMethod { Elbo, Importance };

struct ParseResult {
  Tree tree;
  std::vector<Action> actions;  // discriminative derivation
  real log_q = 0;
  std::optional<real> log_joint;
  ParseMethod method = ParseMethod::GreedyQ;
};

struct LmEstimate {
  LmMethod method = LmMethod::Importance;
  real log_px = 0;  // nats
  int samples = 0;
  real ess = 0;  // effective sample size; only meaningful for Importance
};

// Greedy argmax under q, linear in the derivation length; ties break toward
// the lowest action index.
ParseResult parse_greedy(const Model& model, const Instance& inst);

// Draws k samples from q, deduplicates, injects the greedy derivation into
// the pool, and returns the candidate maximizing log p(x, a).
ParseResult parse_rerank(const Model& model, const Instance& inst, int k, Rng& rng);

// Rerank over an explicit candidate pool (used by parse_rerank and by exact
// small-scale comparisons).
ParseResult rerank_candidates(const Model& model, const Instance& inst,
                              std::span<const std::vector<Action>> candidates);

// Monte Carlo lower bound: mean of log p(x,a) - log q(a|x) under a ~ q.
LmEstimate lm_elbo(const Model& model, const Instance& inst, int k, Rng& rng);

// Importance sampling with proposal q: logsumexp of the log weights minus
// log k, entirely in log space.
LmEstimate lm_importance(const Model& model, const Instance& inst, int k, Rng& rng);

std::vector<ParseResult> parse_corpus(const Model& model, std::span<const Instance> instances,
                                      ParseMethod method, int k, std::uint64_t seed, int threads);
std::vector<LmEstimate> lm_corpus(const Model& model, std::span<const Instance> instances,
                                  LmMethod method, int k, std::uint64_t seed, int threads);

// exp(total NLL / total token count); tokens are exactly the sentence words.
real corpus_perplexity(std::span<const LmEstimate> estimates,
                       std::span<const Instance> instances);

// Convenience: tree for a discriminative derivation of this instance.
Tree tree_from_parse(const Model& model, const Instance& inst, std::span<const Action> actions);

struct GeneratedSentence {
  Tree tree;
  std::vector<std::string> words;
  real log_joint = 0;
};

// Samples sentences from the generative model; truncated draws (beyond
// max_words) are discarded and counted.
std::vector<GeneratedSentence> sample_sentences(const Model& model, int count, int max_words,
                                                Rng& rng, int* truncated = nullptr);

}  // namespace treelm

#endif  // TREELM_INFERENCE_HPP
