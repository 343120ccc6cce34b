#ifndef TREELM_DECODER_HPP
#define TREELM_DECODER_HPP

#include <optional>
#include <span>
#include <vector>

#include "treelm/model.hpp"

namespace treelm {

// Incremental evaluation of the generative model. Step features are functions
// of the generated prefix only (decoder stack, output buffer, parent
// nonterminal), so a fixed action prefix always produces identical step
// distributions.
class DecoderRun {
 public:
  DecoderRun(Graph& g, const Model& model);

  const ParserState& state() const { return state_; }
  bool done() const { return state_.is_terminal(); }

  const std::vector<int>& legal_indices();
  // Masked log p(a | u_t) over action indices; -inf outside the legal set.
  const std::vector<real>& action_log_probs();
  // Full-vocabulary log p(w | u_t); GEN must be legal at the current state.
  const std::vector<real>& word_log_probs();

  // Log-probability node of the step: the action term, plus the word term for
  // GEN. Advances the run.
  Node advance(const Action& a);
  // Same, but the two terms separately (word node is invalid unless GEN).
  std::pair<Node, Node> advance_split(const Action& a);

 private:
  void ensure_step();
  void ensure_word_logits();
  Node word_input(std::int32_t word);

  Graph* g_;
  const Model* m_;
  ParserState state_;
  StackLstm stack_;
  LstmState out_state_;  // output-buffer LSTM after all generated words
  std::vector<Node> item_reps_;
  Node term_w_, term_b_, state_w_in_, state_b_, state_w_out_;
  Node act_w_, act_b_, word_w_, word_b_, null_parent_, empty_out_;
  bool step_ready_ = false;
  bool word_ready_ = false;
  Node u_, logits_, word_logits_;
  std::vector<int> legal_;
  std::vector<real> log_probs_;
  std::vector<real> word_probs_;
};

// Subtree composition: mean of child stack items concatenated with the
// nonterminal embedding, projected with tanh. Permutation invariant in the
// children by construction.
Node compose_subtree(Graph& g, const Model& model, std::span<const Node> children,
                     std::int32_t nt);

struct JointScore {
  Node log_p_actions;  // log p(a)
  Node log_p_words;    // log p(x | a)
  Node log_joint;      // log p(x, a)
};

// Scores a complete generative derivation. The GEN word arguments must match
// `words`; throws on mismatch or on an illegal step.
JointScore decoder_score_node(Graph& g, const Model& model,
                              std::span<const std::int32_t> words,
                              std::span<const Action> actions);
real decoder_score(const Model& model, std::span<const std::int32_t> words,
                   std::span<const Action> actions);

struct GenSample {
  std::vector<Action> actions;
  std::vector<std::int32_t> words;
  Node log_joint;
};

// Ancestral sample from the generative model; nullopt when the sample would
// exceed max_words (discarded, reported by the caller).
std::optional<GenSample> decoder_sample(Graph& g, const Model& model, Rng& rng, int max_words);

}  // namespace treelm

#endif  // TREELM_DECODER_HPP
