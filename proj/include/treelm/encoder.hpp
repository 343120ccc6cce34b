#ifndef TREELM_ENCODER_HPP
#define TREELM_ENCODER_HPP

#include <span>
#include <vector>

#include "treelm/model.hpp"

namespace treelm {

// Incremental evaluation of the recognition model over one sentence. The same
// step code serves scoring, sampling and greedy decoding, so a sampled
// derivation re-scores to the identical log probability.
class EncoderRun {
 public:
  EncoderRun(Graph& g, const Model& model, std::span<const std::int32_t> words,
             std::span<const std::int32_t> pos);

  const ParserState& state() const { return state_; }
  bool done() const { return state_.is_terminal(); }

  // Legal scored-action indices at the current state, ascending.
  const std::vector<int>& legal_indices();
  // Masked log q(a | v_t) over action indices; -inf outside the legal set.
  const std::vector<real>& action_log_probs();

  // Appends the step's log-probability node to the graph and advances both
  // the neural and transition state. The action must be legal.
  Node advance(const Action& a);

 private:
  void ensure_step();
  Node word_input(int position);

  Graph* g_;
  const Model* m_;
  ParserState state_;
  std::vector<Node> input_nodes_;  // word input embedding per position
  std::vector<Node> buffer_reps_;  // biLSTM representation per position
  StackLstm stack_;
  std::vector<Node> item_reps_;  // stack-LSTM input per stack item
  // cached per-run parameter nodes
  Node term_w_, term_b_, comp_w_, comp_b_, state_w_in_, state_b_, state_w_out_, act_w_, act_b_;
  Node null_buffer_, null_parent_;
  // per-step cache
  bool step_ready_ = false;
  Node logits_;
  std::vector<int> legal_;
  std::vector<real> log_probs_;
};

// log q(a | x) as a graph node; throws illegal-transition with the step index
// when the sequence cannot be replayed.
Node encoder_score_node(Graph& g, const Model& model, std::span<const std::int32_t> words,
                        std::span<const std::int32_t> pos, std::span<const Action> actions);

// Convenience evaluation-mode scorer.
real encoder_score(const Model& model, std::span<const std::int32_t> words,
                   std::span<const std::int32_t> pos, std::span<const Action> actions);

struct EncoderSample {
  std::vector<Action> actions;
  Node log_q;
};

// Ancestral sample from the masked step distributions.
EncoderSample encoder_sample(Graph& g, const Model& model, std::span<const std::int32_t> words,
                             std::span<const std::int32_t> pos, Rng& rng);

// Greedy argmax decoding; ties break toward the lowest action index.
EncoderSample encoder_greedy(Graph& g, const Model& model, std::span<const std::int32_t> words,
                             std::span<const std::int32_t> pos);

}  // namespace treelm

#endif  // TREELM_ENCODER_HPP
