#include "treelm/encoder.hpp"

#include <cmath>

namespace treelm {

EncoderRun::EncoderRun(Graph& g, const Model& model, std::span<const std::int32_t> words,
                       std::span<const std::int32_t> pos)
    : g_(&g),
      m_(&model),
      state_(ParserState::initial_discriminative(
          std::vector<std::int32_t>(words.begin(), words.end()))),
      stack_(g, model.enc.stack, model.cfg.enc_dropout) {
  if (words.empty()) fail(ErrorCode::Invalid, "encoder run over an empty sentence");
  if (words.size() != pos.size())
    fail(ErrorCode::Invalid, "word/POS length mismatch in encoder run");

  term_w_ = g.param(*m_->enc.term_w);
  term_b_ = g.param(*m_->enc.term_b);
  comp_w_ = g.param(*m_->enc.comp_w);
  comp_b_ = g.param(*m_->enc.comp_b);
  state_w_in_ = g.param(*m_->enc.state_w_in);
  state_b_ = g.param(*m_->enc.state_b);
  state_w_out_ = g.param(*m_->enc.state_w_out);
  act_w_ = g.param(*m_->enc.act_w);
  act_b_ = g.param(*m_->enc.act_b);
  null_buffer_ = g.param(*m_->enc.null_buffer);
  null_parent_ = g.param(*m_->enc.null_parent);

  std::vector<Node> inputs(words.size());
  for (size_t i = 0; i < words.size(); ++i) {
    std::vector<Node> parts;
    parts.push_back(g.lookup(*m_->enc.word_emb, words[i]));
    if (m_->pretrained) parts.push_back(g.lookup(*m_->pretrained, words[i]));
    parts.push_back(g.lookup(*m_->enc.pos_emb, pos[i]));
    inputs[i] = g.concat(parts);
  }
  buffer_reps_ =
      bilstm_encode(g, m_->enc.buf_fwd, m_->enc.buf_bwd, inputs, m_->cfg.enc_dropout);
  input_nodes_ = std::move(inputs);
}

Node EncoderRun::word_input(int position) { return input_nodes_[position]; }

void EncoderRun::ensure_step() {
  if (step_ready_) return;
  Graph& g = *g_;
  Node e = stack_.summary();
  size_t pos = state_.buffer_pos;
  size_t n = buffer_reps_.size();
  Node i_t = pos < n ? buffer_reps_[pos] : null_buffer_;
  Node ibar;
  if (pos < n) {
    std::span<const Node> keys(buffer_reps_.data() + pos, n - pos);
    ibar = attention(g, m_->enc.att, e, keys);
  } else {
    ibar = null_buffer_;
  }
  std::int32_t parent = state_.parent_nt();
  Node n_t = parent >= 0 ? g.lookup(*m_->enc.nt_emb, parent) : null_parent_;
  Node feats[4] = {e, i_t, ibar, n_t};
  Node v = g.matvec(state_w_out_, g.tanh_(g.add(g.matvec(state_w_in_, g.concat(feats)), state_b_)));
  logits_ = g.add(g.matvec(act_w_, v), act_b_);
  legal_ = legal_action_indices(state_, m_->vocab.num_nts(), m_->cfg.constraints());
  log_probs_ = masked_log_softmax_values(g.value(logits_), legal_);
  step_ready_ = true;
}

const std::vector<int>& EncoderRun::legal_indices() {
  ensure_step();
  return legal_;
}

const std::vector<real>& EncoderRun::action_log_probs() {
  ensure_step();
  return log_probs_;
}

Node EncoderRun::advance(const Action& a) {
  ensure_step();
  Graph& g = *g_;
  Node step_lp = g.masked_log_softmax_pick(logits_, legal_, action_index(a));

  switch (a.kind) {
    case ActionKind::Nt: {
      Node item = g.lookup(*m_->enc.nt_emb, a.nt);
      stack_.push(item);
      item_reps_.push_back(item);
      break;
    }
    case ActionKind::Shift: {
      Node item = g.tanh_(g.add(g.matvec(term_w_, word_input(static_cast<int>(state_.buffer_pos))),
                                term_b_));
      stack_.push(item);
      item_reps_.push_back(item);
      break;
    }
    case ActionKind::Reduce: {
      std::size_t marker = state_.open_positions.back();
      std::span<const Node> children(item_reps_.data() + marker + 1,
                                     item_reps_.size() - marker - 1);
      Node mean = g.average(children);
      Node nt = g.lookup(*m_->enc.nt_emb, state_.stack[marker].nt);
      Node pair[2] = {mean, nt};
      Node composed = g.tanh_(g.add(g.matvec(comp_w_, g.concat(pair)), comp_b_));
      for (std::size_t k = marker; k < item_reps_.size(); ++k) stack_.pop();
      item_reps_.resize(marker);
      stack_.push(composed);
      item_reps_.push_back(composed);
      break;
    }
    case ActionKind::Gen:
      fail(ErrorCode::Invalid, "GEN in the discriminative transition system");
  }
  apply_action_inplace(state_, a, m_->cfg.constraints());
  step_ready_ = false;
  return step_lp;
}

Node encoder_score_node(Graph& g, const Model& model, std::span<const std::int32_t> words,
                        std::span<const std::int32_t> pos, std::span<const Action> actions) {
  EncoderRun run(g, model, words, pos);
  std::vector<Node> steps;
  steps.reserve(actions.size());
  for (size_t t = 0; t < actions.size(); ++t) {
    if (run.done())
      fail(ErrorCode::Invalid,
           "illegal-transition at step " + std::to_string(t) + ": derivation already complete");
    try {
      steps.push_back(run.advance(actions[t]));
    } catch (const Error& e) {
      fail(e.code(), "illegal-transition at step " + std::to_string(t) + ": " + e.what());
    }
  }
  if (!run.done())
    fail(ErrorCode::Invalid, "illegal-transition at step " + std::to_string(actions.size()) +
                                 ": derivation incomplete");
  std::vector<real> ones(steps.size(), 1.0);
  return g.weighted_sum(steps, ones);
}

real encoder_score(const Model& model, std::span<const std::int32_t> words,
                   std::span<const std::int32_t> pos, std::span<const Action> actions) {
  Graph g;
  return g.scalar_value(encoder_score_node(g, model, words, pos, actions));
}

namespace {

// CDF draw over the legal entries of a masked log distribution.
int sample_masked(const std::vector<real>& log_probs, const std::vector<int>& legal, Rng& rng) {
  real u = rng.uniform();
  for (size_t k = 0; k < legal.size(); ++k) {
    u -= std::exp(log_probs[legal[k]]);
    if (u < 0) return legal[k];
  }
  return legal.back();
}

int argmax_masked(const std::vector<real>& log_probs, const std::vector<int>& legal) {
  int best = legal[0];
  for (size_t k = 1; k < legal.size(); ++k)
    if (log_probs[legal[k]] > log_probs[best]) best = legal[k];
  return best;
}

EncoderSample encoder_decode(Graph& g, const Model& model, std::span<const std::int32_t> words,
                             std::span<const std::int32_t> pos, Rng* rng) {
  EncoderRun run(g, model, words, pos);
  EncoderSample out;
  std::vector<Node> steps;
  while (!run.done()) {
    const auto& legal = run.legal_indices();
    const auto& lp = run.action_log_probs();
    int idx = rng ? sample_masked(lp, legal, *rng) : argmax_masked(lp, legal);
    Action a = action_from_index(idx, TransitionMode::Discriminative);
    steps.push_back(run.advance(a));
    out.actions.push_back(a);
  }
  std::vector<real> ones(steps.size(), 1.0);
  out.log_q = g.weighted_sum(steps, ones);
  return out;
}

}  // namespace

EncoderSample encoder_sample(Graph& g, const Model& model, std::span<const std::int32_t> words,
                             std::span<const std::int32_t> pos, Rng& rng) {
  return encoder_decode(g, model, words, pos, &rng);
}

EncoderSample encoder_greedy(Graph& g, const Model& model, std::span<const std::int32_t> words,
                             std::span<const std::int32_t> pos) {
  return encoder_decode(g, model, words, pos, nullptr);
}

}  // namespace treelm
