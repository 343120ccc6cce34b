#include "treelm/decoder.hpp"

#include <cmath>

namespace treelm {

DecoderRun::DecoderRun(Graph& g, const Model& model)
    : g_(&g),
      m_(&model),
      state_(ParserState::initial_generative()),
      stack_(g, model.dec.stack, model.cfg.dec_dropout) {
  term_w_ = g.param(*m_->dec.term_w);
  term_b_ = g.param(*m_->dec.term_b);
  state_w_in_ = g.param(*m_->dec.state_w_in);
  state_b_ = g.param(*m_->dec.state_b);
  state_w_out_ = g.param(*m_->dec.state_w_out);
  act_w_ = g.param(*m_->dec.act_w);
  act_b_ = g.param(*m_->dec.act_b);
  word_w_ = g.param(*m_->dec.word_w);
  word_b_ = g.param(*m_->dec.word_b);
  null_parent_ = g.param(*m_->dec.null_parent);
  empty_out_ = g.zeros(m_->cfg.dec_lstm_dim);
}

Node DecoderRun::word_input(std::int32_t word) {
  Graph& g = *g_;
  std::vector<Node> parts;
  parts.push_back(g.lookup(*m_->dec.word_emb, word));
  if (m_->pretrained) parts.push_back(g.lookup(*m_->pretrained, word));
  return g.concat(parts);
}

void DecoderRun::ensure_step() {
  if (step_ready_) return;
  Graph& g = *g_;
  Node d = stack_.summary();
  Node o = out_state_.empty() ? empty_out_ : out_state_.h.back();
  std::int32_t parent = state_.parent_nt();
  Node n_t = parent >= 0 ? g.lookup(*m_->dec.nt_emb, parent) : null_parent_;
  Node feats[3] = {d, o, n_t};
  u_ = g.matvec(state_w_out_, g.tanh_(g.add(g.matvec(state_w_in_, g.concat(feats)), state_b_)));
  logits_ = g.add(g.matvec(act_w_, u_), act_b_);
  legal_ = legal_action_indices(state_, m_->vocab.num_nts(), m_->cfg.constraints());
  log_probs_ = masked_log_softmax_values(g.value(logits_), legal_);
  step_ready_ = true;
  word_ready_ = false;
}

void DecoderRun::ensure_word_logits() {
  ensure_step();
  if (word_ready_) return;
  bool gen_legal = false;
  for (int i : legal_) gen_legal = gen_legal || (i == 0);
  if (!gen_legal) fail(ErrorCode::Invalid, "word distribution requested where GEN is illegal");
  word_logits_ = g_->add(g_->matvec(word_w_, u_), word_b_);
  word_probs_ = log_softmax_values(g_->value(word_logits_));
  word_ready_ = true;
}

const std::vector<int>& DecoderRun::legal_indices() {
  ensure_step();
  return legal_;
}

const std::vector<real>& DecoderRun::action_log_probs() {
  ensure_step();
  return log_probs_;
}

const std::vector<real>& DecoderRun::word_log_probs() {
  ensure_word_logits();
  return word_probs_;
}

std::pair<Node, Node> DecoderRun::advance_split(const Action& a) {
  ensure_step();
  Graph& g = *g_;
  Node action_lp = g.masked_log_softmax_pick(logits_, legal_, action_index(a));
  Node word_lp;

  switch (a.kind) {
    case ActionKind::Nt: {
      Node item = g.lookup(*m_->dec.nt_emb, a.nt);
      stack_.push(item);
      item_reps_.push_back(item);
      break;
    }
    case ActionKind::Gen: {
      ensure_word_logits();
      word_lp = g.log_softmax_pick(word_logits_, a.word);
      Node input = word_input(a.word);
      out_state_ = lstm_step(g, m_->dec.out_buf, input, out_state_.empty() ? nullptr : &out_state_,
                             m_->cfg.dec_dropout);
      Node item = g.tanh_(g.add(g.matvec(term_w_, input), term_b_));
      stack_.push(item);
      item_reps_.push_back(item);
      break;
    }
    case ActionKind::Reduce: {
      std::size_t marker = state_.open_positions.back();
      std::span<const Node> children(item_reps_.data() + marker + 1,
                                     item_reps_.size() - marker - 1);
      Node composed = compose_subtree(g, *m_, children, state_.stack[marker].nt);
      for (std::size_t k = marker; k < item_reps_.size(); ++k) stack_.pop();
      item_reps_.resize(marker);
      stack_.push(composed);
      item_reps_.push_back(composed);
      break;
    }
    case ActionKind::Shift:
      fail(ErrorCode::Invalid, "SHIFT in the generative transition system");
  }
  apply_action_inplace(state_, a, m_->cfg.constraints());
  step_ready_ = false;
  return {action_lp, word_lp};
}

Node DecoderRun::advance(const Action& a) {
  auto [action_lp, word_lp] = advance_split(a);
  if (word_lp.valid()) return g_->add(action_lp, word_lp);
  return action_lp;
}

Node compose_subtree(Graph& g, const Model& model, std::span<const Node> children,
                     std::int32_t nt) {
  if (children.empty()) fail(ErrorCode::Invalid, "compose_subtree with no children");
  Node mean = g.average(children);
  Node pair[2] = {mean, g.lookup(*model.dec.nt_emb, nt)};
  return g.tanh_(g.add(g.matvec(g.param(*model.dec.comp_w), g.concat(pair)),
                       g.param(*model.dec.comp_b)));
}

JointScore decoder_score_node(Graph& g, const Model& model,
                              std::span<const std::int32_t> words,
                              std::span<const Action> actions) {
  std::size_t gen_count = 0;
  for (const Action& a : actions)
    if (a.kind == ActionKind::Gen) ++gen_count;
  if (gen_count != words.size())
    fail(ErrorCode::Invalid, "GEN count " + std::to_string(gen_count) +
                                 " does not match word count " + std::to_string(words.size()));

  DecoderRun run(g, model);
  std::vector<Node> step_terms, action_terms, word_terms;
  std::size_t word_at = 0;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    Action a = actions[t];
    if (a.kind == ActionKind::Gen) {
      if (a.word != words[word_at])
        fail(ErrorCode::Invalid, "GEN word mismatch at step " + std::to_string(t));
      ++word_at;
    }
    if (run.done())
      fail(ErrorCode::Invalid,
           "illegal-transition at step " + std::to_string(t) + ": derivation already complete");
    try {
      auto [alp, wlp] = run.advance_split(a);
      action_terms.push_back(alp);
      if (wlp.valid()) {
        word_terms.push_back(wlp);
        // joint accumulated per step, in sampling order, so that replaying a
        // sample reproduces its score bit for bit
        step_terms.push_back(g.add(alp, wlp));
      } else {
        step_terms.push_back(alp);
      }
    } catch (const Error& e) {
      fail(e.code(), "illegal-transition at step " + std::to_string(t) + ": " + e.what());
    }
  }
  if (!run.done())
    fail(ErrorCode::Invalid, "illegal-transition at step " + std::to_string(actions.size()) +
                                 ": derivation incomplete");

  JointScore score;
  std::vector<real> ones_a(action_terms.size(), 1.0);
  score.log_p_actions = g.weighted_sum(action_terms, ones_a);
  if (word_terms.empty()) {
    score.log_p_words = g.scalar(0);
  } else {
    std::vector<real> ones_w(word_terms.size(), 1.0);
    score.log_p_words = g.weighted_sum(word_terms, ones_w);
  }
  std::vector<real> ones_s(step_terms.size(), 1.0);
  score.log_joint = g.weighted_sum(step_terms, ones_s);
  return score;
}

real decoder_score(const Model& model, std::span<const std::int32_t> words,
                   std::span<const Action> actions) {
  Graph g;
  return g.scalar_value(decoder_score_node(g, model, words, actions).log_joint);
}

std::optional<GenSample> decoder_sample(Graph& g, const Model& model, Rng& rng, int max_words) {
  DecoderRun run(g, model);
  GenSample out;
  std::vector<Node> terms;
  while (!run.done()) {
    const auto& legal = run.legal_indices();
    const auto& lp = run.action_log_probs();
    real u = rng.uniform();
    int idx = legal.back();
    for (size_t k = 0; k < legal.size(); ++k) {
      u -= std::exp(lp[legal[k]]);
      if (u < 0) {
        idx = legal[k];
        break;
      }
    }
    Action a;
    if (idx == 0) {
      if (static_cast<int>(run.state().words_generated()) >= max_words) return std::nullopt;
      const auto& wlp = run.word_log_probs();
      real uw = rng.uniform();
      std::int32_t word = static_cast<std::int32_t>(wlp.size()) - 1;
      for (std::size_t w = 0; w < wlp.size(); ++w) {
        uw -= std::exp(wlp[w]);
        if (uw < 0) {
          word = static_cast<std::int32_t>(w);
          break;
        }
      }
      a = Action::make_gen(word);
      out.words.push_back(word);
    } else {
      a = action_from_index(idx, TransitionMode::Generative);
    }
    terms.push_back(run.advance(a));
    out.actions.push_back(a);
  }
  std::vector<real> ones(terms.size(), 1.0);
  out.log_joint = g.weighted_sum(terms, ones);
  return out;
}

}  // namespace treelm
