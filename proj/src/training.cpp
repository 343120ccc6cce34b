#include "treelm/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace treelm {

std::vector<Action> to_generative(std::span<const Action> disc_actions,
                                  std::span<const std::int32_t> words) {
  std::vector<Action> out;
  out.reserve(disc_actions.size());
  std::size_t at = 0;
  for (const Action& a : disc_actions) {
    if (a.kind == ActionKind::Shift) {
      if (at >= words.size()) fail(ErrorCode::Invalid, "more SHIFTs than words");
      out.push_back(Action::make_gen(words[at++]));
    } else {
      out.push_back(a);
    }
  }
  if (at != words.size()) fail(ErrorCode::Invalid, "fewer SHIFTs than words");
  return out;
}

AdamOptimizer::AdamOptimizer(real lr, real clip) : learning_rate(lr), clip_norm(clip) {}

real AdamOptimizer::step(ParamStore& params) {
  if (m_.empty()) {
    for (const auto& p : params.all()) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  real norm = params.grad_norm();
  if (norm > clip_norm && norm > 0) params.scale_grads(clip_norm / norm);
  ++t_;
  real correction1 = 1 - std::pow(beta1, static_cast<real>(t_));
  real correction2 = 1 - std::pow(beta2, static_cast<real>(t_));
  size_t idx = 0;
  for (const auto& p : params.all()) {
    if (!p->frozen) {
      Tensor& m = m_[idx];
      Tensor& v = v_[idx];
      for (int i = 0; i < p->value.size(); ++i) {
        real g = p->grad.data[i];
        m.data[i] = beta1 * m.data[i] + (1 - beta1) * g;
        v.data[i] = beta2 * v.data[i] + (1 - beta2) * g * g;
        real mhat = m.data[i] / correction1;
        real vhat = v.data[i] / correction2;
        p->value.data[i] -= learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
    }
    ++idx;
  }
  return norm;
}

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model), cfg_(cfg), opt_(cfg.learning_rate, cfg.clip_norm) {
  cfg_.validate();
}

ObjectiveReport Trainer::instance_step(const Instance& inst, Rng& sample_rng, Rng& dropout_rng,
                                       const std::string& diag_id) {
  if (inst.words.empty()) fail(ErrorCode::Invalid, "empty sentence in training");
  Graph g(true, &dropout_rng);
  std::vector<Node> terms;
  std::vector<real> coeffs;
  ObjectiveReport report;

  if (cfg_.lambda_a > 0) {
    if (!inst.gold_disc || !inst.gold_gen)
      fail(ErrorCode::Invalid, "supervised objective requires gold actions (" + diag_id + ")");
    Node log_q = encoder_score_node(g, model_, inst.words, inst.pos, *inst.gold_disc);
    JointScore joint = decoder_score_node(g, model_, inst.words, *inst.gold_gen);
    report.la = g.scalar_value(log_q) + g.scalar_value(joint.log_p_actions);
    terms.push_back(log_q);
    coeffs.push_back(-cfg_.lambda_a);
    terms.push_back(joint.log_p_actions);
    coeffs.push_back(-cfg_.lambda_a);
  }

  if (cfg_.lambda_x > 0) {
    int k = cfg_.samples_per_sentence;
    real signal_sum = 0;
    for (int i = 0; i < k; ++i) {
      EncoderSample sample = encoder_sample(g, model_, inst.words, inst.pos, sample_rng);
      std::vector<Action> gen_actions = to_generative(sample.actions, inst.words);
      JointScore joint = decoder_score_node(g, model_, inst.words, gen_actions);
      real log_p = g.scalar_value(joint.log_joint);
      real log_q = g.scalar_value(sample.log_q);
      real signal = log_p - log_q;
      signal_sum += signal;
      // decoder: direct differentiation of log p(x, a)
      terms.push_back(joint.log_joint);
      coeffs.push_back(-cfg_.lambda_x / k);
      // encoder: score-function term with a moving-average baseline
      real centered = signal - (baseline_ready_ ? baseline_ : 0);
      terms.push_back(sample.log_q);
      coeffs.push_back(-cfg_.lambda_x / k * centered);
    }
    report.lx = signal_sum / k;
    real mean_signal = signal_sum / k;
    if (baseline_ready_) {
      baseline_ = cfg_.baseline_decay * baseline_ + (1 - cfg_.baseline_decay) * mean_signal;
    } else {
      baseline_ = mean_signal;
      baseline_ready_ = true;
    }
  }

  report.baseline = baseline_;
  report.combined = cfg_.lambda_x * report.lx + cfg_.lambda_a * report.la;
  Node loss = g.weighted_sum(terms, coeffs);
  real loss_value = g.scalar_value(loss);
  if (!std::isfinite(loss_value)) {
    std::ostringstream os;
    os << "non-finite loss at " << diag_id << ": loss=" << loss_value
       << " lx=" << report.lx << " la=" << report.la;
    real pnorm = 0;
    for (const auto& p : model_.params.all())
      for (real v : p->value.data) pnorm += v * v;
    os << " param_norm=" << std::sqrt(pnorm);
    fail(ErrorCode::Numeric, os.str());
  }
  model_.params.zero_grad();
  g.backward(loss);
  report.grad_norm = opt_.step(model_.params);
  if (!std::isfinite(report.grad_norm))
    fail(ErrorCode::Numeric, "non-finite gradient norm at " + diag_id);
  return report;
}

real Trainer::supervised_loss_value(const Instance& inst) const {
  if (!inst.gold_disc || !inst.gold_gen)
    fail(ErrorCode::Invalid, "supervised loss requires gold actions");
  Graph g;
  Node log_q = encoder_score_node(g, model_, inst.words, inst.pos, *inst.gold_disc);
  JointScore joint = decoder_score_node(g, model_, inst.words, *inst.gold_gen);
  return g.scalar_value(log_q) + g.scalar_value(joint.log_p_actions);
}

real Trainer::elbo_value(const Instance& inst, int k, Rng& rng) const {
  real total = 0;
  for (int i = 0; i < k; ++i) {
    Graph g;
    EncoderSample sample = encoder_sample(g, model_, inst.words, inst.pos, rng);
    std::vector<Action> gen_actions = to_generative(sample.actions, inst.words);
    JointScore joint = decoder_score_node(g, model_, inst.words, gen_actions);
    total += g.scalar_value(joint.log_joint) - g.scalar_value(sample.log_q);
  }
  return total / k;
}

Trainer::ValidationResult Trainer::validate(std::span<const Instance> dev, Rng rng) const {
  ValidationResult result;
  bool has_gold = true;
  for (const Instance& inst : dev) has_gold = has_gold && inst.gold_disc.has_value();
  real la_sum = 0, elbo_sum = 0;
  for (size_t i = 0; i < dev.size(); ++i) {
    Rng sentence_rng = rng.child(i);
    elbo_sum += elbo_value(dev[i], cfg_.eval_samples, sentence_rng);
    if (has_gold) la_sum += supervised_loss_value(dev[i]);
  }
  result.elbo = elbo_sum / static_cast<real>(dev.size());
  if (has_gold) result.la = la_sum / static_cast<real>(dev.size());
  result.metric = cfg_.lambda_x * result.elbo +
                  (result.la ? cfg_.lambda_a * *result.la : 0);
  return result;
}

void Trainer::train(std::span<const Instance> corpus, std::span<const Instance> dev,
                    const std::string& checkpoint_path, std::ostream* log) {
  if (corpus.empty()) fail(ErrorCode::Invalid, "training corpus is empty");
  for (size_t i = 0; i < corpus.size(); ++i)
    if (static_cast<int>(corpus[i].words.size()) > cfg_.model.max_sentence_len)
      fail(ErrorCode::Invalid, "training sentence " + std::to_string(i) + " has " +
                                   std::to_string(corpus[i].words.size()) +
                                   " words, above max_sentence_len");

  Rng root(cfg_.seed);
  Rng shuffle_rng = root.child("shuffle");
  Rng sample_root = root.child("sample");
  Rng dropout_root = root.child("dropout");
  Rng dev_root = root.child("dev");

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), size_t{0});
  real best_metric = -std::numeric_limits<real>::infinity();
  bool saved = false;

  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    for (size_t pos = 0; pos < order.size(); ++pos) {
      size_t idx = order[pos];
      std::uint64_t tag =
          static_cast<std::uint64_t>(epoch) * (corpus.size() + 1) + idx;
      Rng sample_rng = sample_root.child(tag);
      Rng dropout_rng = dropout_root.child(tag);
      std::string diag =
          "epoch " + std::to_string(epoch) + ", instance " + std::to_string(idx);
      instance_step(corpus[idx], sample_rng, dropout_rng, diag);
    }

    bool best = false;
    if (!dev.empty()) {
      ValidationResult val = validate(dev, dev_root.child(epoch));
      if (val.metric > best_metric) {
        best_metric = val.metric;
        best = true;
        if (!checkpoint_path.empty()) {
          save_checkpoint(model_, checkpoint_path);
          saved = true;
        }
      }
      if (log) {
        (*log) << "epoch=" << epoch << " dev_la=";
        if (val.la)
          (*log) << *val.la;
        else
          (*log) << "na";
        (*log) << " dev_elbo=" << val.elbo << " best=" << (best ? 1 : 0) << "\n";
        log->flush();
      }
    } else if (log) {
      (*log) << "epoch=" << epoch << " dev_la=na dev_elbo=na best=0\n";
      log->flush();
    }
  }
  // without a dev set (or if nothing improved) keep the final parameters
  if (!checkpoint_path.empty() && !saved) save_checkpoint(model_, checkpoint_path);
}

}  // namespace treelm
