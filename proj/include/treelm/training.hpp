#ifndef TREELM_TRAINING_HPP
#define TREELM_TRAINING_HPP

#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include "treelm/decoder.hpp"
#include "treelm/encoder.hpp"
#include "treelm/model.hpp"

namespace treelm {

// SHIFT_i -> GEN(words[i]); the two systems share derivations one-to-one.
std::vector<Action> to_generative(std::span<const Action> disc_actions,
                                  std::span<const std::int32_t> words);

struct AdamOptimizer {
  AdamOptimizer(real learning_rate, real clip_norm);
  // Clips the global gradient norm, applies one update, returns the
  // pre-clipping norm.
  real step(ParamStore& params);

  real learning_rate;
  real clip_norm;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;

 private:
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

struct ObjectiveReport {
  real lx = 0;         // ELBO Monte Carlo estimate, nats/sentence
  real la = 0;         // supervised log likelihood, nats/sentence
  real combined = 0;   // lambda_x * lx + lambda_a * la
  real baseline = 0;   // moving-average learning signal
  real grad_norm = 0;
};

class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  // Builds the combined objective for one sentence, accumulates gradients and
  // applies one optimizer update.
  ObjectiveReport instance_step(const Instance& inst, Rng& sample_rng, Rng& dropout_rng,
                                const std::string& diag_id);

  // Evaluation-mode objectives (no gradients).
  real supervised_loss_value(const Instance& inst) const;
  real elbo_value(const Instance& inst, int k, Rng& rng) const;

  struct ValidationResult {
    std::optional<real> la;
    real elbo = 0;
    real metric = 0;
  };
  ValidationResult validate(std::span<const Instance> dev, Rng rng) const;

  // Full loop: seeded shuffling, per-instance updates, per-epoch validation,
  // best-checkpoint retention. Log lines: `epoch=E dev_la=X dev_elbo=Y best=B`.
  void train(std::span<const Instance> corpus, std::span<const Instance> dev,
             const std::string& checkpoint_path, std::ostream* log);

  real baseline() const { return baseline_; }

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamOptimizer opt_;
  real baseline_ = 0;
  bool baseline_ready_ = false;
};

}  // namespace treelm

#endif  // TREELM_TRAINING_HPP
