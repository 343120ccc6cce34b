#ifndef TREELM_CONFIG_HPP
#define TREELM_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <string>

#include "treelm/common.hpp"
#include "treelm/transitions.hpp"

namespace treelm {

// Network dimensions and transition limits. Defaults follow the reference
// hyperparameter set (learned 40 / pretrained 50 / POS 20, encoder LSTM 128,
// decoder LSTM 256, 2 layers, dropout 0.2 / 0.3).
struct ModelConfig {
  int learned_dim = 40;
  int pretrained_dim = 50;
  int pos_dim = 20;
  int enc_lstm_dim = 128;
  int dec_lstm_dim = 256;
  int lstm_layers = 2;
  real enc_dropout = 0.2;
  real dec_dropout = 0.3;
  int enc_state_dim = 128;  // dimension of v_t
  int dec_state_dim = 256;  // dimension of u_t
  int max_open_nt = 100;
  int max_sentence_len = 120;

  int enc_word_input_dim() const { return learned_dim + pretrained_dim + pos_dim; }
  int dec_word_input_dim() const { return learned_dim + pretrained_dim; }
  Constraints constraints() const { return Constraints{max_open_nt, max_sentence_len}; }
  void validate() const;
};

struct TrainConfig {
  ModelConfig model;
  real lambda_x = 1.0;
  real lambda_a = 1.0;
  int samples_per_sentence = 1;
  real learning_rate = 1e-3;
  real clip_norm = 5.0;
  real baseline_decay = 0.95;
  int epochs = 10;
  int min_count = 2;
  int eval_samples = 4;  // ELBO samples per dev sentence during validation
  std::uint64_t seed = 1;

  void validate() const;
};

// Flat `key = value` text format; '#' starts a comment. Unknown keys are
// rejected so typos fail loudly.
TrainConfig parse_train_config(std::istream& is, const std::string& name);
TrainConfig load_train_config(const std::string& path);
void write_train_config(std::ostream& os, const TrainConfig& cfg);

}  // namespace treelm

#endif  // TREELM_CONFIG_HPP
