#include "treelm/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace treelm {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) fail(ErrorCode::Invalid, std::string("config: ") + what + " must be positive");
  };
  positive(learned_dim, "learned_dim");
  positive(pos_dim, "pos_dim");
  positive(enc_lstm_dim, "enc_lstm_dim");
  positive(dec_lstm_dim, "dec_lstm_dim");
  positive(lstm_layers, "lstm_layers");
  positive(enc_state_dim, "enc_state_dim");
  positive(dec_state_dim, "dec_state_dim");
  positive(max_open_nt, "max_open_nt");
  positive(max_sentence_len, "max_sentence_len");
  if (pretrained_dim < 0) fail(ErrorCode::Invalid, "config: pretrained_dim must be >= 0");
  if (enc_dropout < 0 || enc_dropout >= 1 || dec_dropout < 0 || dec_dropout >= 1)
    fail(ErrorCode::Invalid, "config: dropout rates must lie in [0, 1)");
}

void TrainConfig::validate() const {
  model.validate();
  if (lambda_x < 0 || lambda_a < 0 || (lambda_x == 0 && lambda_a == 0))
    fail(ErrorCode::Invalid, "config: lambda_x and lambda_a must be >= 0 and not both 0");
  if (samples_per_sentence < 1) fail(ErrorCode::Invalid, "config: samples_per_sentence >= 1");
  if (learning_rate <= 0) fail(ErrorCode::Invalid, "config: learning_rate must be positive");
  if (clip_norm <= 0) fail(ErrorCode::Invalid, "config: clip_norm must be positive");
  if (baseline_decay < 0 || baseline_decay >= 1)
    fail(ErrorCode::Invalid, "config: baseline_decay must lie in [0, 1)");
  if (epochs < 1) fail(ErrorCode::Invalid, "config: epochs >= 1");
  if (min_count < 1) fail(ErrorCode::Invalid, "config: min_count >= 1");
  if (eval_samples < 1) fail(ErrorCode::Invalid, "config: eval_samples >= 1");
}

namespace {

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
T parse_number(const std::string& raw, const std::string& key) {
  std::istringstream is(raw);
  T v;
  is >> v;
  if (!is || !(is >> std::ws).eof())
    fail(ErrorCode::Format, "config: bad value for " + key + ": '" + raw + "'");
  return v;
}

std::string format_real(real v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> m;
    auto add_int = [&m](const std::string& key, int TrainConfig::* member) {
      m[key] = {[key, member](TrainConfig& c, const std::string& v) {
                  c.*member = parse_number<int>(v, key);
                },
                [member](const TrainConfig& c) { return std::to_string(c.*member); }};
    };
    auto add_model_int = [&m](const std::string& key, int ModelConfig::* member) {
      m[key] = {[key, member](TrainConfig& c, const std::string& v) {
                  c.model.*member = parse_number<int>(v, key);
                },
                [member](const TrainConfig& c) { return std::to_string(c.model.*member); }};
    };
    auto add_real = [&m](const std::string& key, real TrainConfig::* member) {
      m[key] = {[key, member](TrainConfig& c, const std::string& v) {
                  c.*member = parse_number<real>(v, key);
                },
                [member](const TrainConfig& c) { return format_real(c.*member); }};
    };
    auto add_model_real = [&m](const std::string& key, real ModelConfig::* member) {
      m[key] = {[key, member](TrainConfig& c, const std::string& v) {
                  c.model.*member = parse_number<real>(v, key);
                },
                [member](const TrainConfig& c) { return format_real(c.model.*member); }};
    };
    add_model_int("learned_dim", &ModelConfig::learned_dim);
    add_model_int("pretrained_dim", &ModelConfig::pretrained_dim);
    add_model_int("pos_dim", &ModelConfig::pos_dim);
    add_model_int("enc_lstm_dim", &ModelConfig::enc_lstm_dim);
    add_model_int("dec_lstm_dim", &ModelConfig::dec_lstm_dim);
    add_model_int("lstm_layers", &ModelConfig::lstm_layers);
    add_model_int("enc_state_dim", &ModelConfig::enc_state_dim);
    add_model_int("dec_state_dim", &ModelConfig::dec_state_dim);
    add_model_int("max_open_nt", &ModelConfig::max_open_nt);
    add_model_int("max_sentence_len", &ModelConfig::max_sentence_len);
    add_model_real("enc_dropout", &ModelConfig::enc_dropout);
    add_model_real("dec_dropout", &ModelConfig::dec_dropout);
    add_real("lambda_x", &TrainConfig::lambda_x);
    add_real("lambda_a", &TrainConfig::lambda_a);
    add_int("samples_per_sentence", &TrainConfig::samples_per_sentence);
    add_real("learning_rate", &TrainConfig::learning_rate);
    add_real("clip_norm", &TrainConfig::clip_norm);
    add_real("baseline_decay", &TrainConfig::baseline_decay);
    add_int("epochs", &TrainConfig::epochs);
    add_int("min_count", &TrainConfig::min_count);
    add_int("eval_samples", &TrainConfig::eval_samples);
    m["seed"] = {[](TrainConfig& c, const std::string& v) {
                   c.seed = parse_number<std::uint64_t>(v, "seed");
                 },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }};
    return m;
  }();
  return table;
}

}  // namespace

TrainConfig parse_train_config(std::istream& is, const std::string& name) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string eq;
    ls >> eq;
    std::string value;
    if (eq == "=") {
      ls >> value;
    } else {
      value = eq;  // `key value` form
    }
    if (value.empty())
      fail(ErrorCode::Format, name + ":" + std::to_string(lineno) + ": missing value for " + key);
    auto it = fields().find(key);
    if (it == fields().end())
      fail(ErrorCode::Format, name + ":" + std::to_string(lineno) + ": unknown config key " + key);
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open config: " + path);
  return parse_train_config(is, path);
}

void write_train_config(std::ostream& os, const TrainConfig& cfg) {
  for (const auto& [key, field] : fields()) os << key << " = " << field.get(cfg) << "\n";
}

}  // namespace treelm
