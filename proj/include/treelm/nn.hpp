#ifndef TREELM_NN_HPP
#define TREELM_NN_HPP

#include <span>
#include <string>
#include <vector>

#include "treelm/tensor.hpp"

namespace treelm {

// Multi-layer LSTM parameter bundle. Gate order i, f, g, o.
struct LstmParams {
  struct Layer {
    Param* wx = nullptr;  // [4H x in]
    Param* wh = nullptr;  // [4H x H]
    Param* b = nullptr;   // [4H], forget gate section initialized to 1
  };
  std::vector<Layer> layers;
  int input_dim = 0;
  int hidden_dim = 0;

  static LstmParams create(ParamStore& store, const std::string& prefix, int input_dim,
                           int hidden_dim, int num_layers, Rng& rng);
};

// Per-layer (h, c) after some number of steps.
struct LstmState {
  std::vector<Node> h;
  std::vector<Node> c;
  bool empty() const { return h.empty(); }
};

// One step; prev == nullptr starts from the zero state. Dropout is applied to
// the layer inputs (the external input and each lower layer's output).
LstmState lstm_step(Graph& g, const LstmParams& params, Node x, const LstmState* prev,
                    real dropout_rate);

// An LSTM over a stack: push advances from the current top state, pop rewinds
// to the exact pre-push state (all intermediate states are retained).
class StackLstm {
 public:
  StackLstm(Graph& g, const LstmParams& params, real dropout_rate);

  void push(Node x);
  void pop();
  size_t size() const { return states_.size(); }

  // Hidden state of the top position (last layer); zero vector when empty.
  Node summary() const;

 private:
  Graph* g_;
  const LstmParams* params_;
  real dropout_rate_;
  std::vector<LstmState> states_;
  Node empty_summary_;
};

// Runs forward and backward LSTMs over a sequence; result[t] is the
// concatenation of the two last-layer hidden states at position t.
std::vector<Node> bilstm_encode(Graph& g, const LstmParams& fwd, const LstmParams& bwd,
                                std::span<const Node> inputs, real dropout_rate);

// Additive attention: score_i = v . tanh(Wq q + Wk k_i), output = sum_i a_i k_i
// with a = softmax(score).
struct AttentionParams {
  Param* wq = nullptr;
  Param* wk = nullptr;
  Param* v = nullptr;

  static AttentionParams create(ParamStore& store, const std::string& prefix, int query_dim,
                                int key_dim, int att_dim, Rng& rng);
};

Node attention(Graph& g, const AttentionParams& params, Node query, std::span<const Node> keys);

}  // namespace treelm

#endif  // TREELM_NN_HPP
