#include "treelm/nn.hpp"

namespace treelm {

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix, int input_dim,
                              int hidden_dim, int num_layers, Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (int l = 0; l < num_layers; ++l) {
    int in = l == 0 ? input_dim : hidden_dim;
    Layer layer;
    std::string base = prefix + ".l" + std::to_string(l);
    layer.wx = store.add(base + ".wx", 4 * hidden_dim, in, ParamInit::Xavier, rng);
    layer.wh = store.add(base + ".wh", 4 * hidden_dim, hidden_dim, ParamInit::Xavier, rng);
    layer.b = store.add(base + ".b", 4 * hidden_dim, 1, ParamInit::LstmBias, rng);
    p.layers.push_back(layer);
  }
  return p;
}

LstmState lstm_step(Graph& g, const LstmParams& params, Node x, const LstmState* prev,
                    real dropout_rate) {
  LstmState next;
  int hd = params.hidden_dim;
  Node input = x;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    input = g.dropout(input, dropout_rate);
    Node h_prev = prev ? prev->h[l] : g.zeros(hd);
    Node c_prev = prev ? prev->c[l] : g.zeros(hd);
    Node z = g.add(g.affine(g.param(*layer.wx), input, g.param(*layer.b)),
                   g.matvec(g.param(*layer.wh), h_prev));
    Node i_gate = g.logistic(g.slice(z, 0, hd));
    Node f_gate = g.logistic(g.slice(z, hd, hd));
    Node g_gate = g.tanh_(g.slice(z, 2 * hd, hd));
    Node o_gate = g.logistic(g.slice(z, 3 * hd, hd));
    Node c = g.add(g.cmul(f_gate, c_prev), g.cmul(i_gate, g_gate));
    Node h = g.cmul(o_gate, g.tanh_(c));
    next.h.push_back(h);
    next.c.push_back(c);
    input = h;
  }
  return next;
}

StackLstm::StackLstm(Graph& g, const LstmParams& params, real dropout_rate)
    : g_(&g), params_(&params), dropout_rate_(dropout_rate) {
  empty_summary_ = g.zeros(params.hidden_dim);
}

void StackLstm::push(Node x) {
  const LstmState* prev = states_.empty() ? nullptr : &states_.back();
  states_.push_back(lstm_step(*g_, *params_, x, prev, dropout_rate_));
}

void StackLstm::pop() {
  if (states_.empty()) fail(ErrorCode::Invalid, "StackLstm::pop on empty stack");
  states_.pop_back();
}

Node StackLstm::summary() const {
  if (states_.empty()) return empty_summary_;
  return states_.back().h.back();
}

std::vector<Node> bilstm_encode(Graph& g, const LstmParams& fwd, const LstmParams& bwd,
                                std::span<const Node> inputs, real dropout_rate) {
  size_t n = inputs.size();
  std::vector<Node> fh(n), bh(n);
  LstmState state;
  for (size_t t = 0; t < n; ++t) {
    state = lstm_step(g, fwd, inputs[t], state.empty() ? nullptr : &state, dropout_rate);
    fh[t] = state.h.back();
  }
  state = LstmState();
  for (size_t t = n; t-- > 0;) {
    state = lstm_step(g, bwd, inputs[t], state.empty() ? nullptr : &state, dropout_rate);
    bh[t] = state.h.back();
  }
  std::vector<Node> out(n);
  for (size_t t = 0; t < n; ++t) {
    Node parts[2] = {fh[t], bh[t]};
    out[t] = g.concat(parts);
  }
  return out;
}

AttentionParams AttentionParams::create(ParamStore& store, const std::string& prefix,
                                        int query_dim, int key_dim, int att_dim, Rng& rng) {
  AttentionParams p;
  p.wq = store.add(prefix + ".wq", att_dim, query_dim, ParamInit::Xavier, rng);
  p.wk = store.add(prefix + ".wk", att_dim, key_dim, ParamInit::Xavier, rng);
  p.v = store.add(prefix + ".v", att_dim, 1, ParamInit::Xavier, rng);
  return p;
}

Node attention(Graph& g, const AttentionParams& params, Node query, std::span<const Node> keys) {
  if (keys.empty()) fail(ErrorCode::Invalid, "attention over empty key set");
  Node wq = g.param(*params.wq);
  Node wk = g.param(*params.wk);
  Node v = g.param(*params.v);
  Node qproj = g.matvec(wq, query);
  std::vector<Node> scores;
  scores.reserve(keys.size());
  for (Node k : keys) {
    Node s = g.dot(v, g.tanh_(g.add(qproj, g.matvec(wk, k))));
    scores.push_back(s);
  }
  Node weights = g.softmax(g.stack_scalars(scores));
  return g.convex_combine(weights, keys);
}

}  // namespace treelm
