#include "treelm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace treelm {

// ---------------------------------------------------------------- ParamStore

Param* ParamStore::add(const std::string& name, int rows, int cols, ParamInit init, Rng& rng) {
  if (find(name)) fail(ErrorCode::Invalid, "duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Tensor(rows, cols);
  p->grad = Tensor(rows, cols);
  switch (init) {
    case ParamInit::Zeros:
      break;
    case ParamInit::UniformEmbed:
      for (auto& v : p->value.data) v = rng.uniform(-0.1, 0.1);
      break;
    case ParamInit::Xavier: {
      real bound = std::sqrt(real(6) / (rows + cols));
      for (auto& v : p->value.data) v = rng.uniform(-bound, bound);
      break;
    }
    case ParamInit::LstmBias: {
      // gate order i, f, g, o; forget bias starts at 1
      if (cols != 1 || rows % 4 != 0)
        fail(ErrorCode::Invalid, "LstmBias init expects a 4H vector: " + name);
      int h = rows / 4;
      for (int i = h; i < 2 * h; ++i) p->value[i] = 1.0;
      break;
    }
  }
  params_.push_back(std::move(p));
  return params_.back().get();
}

Param* ParamStore::add_frozen(const std::string& name, Tensor value) {
  if (find(name)) fail(ErrorCode::Invalid, "duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->grad = Tensor(value.rows, value.cols);
  p->value = std::move(value);
  p->frozen = true;
  params_.push_back(std::move(p));
  return params_.back().get();
}

Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.zero();
}

real ParamStore::grad_norm() const {
  real ss = 0;
  for (const auto& p : params_) {
    if (p->frozen) continue;
    for (real g : p->grad.data) ss += g * g;
  }
  return std::sqrt(ss);
}

void ParamStore::scale_grads(real factor) {
  for (auto& p : params_) {
    if (p->frozen) continue;
    for (real& g : p->grad.data) g *= factor;
  }
}

// --------------------------------------------------------------------- Graph

void Graph::check_same_graph(Node n) const {
  if (n.g != this || n.id < 0 || n.id >= static_cast<int>(recs_.size()))
    fail(ErrorCode::Invalid, "node does not belong to this graph");
}

Node Graph::make(Tensor val, std::initializer_list<Node> parents,
                 std::function<void(Graph&, int)> back) {
  Rec rec;
  rec.val = std::move(val);
  rec.back = std::move(back);
  for (Node p : parents) {
    check_same_graph(p);
    if (recs_[p.id].needs_grad) rec.needs_grad = true;
  }
  return Node{this, push(std::move(rec))};
}

const Tensor& Graph::value(Node n) const {
  check_same_graph(n);
  return val(n.id);
}

real Graph::scalar_value(Node n) const {
  const Tensor& t = value(n);
  if (t.size() != 1) fail(ErrorCode::Invalid, "scalar_value on non-scalar node");
  return t[0];
}

Node Graph::constant(Tensor t) { return make(std::move(t), {}, nullptr); }

Node Graph::scalar(real v) {
  Tensor t(1, 1);
  t[0] = v;
  return constant(std::move(t));
}

Node Graph::zeros(int n) { return constant(Tensor::vec(n)); }

Node Graph::param(Param& p) {
  Rec rec;
  rec.ext = &p.value;
  rec.sink = &p;
  rec.needs_grad = !p.frozen;
  return Node{this, push(std::move(rec))};
}

Node Graph::lookup(Param& table, int row) {
  if (row < 0 || row >= table.rows())
    fail(ErrorCode::Invalid, "lookup row out of range in " + table.name);
  Tensor v = Tensor::vec(table.cols());
  const real* src = &table.value.data[static_cast<size_t>(row) * table.cols()];
  std::copy(src, src + table.cols(), v.data.begin());
  Rec rec;
  rec.val = std::move(v);
  rec.sink = &table;
  rec.sink_row = row;
  rec.needs_grad = !table.frozen;
  return Node{this, push(std::move(rec))};
}

Node Graph::matvec(Node W, Node x) {
  const Tensor& w = value(W);
  const Tensor& v = value(x);
  if (w.cols != v.rows || v.cols != 1)
    fail(ErrorCode::Invalid, "matvec shape mismatch");
  Tensor y = Tensor::vec(w.rows);
  for (int r = 0; r < w.rows; ++r) {
    real s = 0;
    const real* wr = &w.data[static_cast<size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) s += wr[c] * v[c];
    y[r] = s;
  }
  int wi = W.id, xi = x.id;
  return make(std::move(y), {W, x}, [wi, xi](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    const Tensor& w = g.val(wi);
    const Tensor& v = g.val(xi);
    Tensor& gw = g.gslot(wi);
    Tensor& gx = g.gslot(xi);
    for (int r = 0; r < w.rows; ++r) {
      real gr = gy[r];
      if (gr == 0) continue;
      real* gwr = &gw.data[static_cast<size_t>(r) * w.cols];
      const real* wr = &w.data[static_cast<size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) {
        gwr[c] += gr * v[c];
        gx[c] += gr * wr[c];
      }
    }
  });
}

Node Graph::affine(Node W, Node x, Node b) {
  Node y = matvec(W, x);
  return add(y, b);
}

Node Graph::add(Node a, Node b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.size() != tb.size()) fail(ErrorCode::Invalid, "add shape mismatch");
  Tensor y = ta;
  for (int i = 0; i < y.size(); ++i) y[i] += tb[i];
  int ai = a.id, bi = b.id;
  return make(std::move(y), {a, b}, [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    Tensor& ga = g.gslot(ai);
    Tensor& gb = g.gslot(bi);
    for (int i = 0; i < gy.size(); ++i) {
      ga[i] += gy[i];
      gb[i] += gy[i];
    }
  });
}

Node Graph::sub(Node a, Node b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.size() != tb.size()) fail(ErrorCode::Invalid, "sub shape mismatch");
  Tensor y = ta;
  for (int i = 0; i < y.size(); ++i) y[i] -= tb[i];
  int ai = a.id, bi = b.id;
  return make(std::move(y), {a, b}, [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    Tensor& ga = g.gslot(ai);
    Tensor& gb = g.gslot(bi);
    for (int i = 0; i < gy.size(); ++i) {
      ga[i] += gy[i];
      gb[i] -= gy[i];
    }
  });
}

Node Graph::scale(Node a, real c) {
  Tensor y = value(a);
  for (auto& v : y.data) v *= c;
  int ai = a.id;
  return make(std::move(y), {a}, [ai, c](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < gy.size(); ++i) ga[i] += c * gy[i];
  });
}

Node Graph::weighted_sum(std::span<const Node> xs, std::span<const real> cs) {
  if (xs.empty() || xs.size() != cs.size())
    fail(ErrorCode::Invalid, "weighted_sum arity mismatch");
  Tensor y = value(xs[0]);
  for (auto& v : y.data) v *= cs[0];
  for (size_t k = 1; k < xs.size(); ++k) {
    const Tensor& t = value(xs[k]);
    if (t.size() != y.size()) fail(ErrorCode::Invalid, "weighted_sum shape mismatch");
    for (int i = 0; i < y.size(); ++i) y[i] += cs[k] * t[i];
  }
  std::vector<int> ids(xs.size());
  bool needs = false;
  Rec rec;
  for (size_t k = 0; k < xs.size(); ++k) {
    check_same_graph(xs[k]);
    ids[k] = xs[k].id;
    needs = needs || recs_[xs[k].id].needs_grad;
  }
  std::vector<real> coef(cs.begin(), cs.end());
  rec.val = std::move(y);
  rec.needs_grad = needs;
  rec.back = [ids, coef](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    for (size_t k = 0; k < ids.size(); ++k) {
      Tensor& gx = g.gslot(ids[k]);
      for (int i = 0; i < gy.size(); ++i) gx[i] += coef[k] * gy[i];
    }
  };
  return Node{this, push(std::move(rec))};
}

Node Graph::average(std::span<const Node> xs) {
  std::vector<real> cs(xs.size(), real(1) / xs.size());
  return weighted_sum(xs, cs);
}

Node Graph::concat(std::span<const Node> xs) {
  if (xs.empty()) fail(ErrorCode::Invalid, "concat of nothing");
  int total = 0;
  for (Node x : xs) total += value(x).size();
  Tensor y = Tensor::vec(total);
  int off = 0;
  std::vector<int> ids;
  std::vector<int> offs;
  bool needs = false;
  for (Node x : xs) {
    const Tensor& t = value(x);
    std::copy(t.data.begin(), t.data.end(), y.data.begin() + off);
    ids.push_back(x.id);
    offs.push_back(off);
    off += t.size();
    needs = needs || recs_[x.id].needs_grad;
  }
  Rec rec;
  rec.val = std::move(y);
  rec.needs_grad = needs;
  rec.back = [ids, offs](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    for (size_t k = 0; k < ids.size(); ++k) {
      Tensor& gx = g.gslot(ids[k]);
      for (int i = 0; i < gx.size(); ++i) gx[i] += gy[offs[k] + i];
    }
  };
  return Node{this, push(std::move(rec))};
}

Node Graph::slice(Node a, int offset, int len) {
  const Tensor& t = value(a);
  if (offset < 0 || len <= 0 || offset + len > t.size())
    fail(ErrorCode::Invalid, "slice out of range");
  Tensor y = Tensor::vec(len);
  std::copy(t.data.begin() + offset, t.data.begin() + offset + len, y.data.begin());
  int ai = a.id;
  return make(std::move(y), {a}, [ai, offset, len](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < len; ++i) ga[offset + i] += gy[i];
  });
}

Node Graph::tanh_(Node a) {
  Tensor y = value(a);
  for (auto& v : y.data) v = std::tanh(v);
  int ai = a.id;
  return make(std::move(y), {a}, [ai](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    const Tensor& y = g.val(self);
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < gy.size(); ++i) ga[i] += gy[i] * (1 - y[i] * y[i]);
  });
}

Node Graph::logistic(Node a) {
  Tensor y = value(a);
  for (auto& v : y.data) v = real(1) / (real(1) + std::exp(-v));
  int ai = a.id;
  return make(std::move(y), {a}, [ai](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    const Tensor& y = g.val(self);
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i] * (1 - y[i]);
  });
}

Node Graph::cmul(Node a, Node b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.size() != tb.size()) fail(ErrorCode::Invalid, "cmul shape mismatch");
  Tensor y = ta;
  for (int i = 0; i < y.size(); ++i) y[i] *= tb[i];
  int ai = a.id, bi = b.id;
  return make(std::move(y), {a, b}, [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    const Tensor& va = g.val(ai);
    const Tensor& vb = g.val(bi);
    Tensor& ga = g.gslot(ai);
    Tensor& gb = g.gslot(bi);
    for (int i = 0; i < gy.size(); ++i) {
      ga[i] += gy[i] * vb[i];
      gb[i] += gy[i] * va[i];
    }
  });
}

Node Graph::dot(Node a, Node b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.size() != tb.size()) fail(ErrorCode::Invalid, "dot shape mismatch");
  Tensor y(1, 1);
  real s = 0;
  for (int i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
  y[0] = s;
  int ai = a.id, bi = b.id;
  return make(std::move(y), {a, b}, [ai, bi](Graph& g, int self) {
    real gy = g.gslot(self)[0];
    const Tensor& va = g.val(ai);
    const Tensor& vb = g.val(bi);
    Tensor& ga = g.gslot(ai);
    Tensor& gb = g.gslot(bi);
    for (int i = 0; i < va.size(); ++i) {
      ga[i] += gy * vb[i];
      gb[i] += gy * va[i];
    }
  });
}

Node Graph::sum_elems(Node a) {
  const Tensor& t = value(a);
  Tensor y(1, 1);
  real s = 0;
  for (real v : t.data) s += v;
  y[0] = s;
  int ai = a.id;
  return make(std::move(y), {a}, [ai](Graph& g, int self) {
    real gy = g.gslot(self)[0];
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < ga.size(); ++i) ga[i] += gy;
  });
}

Node Graph::stack_scalars(std::span<const Node> xs) {
  Tensor y = Tensor::vec(static_cast<int>(xs.size()));
  std::vector<int> ids;
  bool needs = false;
  for (size_t k = 0; k < xs.size(); ++k) {
    const Tensor& t = value(xs[k]);
    if (t.size() != 1) fail(ErrorCode::Invalid, "stack_scalars expects scalars");
    y[static_cast<int>(k)] = t[0];
    ids.push_back(xs[k].id);
    needs = needs || recs_[xs[k].id].needs_grad;
  }
  Rec rec;
  rec.val = std::move(y);
  rec.needs_grad = needs;
  rec.back = [ids](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    for (size_t k = 0; k < ids.size(); ++k) g.gslot(ids[k])[0] += gy[static_cast<int>(k)];
  };
  return Node{this, push(std::move(rec))};
}

Node Graph::softmax(Node a) {
  const Tensor& t = value(a);
  Tensor y = Tensor::vec(t.size());
  real mx = t[0];
  for (int i = 1; i < t.size(); ++i) mx = std::max(mx, t[i]);
  real z = 0;
  for (int i = 0; i < t.size(); ++i) {
    y[i] = std::exp(t[i] - mx);
    z += y[i];
  }
  for (int i = 0; i < t.size(); ++i) y[i] /= z;
  int ai = a.id;
  return make(std::move(y), {a}, [ai](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    const Tensor& p = g.val(self);
    Tensor& ga = g.gslot(ai);
    real dp = 0;
    for (int i = 0; i < p.size(); ++i) dp += gy[i] * p[i];
    for (int i = 0; i < p.size(); ++i) ga[i] += p[i] * (gy[i] - dp);
  });
}

namespace {

// Shared by graph ops and value-only helpers: identical accumulation order.
real masked_logsumexp(const Tensor& logits, std::span<const int> legal) {
  real mx = -std::numeric_limits<real>::infinity();
  for (int i : legal) mx = std::max(mx, logits[i]);
  real z = 0;
  for (int i : legal) z += std::exp(logits[i] - mx);
  return mx + std::log(z);
}

real full_logsumexp(const Tensor& logits) {
  real mx = logits[0];
  for (int i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  real z = 0;
  for (int i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
  return mx + std::log(z);
}

}  // namespace

std::vector<real> log_softmax_values(const Tensor& logits) {
  real lse = full_logsumexp(logits);
  std::vector<real> out(logits.size());
  for (int i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<real> masked_log_softmax_values(const Tensor& logits, std::span<const int> legal) {
  if (legal.empty()) fail(ErrorCode::Invalid, "masked log-softmax with empty support");
  real lse = masked_logsumexp(logits, legal);
  std::vector<real> out(logits.size(), -std::numeric_limits<real>::infinity());
  for (int i : legal) out[i] = logits[i] - lse;
  return out;
}

Node Graph::log_softmax_pick(Node logits, int index) {
  const Tensor& t = value(logits);
  if (index < 0 || index >= t.size()) fail(ErrorCode::Invalid, "log_softmax_pick index out of range");
  real lse = full_logsumexp(t);
  Tensor y(1, 1);
  y[0] = t[index] - lse;
  int ai = logits.id;
  return make(std::move(y), {logits}, [ai, index, lse](Graph& g, int self) {
    real gy = g.gslot(self)[0];
    const Tensor& t = g.val(ai);
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < t.size(); ++i) {
      real p = std::exp(t[i] - lse);
      ga[i] += gy * ((i == index ? 1 : 0) - p);
    }
  });
}

Node Graph::masked_log_softmax_pick(Node logits, std::span<const int> legal, int index) {
  const Tensor& t = value(logits);
  bool found = false;
  for (int i : legal) found = found || (i == index);
  if (!found) fail(ErrorCode::Invalid, "masked_log_softmax_pick: index not in support");
  real lse = masked_logsumexp(t, legal);
  Tensor y(1, 1);
  y[0] = t[index] - lse;
  std::vector<int> mask(legal.begin(), legal.end());
  int ai = logits.id;
  return make(std::move(y), {logits}, [ai, index, lse, mask](Graph& g, int self) {
    real gy = g.gslot(self)[0];
    const Tensor& t = g.val(ai);
    Tensor& ga = g.gslot(ai);
    for (int i : mask) {
      real p = std::exp(t[i] - lse);
      ga[i] += gy * ((i == index ? 1 : 0) - p);
    }
  });
}

Node Graph::convex_combine(Node weights, std::span<const Node> keys) {
  const Tensor& w = value(weights);
  if (static_cast<size_t>(w.size()) != keys.size() || keys.empty())
    fail(ErrorCode::Invalid, "convex_combine arity mismatch");
  Tensor y = Tensor::vec(value(keys[0]).size());
  std::vector<int> ids;
  bool needs = recs_[weights.id].needs_grad;
  for (size_t k = 0; k < keys.size(); ++k) {
    const Tensor& t = value(keys[k]);
    if (t.size() != y.size()) fail(ErrorCode::Invalid, "convex_combine shape mismatch");
    for (int i = 0; i < y.size(); ++i) y[i] += w[static_cast<int>(k)] * t[i];
    ids.push_back(keys[k].id);
    needs = needs || recs_[keys[k].id].needs_grad;
  }
  Rec rec;
  rec.val = std::move(y);
  rec.needs_grad = needs;
  int wi = weights.id;
  rec.back = [wi, ids](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    const Tensor& w = g.val(wi);
    Tensor& gw = g.gslot(wi);
    for (size_t k = 0; k < ids.size(); ++k) {
      const Tensor& key = g.val(ids[k]);
      Tensor& gk = g.gslot(ids[k]);
      real dk = 0;
      for (int i = 0; i < gy.size(); ++i) {
        dk += gy[i] * key[i];
        gk[i] += w[static_cast<int>(k)] * gy[i];
      }
      gw[static_cast<int>(k)] += dk;
    }
  };
  return Node{this, push(std::move(rec))};
}

Node Graph::dropout(Node a, real rate) {
  if (rate == 0 || !train_) return a;
  if (rate < 0 || rate >= 1) fail(ErrorCode::Invalid, "dropout rate out of range");
  if (!dropout_rng_) fail(ErrorCode::Invalid, "training graph has no dropout rng");
  const Tensor& t = value(a);
  real keep = 1 - rate;
  std::vector<real> mask(t.size());
  Tensor y = Tensor::vec(t.size());
  for (int i = 0; i < t.size(); ++i) {
    mask[i] = dropout_rng_->bernoulli(keep) ? real(1) / keep : real(0);
    y[i] = t[i] * mask[i];
  }
  int ai = a.id;
  return make(std::move(y), {a}, [ai, mask](Graph& g, int self) {
    const Tensor& gy = g.gslot(self);
    Tensor& ga = g.gslot(ai);
    for (int i = 0; i < gy.size(); ++i) ga[i] += gy[i] * mask[i];
  });
}

void Graph::backward(Node loss) {
  check_same_graph(loss);
  if (val(loss.id).size() != 1) fail(ErrorCode::Invalid, "backward on non-scalar loss");
  grads_.clear();
  grads_.resize(recs_.size());
  // every node gets a slot: backward closures of live nodes may scatter into
  // constant parents
  for (size_t i = 0; i < recs_.size(); ++i) {
    const Tensor& v = val(static_cast<int>(i));
    grads_[i] = Tensor(v.rows, v.cols);
  }
  if (!recs_[loss.id].needs_grad) return;  // nothing trainable below the loss
  grads_[loss.id][0] = 1;
  for (int i = loss.id; i >= 0; --i) {
    Rec& rec = recs_[i];
    if (!rec.needs_grad) continue;
    if (rec.back) rec.back(*this, i);
    if (rec.sink && !rec.sink->frozen) {
      const Tensor& g = grads_[i];
      if (rec.sink_row >= 0) {
        real* dst = &rec.sink->grad.data[static_cast<size_t>(rec.sink_row) * rec.sink->cols()];
        for (int c = 0; c < rec.sink->cols(); ++c) dst[c] += g[c];
      } else {
        for (int k = 0; k < g.size(); ++k) rec.sink->grad.data[k] += g[k];
      }
    }
  }
}

}  // namespace treelm
