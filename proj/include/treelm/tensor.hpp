#ifndef TREELM_TENSOR_HPP
#define TREELM_TENSOR_HPP

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treelm/common.hpp"
#include "treelm/rng.hpp"

namespace treelm {

// Dense row-major matrix; vectors are column vectors (cols == 1).
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<real> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0) {}
  static Tensor vec(int n) { return Tensor(n, 1); }

  int size() const { return rows * cols; }
  real& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  real operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  real& operator[](int i) { return data[i]; }
  real operator[](int i) const { return data[i]; }
  void zero() { std::fill(data.begin(), data.end(), real(0)); }
};

enum class ParamInit { Zeros, UniformEmbed, Xavier, LstmBias };

// A learned (or frozen) parameter tensor with a gradient slot.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  int rows() const { return value.rows; }
  int cols() const { return value.cols; }
};

class ParamStore {
 public:
  Param* add(const std::string& name, int rows, int cols, ParamInit init, Rng& rng);
  Param* add_frozen(const std::string& name, Tensor value);
  Param* find(const std::string& name) const;

  void zero_grad();
  real grad_norm() const;
  void scale_grads(real factor);

  std::span<const std::unique_ptr<Param>> all() const { return params_; }
  size_t size() const { return params_.size(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

class Graph;

// Handle into a Graph's tape.
struct Node {
  Graph* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr; }
};

// Reverse-mode tape. Values are computed eagerly at node creation; backward()
// walks the tape in reverse creation order (parents always precede children).
class Graph {
 public:
  explicit Graph(bool train = false, Rng* dropout_rng = nullptr)
      : train_(train), dropout_rng_(dropout_rng) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return train_; }

  // ---- inputs ----
  Node constant(Tensor t);
  Node scalar(real v);
  Node zeros(int n);
  Node param(Param& p);               // leaf over the whole tensor
  Node lookup(Param& table, int row); // leaf over one row, sparse gradient

  // ---- ops ----
  Node affine(Node W, Node x, Node b);  // W x + b
  Node matvec(Node W, Node x);
  Node add(Node a, Node b);
  Node sub(Node a, Node b);
  Node scale(Node a, real c);
  Node weighted_sum(std::span<const Node> xs, std::span<const real> cs);
  Node average(std::span<const Node> xs);
  Node concat(std::span<const Node> xs);
  Node slice(Node a, int offset, int len);
  Node tanh_(Node a);
  Node logistic(Node a);
  Node cmul(Node a, Node b);
  Node dot(Node a, Node b);
  Node sum_elems(Node a);
  Node stack_scalars(std::span<const Node> xs);
  Node softmax(Node a);
  Node log_softmax_pick(Node logits, int index);
  Node masked_log_softmax_pick(Node logits, std::span<const int> legal, int index);
  Node convex_combine(Node weights, std::span<const Node> keys);
  Node dropout(Node a, real rate);  // identity when rate == 0 or not training

  // ---- access ----
  const Tensor& value(Node n) const;
  real scalar_value(Node n) const;
  const Tensor& grad(Node n) const { return grads_[n.id]; }

  // Accumulates d(loss)/d(param) into Param::grad for every reachable
  // trainable parameter. Repeated calls accumulate additively.
  void backward(Node loss);

  size_t num_nodes() const { return recs_.size(); }

 private:
  struct Rec {
    Tensor val;                     // owned value (unused when ext != nullptr)
    const Tensor* ext = nullptr;    // external value (param leaves)
    Param* sink = nullptr;          // gradient sink for leaves
    int sink_row = -1;              // >= 0 for row lookups
    std::function<void(Graph&, int)> back;  // adds into parents' grads
    bool needs_grad = false;
  };

  const Tensor& val(int id) const { return recs_[id].ext ? *recs_[id].ext : recs_[id].val; }
  Tensor& gslot(int id) { return grads_[id]; }
  int push(Rec rec) {
    recs_.push_back(std::move(rec));
    return static_cast<int>(recs_.size()) - 1;
  }
  Node make(Tensor val, std::initializer_list<Node> parents,
            std::function<void(Graph&, int)> back);
  void check_same_graph(Node n) const;

  std::vector<Rec> recs_;
  std::vector<Tensor> grads_;
  bool train_;
  Rng* dropout_rng_;
};

// Value-only softmax helpers. These share their accumulation order with the
// corresponding graph ops so that sampling and re-scoring agree bit for bit.
std::vector<real> log_softmax_values(const Tensor& logits);
std::vector<real> masked_log_softmax_values(const Tensor& logits, std::span<const int> legal);

}  // namespace treelm

#endif  // TREELM_TENSOR_HPP
