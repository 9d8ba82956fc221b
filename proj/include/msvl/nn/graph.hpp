#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "msvl/error.hpp"
#include "msvl/nn/tensor.hpp"

namespace msvl::nn {

class Graph;

/// Handle to a node of a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// which is a topological order, and the backward pass walks it in reverse.
/// A graph belongs to one thread at a time.
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push("constant", std::move(value), {}, nullptr, false); }

  Var parameter(Tensor value) { return push("parameter", std::move(value), {}, nullptr, true); }

  /// Records an operation. `backward` reads grad(self) and accumulates into
  /// its inputs through accumulate(). It is dropped when no input needs a gradient.
  Var record(const char* tag, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(tag, std::move(value), std::vector<Var>(inputs), std::move(backward));
  }

  Var record(const char* tag, Tensor value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (&v.graph() != this) throw InvalidInput(std::string(tag) + ": input belongs to another graph");
      ids.push_back(v.id());
      needs = needs || nodes_[v.id()].requires_grad;
    }
    Var out = push(tag, std::move(value), std::move(ids), needs ? std::move(backward) : nullptr, needs);
    return out;
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  /// Gradient of the last backward() output with respect to node `id`
  /// (zeros when the node did not take part).
  const Tensor& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  /// Mutable gradient slot for an input, allocated on first use.
  Tensor& accumulate(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const char* tag(std::size_t id) const { return nodes_[id].tag; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var output) {
    if (output.value().size() != 1)
      throw InvalidInput("backward needs a scalar output, got shape " + shape_str(output.shape()));
    for (Node& n : nodes_) n.grad = Tensor();
    accumulate(output.id())[0] = 1.0;
    for (std::size_t id = output.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, id);
    }
  }

  /// Folds the sign pattern of a rectifier's input into the kink signature.
  /// Two evaluations with equal signatures took the same linear branch at
  /// every rectifier.
  void note_kinks(std::span<const double> pre_activation) {
    for (double v : pre_activation) {
      kink_hash_ ^= (v > 0.0) ? 0x9e3779b97f4a7c15ULL : 0x2545f4914f6cdd1dULL;
      kink_hash_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t kink_signature() const { return kink_hash_; }

 private:
  struct Node {
    const char* tag = "";
    Tensor value;
    mutable Tensor grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(const char* tag, Tensor value, std::vector<std::size_t> inputs, Backward backward, bool requires_grad) {
    const std::size_t id = nodes_.size();
    if (!value.all_finite())
      throw NumericFault("non-finite value produced by node #" + std::to_string(id) + " (" + tag + ")");
    nodes_.push_back(Node{tag, std::move(value), Tensor(), std::move(inputs), std::move(backward), requires_grad});
    return Var(this, id);
  }

  std::deque<Node> nodes_;
  std::uint64_t kink_hash_ = 0xcbf29ce484222325ULL;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline const Tensor& Var::grad() const { return graph_->grad(id_); }

struct ValueAndGrads {
  double value = 0.0;
  std::vector<Tensor> grads;
};

/// Runs the backward pass from a scalar `output` and collects the gradient
/// of every listed parameter.
inline ValueAndGrads eval_with_grads(Var output, std::span<const Var> params) {
  if (output.value().size() != 1)
    throw InvalidInput("eval_with_grads: output must be scalar, got shape " + shape_str(output.shape()));
  Graph& g = output.graph();
  g.backward(output);
  ValueAndGrads out;
  out.value = output.value()[0];
  out.grads.reserve(params.size());
  for (const Var& p : params) out.grads.push_back(g.grad(p.id()));
  return out;
}

}  // namespace msvl::nn
