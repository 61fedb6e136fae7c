#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hwrisk/tensor.hpp"

namespace hwrisk::nn {

struct Parameter {
  std::string name;
  Tensor2D value;
  Tensor2D grad;
};

// Owns a network's trainable tensors in declaration order. Layers refer to
// them by index, so copying a ParameterSet copies the network.
class ParameterSet {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  void assign_values(std::span<const double> flat);
  // Architecture fingerprint: names and shapes in declaration order.
  std::string layout() const;

 private:
  std::deque<Parameter> params_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  const Tensor2D& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
  bool valid() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Eager reverse-mode tape. Every op evaluates immediately and appends a node
// whose backward closure scatters the node gradient into its inputs.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor2D value);
  Var param(ParameterSet& set, std::size_t index);

  // Accumulates d(loss)/d(param) into every bound Parameter::grad.
  void backward(Var loss);

  // Hash of the branch decisions taken by non-smooth ops (relu masks, clip
  // and min/max selections). Finite-difference checks compare it across
  // perturbed evaluations to skip samples that straddle a kink.
  std::uint64_t branch_signature() const { return branch_hash_; }
  void note_branch(bool taken);

  std::size_t size() const { return nodes_.size(); }

  // Internal node access for op implementations.
  struct Node {
    Tensor2D value;
    Tensor2D grad;
    bool requires_grad = false;
    std::function<void(Graph&, std::size_t)> backward;
    Parameter* bound = nullptr;
  };
  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  Tensor2D& grad_of(std::size_t id);
  Var emit(Tensor2D value, bool requires_grad,
           std::function<void(Graph&, std::size_t)> backward);

 private:
  std::deque<Node> nodes_;
  bool consumed_ = false;
  std::uint64_t branch_hash_ = 1469598103934665603ULL;
};

// Elementwise and matrix ops. Shapes are checked; violations throw
// ShapeMismatch.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);          // a (n x m) + row (1 x m) broadcast
Var mul_col(Var a, Var col);          // a (n x m) * col (n x 1) broadcast
Var broadcast_rows(Var row, std::size_t n);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var log_normal_cdf(Var a);            // log Phi(a)
Var clip(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var sum_cols(Var a);                  // row sums, n x 1
Var sum_all(Var a);                   // 1 x 1
Var mean_all(Var a);                  // 1 x 1
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var pick_cols(Var a, std::span<const int> index);  // a(i, index[i]) as n x 1

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

}  // namespace hwrisk::nn
