#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "grn.hpp"

namespace unlasting::nn {

using Matrix = Eigen::MatrixXd;

enum class Activation { identity, relu, leaky_relu, silu, sigmoid };

inline constexpr double kLeakySlope = 0.2;

const char* to_string(Activation act);
Activation activation_from_string(const std::string& s);

// While alive, collects which side of every nonsmooth point (relu and leaky kinks, probability
// clamps) the forward computations on this thread land on. Probes nest; the innermost records.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  std::uint64_t signature() const { return signature_; }
  void note(unsigned side) { signature_ = (signature_ ^ (side + 1)) * 0x100000001b3ULL; }

  static KinkProbe* active();

 private:
  KinkProbe* outer_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

// Elementwise activation and its derivative given the pre-activation value.
double activate(Activation act, double x);
double activate_grad(Activation act, double x);

// Named, ordered collection of learnable tensors.
class ParameterSet {
 public:
  std::size_t add(const std::string& name, Matrix init);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  const Matrix& value(std::size_t id) const { return values_.at(id); }
  Matrix& value(std::size_t id) { return values_.at(id); }
  std::size_t find(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t scalar_count() const;
  // Flat view over every scalar, parameters in insertion order, column-major within each.
  double& scalar(std::size_t flat_index);
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

// One gradient buffer per parameter, shaped like the parameter.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Matrix& operator[](std::size_t id) { return g_.at(id); }
  const Matrix& operator[](std::size_t id) const { return g_.at(id); }
  std::size_t size() const { return g_.size(); }

  void set_zero();
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double c);
  bool all_finite() const;
  double scalar(std::size_t flat_index) const;

 private:
  std::vector<Matrix> g_;
};

struct Var {
  std::size_t index = 0;
};

struct GatHeadVars {
  Var weight;  // D_out x D_in, neighbour (message) projection
  Var query;   // D_out x D_in, receiving-node projection
  Var attn;    // D_out x 1
};

// Per-head attention weights, aligned with Grn::neighbors(i).
using Attention = std::vector<std::vector<double>>;

// Multi-head graph attention, mean over heads, no output nonlinearity. Scores are
// e_ij = attn . leaky_relu(query h_i + weight h_j), softmax over the neighbourhood of i,
// and node i receives sum_j alpha_ij weight h_j. Fills `attention` (one entry per head) when non-null.
Matrix gat_forward(const Matrix& features, const grn::Grn& graph, std::span<const Matrix> weights,
                   std::span<const Matrix> queries, std::span<const Matrix> attns, double slope,
                   std::vector<Attention>* attention = nullptr);

// Records a forward computation and replays it backwards. A tape holds one sample's graph.
class Tape {
 public:
  explicit Tape(const ParameterSet& params);

  Var parameter(std::size_t id);
  Var constant(Matrix value);

  const Matrix& value(Var v) const;

  // x W^T + b^T, x: r x in, W: out x in, b: out x 1.
  Var linear(Var x, Var weight, Var bias);
  // Each row i of the result is W [x_i ; ctx] + b with a single context row shared by all rows.
  Var linear_ctx(Var x, Var ctx, Var weight, Var bias);
  Var activate(Var x, Activation act);
  Var add(Var a, Var b);
  Var add_row(Var x, Var row);                       // broadcast a 1 x c row over x
  Var scale_rows(Var x, const Eigen::VectorXd& w);   // row i multiplied by constant w[i]
  Var concat_cols(std::initializer_list<Var> parts);
  Var transpose(Var x);
  Var row(Var x, Eigen::Index r);
  Var rowwise_dot(Var a, Var b);                     // r x 1, sum over columns of a .* b
  Var gat(Var features, const grn::Grn& graph, std::span<const GatHeadVars> heads, double slope = kLeakySlope);
  Var scale(Var x, double c);
  Var sum(Var x);
  // sum(mask .* (pred - target)^2) / sum(mask); mask must have a positive sum.
  Var masked_mse(Var pred, const Matrix& target, const Matrix& mask);
  // Mean binary cross entropy with probabilities clamped to [eps, 1 - eps].
  Var bce(Var prob, const Matrix& target, double eps = 1e-7);

  // Accumulates d(seed * loss)/d(param) into `grads`. `loss` must be 1 x 1.
  void backward(Var loss, Gradients& grads, double seed = 1.0);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  using Backward = std::function<void(Tape&, std::size_t)>;
  struct Node {
    Matrix own;
    const Matrix* ref = nullptr;
    long param = -1;
    const char* op = "";
    Backward back;
  };

  Var push(const char* op, Matrix value, Backward back);
  Matrix& grad(std::size_t index);
  Matrix& grad(Var v) { return grad(v.index); }
  bool has_grad(std::size_t index) const { return index < grads_.size() && grads_[index].size() > 0; }

  const ParameterSet* params_;
  std::vector<Node> nodes_;
  std::vector<long> param_leaf_;
  std::vector<Matrix> grads_;
};

}  // namespace unlasting::nn
