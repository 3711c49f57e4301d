#include "nn/layers.hpp"

#include <cmath>

namespace unlasting::nn {

Eigen::VectorXd dense_forward(const DenseLayer& layer, const Eigen::VectorXd& x) {
  require(layer.weight.cols() == x.size(), ErrorCode::argument, "dense_forward: input length does not match weight");
  require(layer.bias.size() == layer.weight.rows(), ErrorCode::argument, "dense_forward: bias length mismatch");
  Eigen::VectorXd z = layer.weight * x + layer.bias;
  return z.unaryExpr([&](double v) { return activate(layer.activation, v); });
}

Matrix gat_layer_forward(const grn::Grn& graph, const Matrix& features, std::span<const GatHead> heads,
                         std::vector<Attention>* attention) {
  require(!heads.empty(), ErrorCode::argument, "gat_layer_forward: need >= 1 head");
  std::vector<Matrix> weights;
  std::vector<Matrix> queries;
  std::vector<Matrix> attns;
  const double slope = heads.front().leaky_slope;
  for (const auto& h : heads) {
    require(h.leaky_slope == slope, ErrorCode::argument, "gat_layer_forward: heads disagree on slope");
    weights.push_back(h.weight);
    queries.push_back(h.query);
    attns.emplace_back(h.attn);
  }
  return gat_forward(features, graph, weights, queries, attns, slope, attention);
}

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

DenseRef add_dense(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
                   Rng& rng) {
  require(in > 0 && out > 0, ErrorCode::argument, "add_dense: dimensions must be positive");
  DenseRef d;
  d.weight = ps.add(name + ".w", glorot_uniform(out, in, rng));
  d.bias = ps.add(name + ".b", Matrix::Zero(out, 1));
  d.activation = act;
  return d;
}

MlpRef add_mlp(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
               std::size_t depth, Rng& rng, Activation output) {
  require(depth >= 1, ErrorCode::argument, "add_mlp: depth must be >= 1");
  MlpRef mlp;
  Eigen::Index width = in;
  for (std::size_t k = 0; k < depth; ++k) {
    const bool last = k + 1 == depth;
    const Eigen::Index next = last ? out : hidden;
    mlp.layers.push_back(
        add_dense(ps, name + "." + std::to_string(k), width, next, last ? output : Activation::silu, rng));
    width = next;
  }
  return mlp;
}

GatHeadRef add_gat_head(ParameterSet& ps, const std::string& name, Eigen::Index d_in, Eigen::Index d_out, Rng& rng) {
  GatHeadRef h;
  h.weight = ps.add(name + ".w", glorot_uniform(d_out, d_in, rng));
  h.query = ps.add(name + ".q", glorot_uniform(d_out, d_in, rng));
  h.attn = ps.add(name + ".a", glorot_uniform(d_out, 1, rng));
  return h;
}

Var apply(Tape& tape, const DenseRef& layer, Var x) {
  Var z = tape.linear(x, tape.parameter(layer.weight), tape.parameter(layer.bias));
  return tape.activate(z, layer.activation);
}

Var apply(Tape& tape, const MlpRef& mlp, Var x) {
  for (const auto& layer : mlp.layers) x = apply(tape, layer, x);
  return x;
}

Var apply_ctx(Tape& tape, const MlpRef& mlp, Var x, Var ctx) {
  require(!mlp.layers.empty(), ErrorCode::argument, "apply_ctx: empty MLP");
  const auto& first = mlp.layers.front();
  Var h = tape.linear_ctx(x, ctx, tape.parameter(first.weight), tape.parameter(first.bias));
  h = tape.activate(h, first.activation);
  for (std::size_t k = 1; k < mlp.layers.size(); ++k) h = apply(tape, mlp.layers[k], h);
  return h;
}

Var apply_gat(Tape& tape, std::span<const GatHeadRef> heads, Var features, const grn::Grn& graph) {
  std::vector<GatHeadVars> vars;
  vars.reserve(heads.size());
  for (const auto& h : heads)
    vars.push_back({tape.parameter(h.weight), tape.parameter(h.query), tape.parameter(h.attn)});
  return tape.gat(features, graph, vars);
}

}  // namespace unlasting::nn
