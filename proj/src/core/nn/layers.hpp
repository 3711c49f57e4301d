#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nn/tape.hpp"
#include "rng.hpp"

namespace unlasting::nn {

// Standalone value-level layers.

struct DenseLayer {
  Matrix weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;
};

Eigen::VectorXd dense_forward(const DenseLayer& layer, const Eigen::VectorXd& x);

struct GatHead {
  Matrix weight;         // D_out x D_in, neighbour projection
  Matrix query;          // D_out x D_in, receiving-node projection
  Eigen::VectorXd attn;  // D_out
  double leaky_slope = kLeakySlope;
};

Matrix gat_layer_forward(const grn::Grn& graph, const Matrix& features, std::span<const GatHead> heads,
                         std::vector<Attention>* attention = nullptr);

// Parameter-backed layers: indices into a ParameterSet.

struct DenseRef {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Activation activation = Activation::identity;
};

struct MlpRef {
  std::vector<DenseRef> layers;  // hidden layers use silu, last layer identity
};

struct GatHeadRef {
  std::size_t weight = 0;
  std::size_t query = 0;
  std::size_t attn = 0;
};

Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);
Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng);

DenseRef add_dense(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, Activation act,
                   Rng& rng);
// depth >= 1 dense layers: in -> hidden -> ... -> out.
MlpRef add_mlp(ParameterSet& ps, const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out,
               std::size_t depth, Rng& rng, Activation output = Activation::identity);
GatHeadRef add_gat_head(ParameterSet& ps, const std::string& name, Eigen::Index d_in, Eigen::Index d_out, Rng& rng);

Var apply(Tape& tape, const DenseRef& layer, Var x);
Var apply(Tape& tape, const MlpRef& mlp, Var x);
// First layer sees [x_i ; ctx] for every row i.
Var apply_ctx(Tape& tape, const MlpRef& mlp, Var x, Var ctx);
Var apply_gat(Tape& tape, std::span<const GatHeadRef> heads, Var features, const grn::Grn& graph);

}  // namespace unlasting::nn
