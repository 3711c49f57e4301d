#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "grn.hpp"
#include "nn/checkpoint.hpp"
#include "nn/layers.hpp"

namespace unlasting::model {

using Vector = Eigen::VectorXd;
using nn::Matrix;

struct ArchConfig {
  std::size_t n_genes = 0;
  std::size_t mol_dim = 0;
  std::size_t n_cell_types = 1;
  std::size_t diffusion_steps = 500;  // T, scales the time embedding
  std::size_t gene_dim = 64;          // D
  std::size_t block_dim = 128;        // D_B
  std::size_t hidden = 128;
  std::size_t mlp_depth = 2;
  std::size_t time_dim = 64;
  std::size_t cell_dim = 32;
  std::size_t heads = 2;
  std::size_t gat_layers = 2;

  void validate() const;
  void store(nn::Checkpoint& ck) const;
  static ArchConfig restore(const nn::Checkpoint& ck);
};

// What the model is conditioned on for one cell. `ctrl_signal` is the control-derived
// input consumed by molecule branches (and by every branch of the mask model).
struct Conditioning {
  int cell_type = 0;
  data::PerturbationCondition perturbation = data::Control{};
  std::optional<Vector> ctrl_signal;
};

// Per-gene embeddings specialised to a condition, graph attention over the GRN, gene-wise readout.
struct GeneBlock {
  std::size_t gene_emb = 0;
  nn::MlpRef phi;       // [gene emb ; context] -> D
  nn::MlpRef psi_xt;    // scalar -> D, empty when the block ignores x_t
  nn::MlpRef psi_ctrl;  // scalar -> D
  nn::MlpRef psi_mole;  // [embedding ; ln(1 + dose)] -> D
  nn::MlpRef phi_f;     // [phi out ; molecule feature] -> D
  std::vector<std::vector<nn::GatHeadRef>> gat;
  std::size_t readout_w = 0;
  std::size_t readout_b = 0;
};

GeneBlock add_gene_block(nn::ParameterSet& ps, const std::string& prefix, const ArchConfig& arch,
                         std::size_t context_dim, bool uses_xt, Rng& rng);

struct EmbedOptions {
  bool use_ctrl = true;  // add the control-signal term where the branch has one
  bool ctrl_all_branches = false;
};

// Condition-specific gene embedding matrix (N x D).
nn::Var condition_embed(nn::Tape& tape, const GeneBlock& block, const ArchConfig& arch, const Conditioning& cond,
                        nn::Var context, const Vector* x_t, const EmbedOptions& opts);

// GAT stack then readout: N x 1. With `residual`, each layer adds its input back (F <- F + GAT(F)).
nn::Var grn_readout(nn::Tape& tape, const GeneBlock& block, nn::Var embedded, const grn::Grn& graph,
                    bool residual = false);

nn::Var cell_embedding(nn::Tape& tape, std::size_t table, const ArchConfig& arch, int cell_type);

// 1 x n constant holding the entries of v.
nn::Var row_constant(nn::Tape& tape, const Vector& v);
nn::Var col_constant(nn::Tape& tape, const Vector& v);

void store_grn(nn::Checkpoint& ck, const grn::Grn& graph);
grn::Grn restore_grn(const nn::Checkpoint& ck);

}  // namespace unlasting::model
