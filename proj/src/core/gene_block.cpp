#include "gene_block.hpp"

#include <cmath>

namespace unlasting::model {

void ArchConfig::validate() const {
  require(n_genes >= 2, ErrorCode::argument, "model needs at least 2 genes");
  require(n_cell_types >= 1, ErrorCode::argument, "model needs at least one cell type");
  require(diffusion_steps >= 1, ErrorCode::argument, "diffusion steps must be >= 1");
  require(gene_dim >= 1 && block_dim >= 1 && hidden >= 1 && time_dim >= 2 && time_dim % 2 == 0 && cell_dim >= 1,
          ErrorCode::argument, "model widths must be positive (time_dim even)");
  require(mlp_depth >= 1 && heads >= 1 && gat_layers >= 1, ErrorCode::argument,
          "mlp depth, heads and GAT layers must be >= 1");
}

namespace {

constexpr const char* kArchKeys[] = {"n_genes", "mol_dim",  "n_cell_types", "diffusion_steps",
                                     "gene_dim", "block_dim", "hidden",      "mlp_depth",
                                     "time_dim", "cell_dim",  "heads",       "gat_layers"};

std::size_t* arch_field(ArchConfig& a, std::size_t k) {
  std::size_t* fields[] = {&a.n_genes,  &a.mol_dim,  &a.n_cell_types, &a.diffusion_steps,
                           &a.gene_dim, &a.block_dim, &a.hidden,      &a.mlp_depth,
                           &a.time_dim, &a.cell_dim,  &a.heads,       &a.gat_layers};
  return fields[k];
}

// n copies of `row`, each perturbed by N(0, (jitter |row|_rms)^2) noise.
Matrix shared_rows(Eigen::Index n, const Matrix& row, double jitter, Rng& rng) {
  const double rms = std::sqrt(row.squaredNorm() / static_cast<double>(row.size()));
  return row.replicate(n, 1) + nn::normal_matrix(n, row.cols(), jitter * rms, rng);
}

}  // namespace

void ArchConfig::store(nn::Checkpoint& ck) const {
  ArchConfig copy = *this;
  for (std::size_t k = 0; k < std::size(kArchKeys); ++k) {
    ck.add_scalar(std::string("arch.") + kArchKeys[k], static_cast<double>(*arch_field(copy, k)));
  }
}

ArchConfig ArchConfig::restore(const nn::Checkpoint& ck) {
  ArchConfig a;
  for (std::size_t k = 0; k < std::size(kArchKeys); ++k) {
    const double v = ck.scalar(std::string("arch.") + kArchKeys[k]);
    require(v >= 0.0 && v == std::floor(v) && v < 1e9, ErrorCode::format,
            std::string("bad architecture value for ") + kArchKeys[k]);
    *arch_field(a, k) = static_cast<std::size_t>(v);
  }
  a.validate();
  return a;
}

GeneBlock add_gene_block(nn::ParameterSet& ps, const std::string& prefix, const ArchConfig& arch,
                         std::size_t context_dim, bool uses_xt, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(arch.n_genes);
  const auto d = static_cast<Eigen::Index>(arch.gene_dim);
  const auto h = static_cast<Eigen::Index>(arch.hidden);
  GeneBlock b;
  b.gene_emb = ps.add(prefix + ".gene_emb", shared_rows(n, nn::normal_matrix(1, d, 1.0, rng), 0.1, rng));
  b.phi = nn::add_mlp(ps, prefix + ".phi", d + static_cast<Eigen::Index>(context_dim), h, d, arch.mlp_depth, rng);
  if (uses_xt) b.psi_xt = nn::add_mlp(ps, prefix + ".psi_xt", 1, h, d, arch.mlp_depth, rng);
  b.psi_ctrl = nn::add_mlp(ps, prefix + ".psi_ctrl", 1, h, d, arch.mlp_depth, rng);
  if (arch.mol_dim > 0) {
    b.psi_mole = nn::add_mlp(ps, prefix + ".psi_mole", static_cast<Eigen::Index>(arch.mol_dim) + 1, h, d,
                             arch.mlp_depth, rng);
    b.phi_f = nn::add_mlp(ps, prefix + ".phi_f", 2 * d, h, d, arch.mlp_depth, rng);
  }
  for (std::size_t l = 0; l < arch.gat_layers; ++l) {
    std::vector<nn::GatHeadRef> layer;
    for (std::size_t k = 0; k < arch.heads; ++k) {
      layer.push_back(
          nn::add_gat_head(ps, prefix + ".gat" + std::to_string(l) + "." + std::to_string(k), d, d, rng));
    }
    b.gat.push_back(std::move(layer));
  }
  b.readout_w = ps.add(prefix + ".readout_w", shared_rows(n, nn::glorot_uniform(1, d, rng), 0.1, rng));
  b.readout_b = ps.add(prefix + ".readout_b", Matrix::Zero(n, 1));
  return b;
}

nn::Var row_constant(nn::Tape& tape, const Vector& v) { return tape.constant(v.transpose()); }
nn::Var col_constant(nn::Tape& tape, const Vector& v) { return tape.constant(v); }

nn::Var cell_embedding(nn::Tape& tape, std::size_t table, const ArchConfig& arch, int cell_type) {
  require(cell_type >= 0 && static_cast<std::size_t>(cell_type) < arch.n_cell_types, ErrorCode::argument,
          "cell type " + std::to_string(cell_type) + " unknown to the model");
  return tape.row(tape.parameter(table), cell_type);
}

nn::Var condition_embed(nn::Tape& tape, const GeneBlock& block, const ArchConfig& arch, const Conditioning& cond,
                        nn::Var context, const Vector* x_t, const EmbedOptions& opts) {
  const auto n = static_cast<Eigen::Index>(arch.n_genes);
  data::validate_condition(cond.perturbation, arch.n_genes, arch.mol_dim);

  nn::Var genes = tape.parameter(block.gene_emb);
  if (const auto* ko = std::get_if<data::GeneKnockout>(&cond.perturbation)) {
    Vector keep = Vector::Ones(n);
    for (auto k : ko->targets) keep[static_cast<Eigen::Index>(k)] = 0.0;
    genes = tape.scale_rows(genes, keep);
  }
  nn::Var phi_out = nn::apply_ctx(tape, block.phi, genes, context);

  nn::Var g = phi_out;
  const bool molecule = data::is_molecule(cond.perturbation);
  if (molecule) {
    require(arch.mol_dim > 0 && !block.psi_mole.layers.empty(), ErrorCode::argument,
            "model was built without molecule support");
    const auto& mol = std::get<data::Molecule>(cond.perturbation);
    Vector feature(static_cast<Eigen::Index>(arch.mol_dim) + 1);
    feature << mol.embedding, std::log1p(mol.dose);
    nn::Var fsd = nn::apply(tape, block.psi_mole, row_constant(tape, feature));
    g = nn::apply_ctx(tape, block.phi_f, phi_out, fsd);
  }
  if (opts.use_ctrl && (molecule || opts.ctrl_all_branches)) {
    require(cond.ctrl_signal.has_value(), ErrorCode::argument, "control signal required for this condition");
    require(cond.ctrl_signal->size() == n, ErrorCode::argument, "control signal length mismatch");
    g = tape.add(g, nn::apply(tape, block.psi_ctrl, col_constant(tape, *cond.ctrl_signal)));
  }
  if (x_t != nullptr) {
    require(!block.psi_xt.layers.empty(), ErrorCode::argument, "block has no x_t encoder");
    require(x_t->size() == n, ErrorCode::argument, "x_t length mismatch");
    g = tape.add(g, nn::apply(tape, block.psi_xt, col_constant(tape, *x_t)));
  }
  return g;
}

nn::Var grn_readout(nn::Tape& tape, const GeneBlock& block, nn::Var embedded, const grn::Grn& graph,
                    bool residual) {
  nn::Var f = embedded;
  for (const auto& layer : block.gat) {
    nn::Var mixed = nn::apply_gat(tape, layer, f, graph);
    f = residual ? tape.add(f, mixed) : mixed;
  }
  nn::Var dot = tape.rowwise_dot(f, tape.parameter(block.readout_w));
  return tape.add(dot, tape.parameter(block.readout_b));
}

void store_grn(nn::Checkpoint& ck, const grn::Grn& graph) {
  ck.add_matrix("grn.adjacency", graph.adjacency().cast<double>());
}

grn::Grn restore_grn(const nn::Checkpoint& ck) {
  return grn::Grn(grn::adjacency_from_real(ck.matrix("grn.adjacency")));
}

}  // namespace unlasting::model
