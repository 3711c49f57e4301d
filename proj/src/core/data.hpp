#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "rng.hpp"

namespace unlasting::data {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Control {
  bool operator==(const Control&) const = default;
};

struct GeneKnockout {
  std::vector<std::size_t> targets;  // 1 or 2 distinct gene indices
  bool operator==(const GeneKnockout&) const = default;
};

struct Molecule {
  std::string molecule_id;
  Vector embedding;
  double dose = 0.0;
  bool operator==(const Molecule& o) const {
    return molecule_id == o.molecule_id && dose == o.dose && embedding.size() == o.embedding.size() &&
           embedding == o.embedding;
  }
};

using PerturbationCondition = std::variant<Control, GeneKnockout, Molecule>;

inline bool is_control(const PerturbationCondition& p) { return std::holds_alternative<Control>(p); }
inline bool is_knockout(const PerturbationCondition& p) { return std::holds_alternative<GeneKnockout>(p); }
inline bool is_molecule(const PerturbationCondition& p) { return std::holds_alternative<Molecule>(p); }

// Checks knockout targets against `n_genes` and molecule embeddings against `mol_dim`
// (mol_dim == 0 skips the embedding length check).
void validate_condition(const PerturbationCondition& p, std::size_t n_genes, std::size_t mol_dim);

// condition_id -> PerturbationCondition, ordered by id.
using ConditionRegistry = std::map<std::string, PerturbationCondition>;

struct ExpressionDataset {
  Matrix values;  // cells x genes, nonnegative
  std::vector<std::string> gene_names;
  std::vector<int> cell_type;
  std::vector<std::string> condition_id;
  ConditionRegistry conditions;
  double scale_max = 1.0;

  std::size_t n_cells() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_genes() const { return static_cast<std::size_t>(values.cols()); }

  const PerturbationCondition& condition_of(std::size_t cell) const;
  bool is_control_cell(std::size_t cell) const { return is_control(condition_of(cell)); }

  // Embedding length shared by every molecule condition (0 when none).
  std::size_t molecule_dim() const;
  std::vector<int> cell_types() const;  // sorted unique

  // Throws invalid_data when any type invariant is broken.
  void validate() const;

  // Copy of the rows in `cells`, sharing genes and registry.
  ExpressionDataset subset(const std::vector<std::size_t>& cells) const;
};

struct ControlStats {
  int cell_type = 0;
  Vector mu;
  Vector sigma;
};

ExpressionDataset log1p_normalize(const ExpressionDataset& ds);

struct HvgSelection {
  ExpressionDataset dataset;
  std::vector<std::size_t> kept_indices;  // ascending
};

HvgSelection select_hvg(const ExpressionDataset& ds, std::size_t n_top);

// Remaps knockout targets onto a kept-gene subset; fails when a target was dropped.
ConditionRegistry remap_conditions(const ConditionRegistry& reg, const std::vector<std::size_t>& kept,
                                   std::size_t n_old_genes);

ExpressionDataset scale_unit(const ExpressionDataset& ds, double x_max);
ExpressionDataset unscale(const ExpressionDataset& ds);

ControlStats control_stats(const ExpressionDataset& ds, int cell_type);
std::map<int, ControlStats> control_stats_by_type(const ExpressionDataset& ds);

Vector noisy_control(const ControlStats& stats, Rng& rng);
Vector noisy_control(const ControlStats& stats, const Vector& eps);

// ---------------------------------------------------------------------------
// Synthetic benchmark generator.

struct SimConfig {
  std::size_t n_genes = 40;
  std::size_t n_cell_types = 2;
  std::size_t n_knockouts = 15;
  std::size_t n_molecules = 8;
  std::size_t cells_per_condition = 80;  // per (condition, cell type)
  std::size_t control_cells = 200;       // per cell type
  std::size_t mol_dim = 16;
  std::size_t n_modules = 5;
  std::size_t silent_per_cell_type = 2;
  double sparsity_rate = 0.03;
  double bimodal_fraction = 0.2;
  double p_resp = 0.5;
  double edge_keep = 0.7;
  double module_corr = 0.75;
  double baseline_low = 1.0;
  double baseline_high = 2.5;
  double cell_type_sd = 0.15;
  double noise_sd = 0.2;
  double knockout_neighbor_shift = 0.8;
  double molecule_target_shift = 1.2;
  double bimodal_shift = 1.2;
  std::vector<double> doses{0.1, 1.0, 10.0};
};

struct ResponseRule {
  std::string condition_id;
  std::size_t gene = 0;
  double shift = 0.0;  // additive shift in log1p space
  bool bimodal = false;
  double p_resp = 1.0;
};

struct SyntheticTruth {
  Eigen::MatrixXi true_grn;  // N x N, {0,1}, self-loops set
  std::vector<ResponseRule> response_rules;
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> silent_sets;
  std::vector<std::size_t> bimodal_genes;
  std::vector<std::string> knockout_conditions;
  std::vector<std::string> molecule_conditions;
};

struct Simulation {
  ExpressionDataset dataset;  // raw (pre-log1p) nonnegative values
  SyntheticTruth truth;
};

Simulation simulate_dataset(const SimConfig& config, Rng& rng);

}  // namespace unlasting::data
