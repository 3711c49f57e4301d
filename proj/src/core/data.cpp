#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace unlasting {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::argument: return "argument error";
    case ErrorCode::invalid_data: return "invalid data";
    case ErrorCode::insufficient_data: return "insufficient data";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::step_range: return "step range error";
    case ErrorCode::training: return "training error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::format: return "format error";
  }
  return "error";
}

}  // namespace unlasting

namespace unlasting::data {

void validate_condition(const PerturbationCondition& p, std::size_t n_genes, std::size_t mol_dim) {
  if (const auto* ko = std::get_if<GeneKnockout>(&p)) {
    require(!ko->targets.empty() && ko->targets.size() <= 2, ErrorCode::invalid_data,
            "gene knockout needs 1 or 2 targets");
    for (auto t : ko->targets) {
      require(t < n_genes, ErrorCode::invalid_data, "knockout target index out of range");
    }
    if (ko->targets.size() == 2) {
      require(ko->targets[0] != ko->targets[1], ErrorCode::invalid_data, "knockout targets must be distinct");
    }
  } else if (const auto* mol = std::get_if<Molecule>(&p)) {
    require(mol->dose >= 0.0 && std::isfinite(mol->dose), ErrorCode::invalid_data,
            "molecule dose must be finite and >= 0");
    require(mol_dim == 0 || static_cast<std::size_t>(mol->embedding.size()) == mol_dim, ErrorCode::invalid_data,
            "molecule embedding length mismatch for " + mol->molecule_id);
    require(mol->embedding.allFinite(), ErrorCode::invalid_data, "molecule embedding must be finite");
  }
}

const PerturbationCondition& ExpressionDataset::condition_of(std::size_t cell) const {
  auto it = conditions.find(condition_id.at(cell));
  if (it == conditions.end()) fail(ErrorCode::invalid_data, "unknown condition id '" + condition_id[cell] + "'");
  return it->second;
}

std::size_t ExpressionDataset::molecule_dim() const {
  for (const auto& [id, p] : conditions) {
    if (const auto* mol = std::get_if<Molecule>(&p)) return static_cast<std::size_t>(mol->embedding.size());
  }
  return 0;
}

std::vector<int> ExpressionDataset::cell_types() const {
  std::set<int> s(cell_type.begin(), cell_type.end());
  return {s.begin(), s.end()};
}

void ExpressionDataset::validate() const {
  require(n_genes() >= 2, ErrorCode::invalid_data, "dataset needs at least 2 genes");
  require(gene_names.size() == n_genes(), ErrorCode::invalid_data, "gene name count does not match columns");
  require(cell_type.size() == n_cells() && condition_id.size() == n_cells(), ErrorCode::invalid_data,
          "per-cell metadata length does not match rows");
  std::set<std::string> names(gene_names.begin(), gene_names.end());
  require(names.size() == gene_names.size(), ErrorCode::invalid_data, "gene names must be unique");
  require(values.allFinite(), ErrorCode::invalid_data, "expression values must be finite");
  require(values.size() == 0 || values.minCoeff() >= 0.0, ErrorCode::invalid_data,
          "expression values must be nonnegative");
  require(scale_max > 0.0, ErrorCode::invalid_data, "scale_max must be positive");
  const std::size_t dim = molecule_dim();
  for (const auto& [id, p] : conditions) validate_condition(p, n_genes(), dim);
  for (std::size_t i = 0; i < n_cells(); ++i) {
    require(cell_type[i] >= 0, ErrorCode::invalid_data, "cell type ids must be nonnegative");
    (void)condition_of(i);
  }
}

ExpressionDataset ExpressionDataset::subset(const std::vector<std::size_t>& cells) const {
  ExpressionDataset out;
  out.gene_names = gene_names;
  out.conditions = conditions;
  out.scale_max = scale_max;
  out.values.resize(static_cast<Eigen::Index>(cells.size()), values.cols());
  out.cell_type.reserve(cells.size());
  out.condition_id.reserve(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(cells[r]));
    out.cell_type.push_back(cell_type[cells[r]]);
    out.condition_id.push_back(condition_id[cells[r]]);
  }
  return out;
}

ExpressionDataset log1p_normalize(const ExpressionDataset& ds) {
  require(ds.values.size() == 0 || ds.values.minCoeff() >= 0.0, ErrorCode::invalid_data,
          "log1p_normalize: negative expression value");
  ExpressionDataset out = ds;
  out.values = ds.values.unaryExpr([](double v) { return std::log1p(v); });
  return out;
}

ConditionRegistry remap_conditions(const ConditionRegistry& reg, const std::vector<std::size_t>& kept,
                                   std::size_t n_old_genes) {
  std::vector<long> new_index(n_old_genes, -1);
  for (std::size_t k = 0; k < kept.size(); ++k) new_index[kept[k]] = static_cast<long>(k);
  ConditionRegistry out;
  for (const auto& [id, p] : reg) {
    if (const auto* ko = std::get_if<GeneKnockout>(&p)) {
      GeneKnockout mapped;
      for (auto t : ko->targets) {
        require(t < n_old_genes && new_index[t] >= 0, ErrorCode::invalid_data,
                "knockout target of condition '" + id + "' is not among the retained genes");
        mapped.targets.push_back(static_cast<std::size_t>(new_index[t]));
      }
      out.emplace(id, mapped);
    } else {
      out.emplace(id, p);
    }
  }
  return out;
}

HvgSelection select_hvg(const ExpressionDataset& ds, std::size_t n_top) {
  require(n_top > 0, ErrorCode::argument, "select_hvg: n_top must be positive");
  const std::size_t n = ds.n_genes();
  require(n_top <= n, ErrorCode::argument, "select_hvg: n_top exceeds gene count");
  require(ds.n_cells() > 0, ErrorCode::insufficient_data, "select_hvg: empty dataset");

  Eigen::RowVectorXd mean = ds.values.colwise().mean();
  std::vector<double> variance(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto col = ds.values.col(static_cast<Eigen::Index>(j)).array() - mean[static_cast<Eigen::Index>(j)];
    variance[j] = col.square().mean();
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return variance[a] > variance[b]; });
  std::vector<std::size_t> kept(order.begin(), order.begin() + static_cast<long>(n_top));
  std::sort(kept.begin(), kept.end());

  HvgSelection sel;
  sel.kept_indices = kept;
  ExpressionDataset& out = sel.dataset;
  out.values.resize(ds.values.rows(), static_cast<Eigen::Index>(n_top));
  for (std::size_t k = 0; k < n_top; ++k) {
    out.values.col(static_cast<Eigen::Index>(k)) = ds.values.col(static_cast<Eigen::Index>(kept[k]));
    out.gene_names.push_back(ds.gene_names[kept[k]]);
  }
  out.cell_type = ds.cell_type;
  out.condition_id = ds.condition_id;
  out.conditions = remap_conditions(ds.conditions, kept, n);
  out.scale_max = ds.scale_max;
  return sel;
}

ExpressionDataset scale_unit(const ExpressionDataset& ds, double x_max) {
  require(x_max > 0.0 && std::isfinite(x_max), ErrorCode::argument, "scale_unit: x_max must be positive");
  ExpressionDataset out = ds;
  out.values = ds.values / x_max;
  out.scale_max = x_max;
  return out;
}

ExpressionDataset unscale(const ExpressionDataset& ds) {
  ExpressionDataset out = ds;
  out.values = ds.values * ds.scale_max;
  out.scale_max = 1.0;
  return out;
}

ControlStats control_stats(const ExpressionDataset& ds, int cell_type) {
  const auto n = static_cast<Eigen::Index>(ds.n_genes());
  Vector sum = Vector::Zero(n);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.n_cells(); ++i) {
    if (ds.cell_type[i] == cell_type && ds.is_control_cell(i)) rows.push_back(i);
  }
  require(rows.size() >= 2, ErrorCode::insufficient_data,
          "control_stats: fewer than 2 control cells for cell type " + std::to_string(cell_type));
  for (auto r : rows) sum += ds.values.row(static_cast<Eigen::Index>(r)).transpose();
  ControlStats stats;
  stats.cell_type = cell_type;
  stats.mu = sum / static_cast<double>(rows.size());
  Vector sq = Vector::Zero(n);
  for (auto r : rows) {
    Vector d = ds.values.row(static_cast<Eigen::Index>(r)).transpose() - stats.mu;
    sq += d.cwiseProduct(d);
  }
  stats.sigma = (sq / static_cast<double>(rows.size())).cwiseSqrt();
  return stats;
}

std::map<int, ControlStats> control_stats_by_type(const ExpressionDataset& ds) {
  std::map<int, ControlStats> out;
  for (int c : ds.cell_types()) {
    bool has_control = false;
    for (std::size_t i = 0; i < ds.n_cells() && !has_control; ++i) {
      has_control = ds.cell_type[i] == c && ds.is_control_cell(i);
    }
    if (has_control) out.emplace(c, control_stats(ds, c));
  }
  return out;
}

Vector noisy_control(const ControlStats& stats, const Vector& eps) {
  require(eps.size() == stats.mu.size(), ErrorCode::argument, "noisy_control: noise length mismatch");
  return stats.mu + stats.sigma.cwiseProduct(eps);
}

Vector noisy_control(const ControlStats& stats, Rng& rng) {
  return noisy_control(stats, standard_normal_vector(rng, stats.mu.size()));
}

}  // namespace unlasting::data
