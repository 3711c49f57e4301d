#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "data.hpp"

namespace unlasting::data {
namespace {

std::string gene_name(std::size_t j) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "G%02zu", j);
  return buf;
}

std::string molecule_name(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "mol%02zu", k);
  return buf;
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  // Fisher-Yates with our own index draws so the order is library-independent.
  for (std::size_t i = n; i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
  return v;
}

void check_config(const SimConfig& c) {
  require(c.n_genes >= 2, ErrorCode::argument, "simulate: n_genes must be >= 2");
  require(c.n_cell_types >= 1, ErrorCode::argument, "simulate: n_cell_types must be >= 1");
  require(c.n_modules >= 1 && c.n_modules <= c.n_genes, ErrorCode::argument, "simulate: n_modules out of range");
  require(c.control_cells >= 2, ErrorCode::argument, "simulate: need >= 2 control cells per cell type");
  require(c.n_molecules == 0 || c.mol_dim >= 1, ErrorCode::argument, "simulate: mol_dim must be >= 1");
  require(c.n_molecules == 0 || !c.doses.empty(), ErrorCode::argument, "simulate: doses list is empty");
  for (double d : c.doses) require(d >= 0.0, ErrorCode::argument, "simulate: doses must be >= 0");
  require(c.sparsity_rate >= 0.0 && c.sparsity_rate < 1.0, ErrorCode::argument, "simulate: sparsity_rate in [0,1)");
  require(c.bimodal_fraction >= 0.0 && c.bimodal_fraction <= 1.0, ErrorCode::argument,
          "simulate: bimodal_fraction in [0,1]");
  require(c.p_resp >= 0.0 && c.p_resp <= 1.0, ErrorCode::argument, "simulate: p_resp in [0,1]");
  require(c.module_corr >= 0.0 && c.module_corr <= 1.0, ErrorCode::argument, "simulate: module_corr in [0,1]");
  require(c.baseline_low <= c.baseline_high, ErrorCode::argument, "simulate: baseline range inverted");
  const std::size_t n_bimodal = static_cast<std::size_t>(std::lround(c.bimodal_fraction * c.n_genes));
  const std::size_t n_silent = c.silent_per_cell_type * c.n_cell_types;
  require(n_silent + n_bimodal <= c.n_genes, ErrorCode::argument,
          "simulate: silent and bimodal genes exceed gene count");
  const std::size_t n_regular = c.n_genes - n_silent - n_bimodal;
  require(c.n_knockouts <= n_regular, ErrorCode::argument,
          "simulate: more knockouts than regular (non-silent, non-bimodal) genes");
  require(c.n_molecules == 0 || n_regular >= 1, ErrorCode::argument, "simulate: no regular genes for molecule targets");
}

}  // namespace

Simulation simulate_dataset(const SimConfig& cfg, Rng& rng) {
  check_config(cfg);
  const std::size_t n = cfg.n_genes;
  const std::size_t n_bimodal = static_cast<std::size_t>(std::lround(cfg.bimodal_fraction * n));

  Simulation sim;
  SyntheticTruth& truth = sim.truth;

  // Gene roles.
  const auto roles = shuffled(n, rng);
  std::vector<std::vector<std::size_t>> type_silent(cfg.n_cell_types);
  std::size_t cursor = 0;
  for (std::size_t c = 0; c < cfg.n_cell_types; ++c) {
    for (std::size_t s = 0; s < cfg.silent_per_cell_type; ++s) type_silent[c].push_back(roles[cursor++]);
    std::sort(type_silent[c].begin(), type_silent[c].end());
  }
  for (std::size_t b = 0; b < n_bimodal; ++b) truth.bimodal_genes.push_back(roles[cursor++]);
  std::sort(truth.bimodal_genes.begin(), truth.bimodal_genes.end());
  std::vector<std::size_t> regular(roles.begin() + static_cast<long>(cursor), roles.end());

  // Modules and the true regulatory graph (edges only within a module).
  const auto module_order = shuffled(n, rng);
  std::vector<std::size_t> module_of(n);
  for (std::size_t p = 0; p < n; ++p) module_of[module_order[p]] = p % cfg.n_modules;
  truth.true_grn = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    truth.true_grn(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (module_of[i] == module_of[j] && uniform01(rng) < cfg.edge_keep) {
        truth.true_grn(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1;
        truth.true_grn(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1;
      }
    }
  }
  auto is_bimodal = [&](std::size_t j) {
    return std::binary_search(truth.bimodal_genes.begin(), truth.bimodal_genes.end(), j);
  };
  auto neighbors = [&](std::size_t k) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != k && truth.true_grn(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j))) out.push_back(j);
    }
    return out;
  };

  // Per-gene baselines and response directions.
  Vector base(static_cast<Eigen::Index>(n));
  Vector direction(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    base[static_cast<Eigen::Index>(j)] = cfg.baseline_low + (cfg.baseline_high - cfg.baseline_low) * uniform01(rng);
    direction[static_cast<Eigen::Index>(j)] = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * cfg.knockout_neighbor_shift;
  }
  Matrix type_mean(static_cast<Eigen::Index>(cfg.n_cell_types), static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < cfg.n_cell_types; ++c) {
    for (std::size_t j = 0; j < n; ++j) {
      type_mean(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) =
          base[static_cast<Eigen::Index>(j)] + cfg.cell_type_sd * standard_normal(rng);
    }
  }

  ExpressionDataset& ds = sim.dataset;
  for (std::size_t j = 0; j < n; ++j) ds.gene_names.push_back(gene_name(j));
  ds.conditions.emplace("ctrl", Control{});

  struct ConditionPlan {
    std::string id;
    std::vector<std::size_t> knocked;  // silent because knocked out
    std::vector<std::pair<std::size_t, double>> shifts;
    bool perturbed = false;
    std::vector<std::size_t> bimodal;  // bimodal genes reached by the perturbation
  };
  std::vector<ConditionPlan> plans;
  plans.push_back({"ctrl", {}, {}, false});

  const auto ko_pick = shuffled(regular.size(), rng);
  for (std::size_t k = 0; k < cfg.n_knockouts; ++k) {
    const std::size_t target = regular[ko_pick[k]];
    ConditionPlan plan{"KO_" + gene_name(target), {target}, {}, true};
    for (auto j : neighbors(target)) {
      if (is_bimodal(j))
        plan.bimodal.push_back(j);
      else
        plan.shifts.emplace_back(j, direction[static_cast<Eigen::Index>(j)]);
    }
    ds.conditions.emplace(plan.id, GeneKnockout{{target}});
    truth.knockout_conditions.push_back(plan.id);
    plans.push_back(std::move(plan));
  }

  if (cfg.n_molecules > 0) {
    const double max_dose = *std::max_element(cfg.doses.begin(), cfg.doses.end());
    Matrix projection(static_cast<Eigen::Index>(cfg.mol_dim), static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < projection.rows(); ++r)
      for (Eigen::Index c = 0; c < projection.cols(); ++c) projection(r, c) = standard_normal(rng);
    for (std::size_t m = 0; m < cfg.n_molecules; ++m) {
      const std::size_t n_targets = (regular.size() >= 2 && uniform01(rng) < 0.5) ? 2 : 1;
      const auto pick = shuffled(regular.size(), rng);
      std::vector<std::size_t> targets;
      for (std::size_t t = 0; t < n_targets; ++t) targets.push_back(regular[pick[t]]);
      std::sort(targets.begin(), targets.end());
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double dose = cfg.doses[m % cfg.doses.size()];
      const double strength = max_dose > 0.0 ? std::log1p(dose) / std::log1p(max_dose) : 0.0;

      Vector indicator = Vector::Zero(static_cast<Eigen::Index>(n));
      for (auto t : targets) indicator[static_cast<Eigen::Index>(t)] = 1.0 / static_cast<double>(n_targets);
      Vector embedding = projection * indicator;
      for (Eigen::Index d = 0; d < embedding.size(); ++d) embedding[d] += 0.05 * standard_normal(rng);

      char id[32];
      std::snprintf(id, sizeof id, "MOL%02zu", m);
      ConditionPlan plan{id, {}, {}, true};
      std::vector<double> shift(n, 0.0);
      for (auto t : targets) {
        shift[t] += sign * cfg.molecule_target_shift * strength;
        for (auto j : neighbors(t)) {
          if (is_bimodal(j)) {
            plan.bimodal.push_back(j);
          } else if (std::find(targets.begin(), targets.end(), j) == targets.end()) {
            shift[j] += direction[static_cast<Eigen::Index>(j)] * strength;
          }
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (shift[j] != 0.0) plan.shifts.emplace_back(j, shift[j]);
      }
      std::sort(plan.bimodal.begin(), plan.bimodal.end());
      plan.bimodal.erase(std::unique(plan.bimodal.begin(), plan.bimodal.end()), plan.bimodal.end());
      ds.conditions.emplace(plan.id, Molecule{molecule_name(m), embedding, dose});
      truth.molecule_conditions.push_back(plan.id);
      plans.push_back(std::move(plan));
    }
  }

  for (const auto& plan : plans) {
    for (const auto& [gene, s] : plan.shifts) truth.response_rules.push_back({plan.id, gene, s, false, 1.0});
    for (auto b : plan.bimodal) truth.response_rules.push_back({plan.id, b, cfg.bimodal_shift, true, cfg.p_resp});
    for (std::size_t c = 0; c < cfg.n_cell_types; ++c) {
      std::vector<std::size_t> silent = type_silent[c];
      silent.insert(silent.end(), plan.knocked.begin(), plan.knocked.end());
      std::sort(silent.begin(), silent.end());
      silent.erase(std::unique(silent.begin(), silent.end()), silent.end());
      truth.silent_sets[{static_cast<int>(c), plan.id}] = silent;
    }
  }

  // Cells.
  std::size_t total = 0;
  for (const auto& plan : plans) total += cfg.n_cell_types * (plan.perturbed ? cfg.cells_per_condition : cfg.control_cells);
  ds.values.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(n));
  const double shared = cfg.module_corr;
  const double own = std::sqrt(1.0 - shared * shared);
  std::size_t row = 0;
  for (const auto& plan : plans) {
    const std::size_t per_type = plan.perturbed ? cfg.cells_per_condition : cfg.control_cells;
    for (std::size_t c = 0; c < cfg.n_cell_types; ++c) {
      const auto& silent = truth.silent_sets.at({static_cast<int>(c), plan.id});
      for (std::size_t i = 0; i < per_type; ++i, ++row) {
        Vector module_factor = standard_normal_vector(rng, static_cast<Eigen::Index>(cfg.n_modules));
        Vector y(static_cast<Eigen::Index>(n));
        for (std::size_t j = 0; j < n; ++j) {
          const double z = standard_normal(rng);
          y[static_cast<Eigen::Index>(j)] =
              type_mean(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) +
              cfg.noise_sd * (shared * module_factor[static_cast<Eigen::Index>(module_of[j])] + own * z);
        }
        for (const auto& [gene, s] : plan.shifts) y[static_cast<Eigen::Index>(gene)] += s;
        if (plan.perturbed && uniform01(rng) < cfg.p_resp) {
          for (auto b : plan.bimodal) y[static_cast<Eigen::Index>(b)] += cfg.bimodal_shift;
        }
        for (std::size_t j = 0; j < n; ++j) {
          double raw = std::expm1(std::max(0.0, y[static_cast<Eigen::Index>(j)]));
          const bool dropped = uniform01(rng) < cfg.sparsity_rate;
          if (dropped || std::binary_search(silent.begin(), silent.end(), j)) raw = 0.0;
          ds.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = raw;
        }
        ds.cell_type.push_back(static_cast<int>(c));
        ds.condition_id.push_back(plan.id);
      }
    }
  }
  ds.validate();
  return sim;
}

}  // namespace unlasting::data
