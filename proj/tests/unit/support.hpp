#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "rng.hpp"

namespace testing {

using unlasting::Rng;
using unlasting::data::Matrix;

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<std::string> gene_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < n; ++j) out.push_back("g" + std::to_string(j));
  return out;
}

// Small dataset with control cells of every type plus one knockout and one molecule condition.
inline unlasting::data::ExpressionDataset toy_dataset(Rng& rng, std::size_t n_genes = 6, std::size_t per_group = 6,
                                                      std::size_t mol_dim = 3, std::size_t n_types = 2) {
  using namespace unlasting::data;
  ExpressionDataset ds;
  ds.gene_names = gene_names(n_genes);
  ds.conditions["ctrl"] = Control{};
  ds.conditions["KO_g1"] = GeneKnockout{{1}};
  Molecule m;
  m.molecule_id = "drugA";
  m.embedding = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(mol_dim), -0.5, 0.5);
  m.dose = 1.0;
  ds.conditions["drugA_1"] = m;
  const std::vector<std::string> ids{"ctrl", "KO_g1", "drugA_1"};
  const std::size_t rows = ids.size() * n_types * per_group;
  ds.values = random_matrix(rng, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_genes), 0.05, 1.0);
  std::size_t r = 0;
  for (const auto& id : ids)
    for (std::size_t c = 0; c < n_types; ++c)
      for (std::size_t i = 0; i < per_group; ++i, ++r) {
        ds.condition_id.push_back(id);
        ds.cell_type.push_back(static_cast<int>(c));
        if (id == "KO_g1") ds.values(static_cast<Eigen::Index>(r), 1) = 0.0;
      }
  return ds;
}

}  // namespace testing
