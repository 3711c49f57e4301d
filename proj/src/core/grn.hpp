#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace unlasting::grn {

// Binary gene-gene adjacency with self-loops. Row i lists the genes that gene i attends to.
class Grn {
 public:
  Grn() = default;
  // Copies `adjacency` (entries must be 0 or 1) and forces the diagonal to 1.
  explicit Grn(const Eigen::MatrixXi& adjacency);

  static Grn identity(std::size_t n);

  std::size_t size() const { return static_cast<std::size_t>(adjacency_.rows()); }
  bool edge(std::size_t i, std::size_t j) const {
    return adjacency_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0;
  }
  const Eigen::MatrixXi& adjacency() const { return adjacency_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }
  bool includes_self_loops() const { return true; }
  std::size_t edge_count() const;

  bool operator==(const Grn& o) const { return adjacency_ == o.adjacency_; }

 private:
  Eigen::MatrixXi adjacency_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

// Pearson correlation between columns of `values` (cells x genes).
// Constant genes get an all-zero row and column, diagonal included.
Eigen::MatrixXd pearson_matrix(const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& values);

// A[i][j] = 1 if |pcc[i][j]| >= eps_co, else prior[i][j] (0 without a prior); diagonal forced to 1.
Grn build_grn(const Eigen::MatrixXd& pcc, const std::optional<Eigen::MatrixXi>& prior, double eps_co);

Eigen::MatrixXi adjacency_from_real(const Eigen::MatrixXd& m);

}  // namespace unlasting::grn
