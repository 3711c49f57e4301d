#include "grn.hpp"

#include <algorithm>
#include <cmath>

namespace unlasting::grn {

Grn::Grn(const Eigen::MatrixXi& adjacency) : adjacency_(adjacency) {
  require(adjacency.rows() == adjacency.cols() && adjacency.rows() >= 1, ErrorCode::argument,
          "GRN adjacency must be square and non-empty");
  require((adjacency.array() == 0 || adjacency.array() == 1).all(), ErrorCode::invalid_data,
          "GRN adjacency entries must be 0 or 1");
  adjacency_.diagonal().setOnes();
  neighbors_.resize(size());
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < size(); ++j) {
      if (edge(i, j)) neighbors_[i].push_back(j);
    }
  }
}

Grn Grn::identity(std::size_t n) {
  return Grn(Eigen::MatrixXi::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
}

std::size_t Grn::edge_count() const { return static_cast<std::size_t>(adjacency_.sum()); }

Eigen::MatrixXd pearson_matrix(
    const Eigen::Ref<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& values) {
  require(values.rows() >= 2, ErrorCode::insufficient_data, "pearson_matrix: need at least 2 cells");
  const Eigen::Index n = values.cols();
  Eigen::MatrixXd centered = values.rowwise() - values.colwise().mean();
  std::vector<bool> constant(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    constant[static_cast<std::size_t>(j)] = values.col(j).maxCoeff() == values.col(j).minCoeff();
  }
  Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  Eigen::MatrixXd pcc = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (constant[static_cast<std::size_t>(i)]) continue;
    pcc(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (constant[static_cast<std::size_t>(j)]) continue;
      const double r = std::clamp(cov(i, j) / (sd[i] * sd[j]), -1.0, 1.0);
      pcc(i, j) = r;
      pcc(j, i) = r;
    }
  }
  return pcc;
}

Grn build_grn(const Eigen::MatrixXd& pcc, const std::optional<Eigen::MatrixXi>& prior, double eps_co) {
  require(eps_co > 0.0 && eps_co <= 1.0, ErrorCode::argument, "build_grn: eps_co must be in (0, 1]");
  require(pcc.rows() == pcc.cols(), ErrorCode::argument, "build_grn: PCC matrix must be square");
  if (prior) {
    require(prior->rows() == pcc.rows() && prior->cols() == pcc.cols(), ErrorCode::argument,
            "build_grn: prior shape does not match PCC");
    require((prior->array() == 0 || prior->array() == 1).all(), ErrorCode::argument,
            "build_grn: prior entries must be 0 or 1");
  }
  Eigen::MatrixXi a(pcc.rows(), pcc.cols());
  for (Eigen::Index i = 0; i < pcc.rows(); ++i) {
    for (Eigen::Index j = 0; j < pcc.cols(); ++j) {
      a(i, j) = std::abs(pcc(i, j)) >= eps_co ? 1 : (prior ? (*prior)(i, j) : 0);
    }
  }
  return Grn(a);
}

Eigen::MatrixXi adjacency_from_real(const Eigen::MatrixXd& m) {
  require((m.array() == 0.0 || m.array() == 1.0).all(), ErrorCode::invalid_data,
          "adjacency file entries must be 0 or 1");
  return m.cast<int>();
}

}  // namespace unlasting::grn
