#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"

namespace unlasting::metrics {

using data::Matrix;  // samples x genes

// Energy distance between two sample sets over the columns in `genes` (all when empty).
double energy_distance(const Matrix& x, const Matrix& y, std::span<const std::size_t> genes = {});

// Exact 1D Wasserstein-1 distance between two empirical distributions.
double wasserstein_1d(std::span<const double> x, std::span<const double> y);

// Mean per-gene W1 over `genes` (all when empty).
double emd(const Matrix& x, const Matrix& y, std::span<const std::size_t> genes = {});
Eigen::VectorXd per_gene_emd(const Matrix& x, const Matrix& y);

// Top-k genes by |mean(perturbed) - mean(control)|, ties by ascending index, in rank order.
std::vector<std::size_t> de_genes(const Matrix& control, const Matrix& perturbed, std::size_t k);

struct SubsetScore {
  std::string label;  // "all", "de20", "de40"
  std::vector<std::size_t> genes;
  double e_distance = 0.0;
  double emd = 0.0;
};

struct EvalReport {
  std::vector<SubsetScore> subsets;
  Eigen::VectorXd per_gene_emd;
};

// DE genes are ranked from the ground truth against control; k is capped at the gene count.
EvalReport evaluate(const Matrix& pred, const Matrix& truth, const Matrix& control,
                    const std::vector<std::size_t>& de_sizes = {20, 40});

}  // namespace unlasting::metrics
