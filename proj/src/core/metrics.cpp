#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unlasting::metrics {

namespace {

std::vector<std::size_t> resolve(std::span<const std::size_t> genes, std::size_t n) {
  if (genes.empty()) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  for (auto g : genes) require(g < n, ErrorCode::argument, "gene index out of range");
  return {genes.begin(), genes.end()};
}

Matrix columns(const Matrix& m, const std::vector<std::size_t>& genes) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(genes.size()));
  for (std::size_t k = 0; k < genes.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(genes[k]));
  return out;
}

double mean_pairwise(const Matrix& a, const Matrix& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) total += (a.row(i) - b.row(j)).norm();
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double energy_distance(const Matrix& x, const Matrix& y, std::span<const std::size_t> genes) {
  require(x.rows() >= 1 && y.rows() >= 1, ErrorCode::argument, "energy_distance: empty sample set");
  require(x.cols() == y.cols(), ErrorCode::argument, "energy_distance: column counts differ");
  const auto idx = resolve(genes, static_cast<std::size_t>(x.cols()));
  const Matrix xs = columns(x, idx);
  const Matrix ys = columns(y, idx);
  return 2.0 * mean_pairwise(xs, ys) - mean_pairwise(xs, xs) - mean_pairwise(ys, ys);
}

double wasserstein_1d(std::span<const double> x, std::span<const double> y) {
  require(!x.empty() && !y.empty(), ErrorCode::argument, "wasserstein_1d: empty input");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  // Integrate |F_a - F_b| between consecutive breakpoints of the merged sample.
  std::size_t i = 0;
  std::size_t j = 0;
  double total = 0.0;
  double prev = std::min(a.front(), b.front());
  while (i < a.size() || j < b.size()) {
    const double next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    total += std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m) * (next - prev);
    prev = next;
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
  }
  return total;
}

Eigen::VectorXd per_gene_emd(const Matrix& x, const Matrix& y) {
  require(x.rows() >= 1 && y.rows() >= 1, ErrorCode::argument, "emd: empty sample set");
  require(x.cols() == y.cols(), ErrorCode::argument, "emd: column counts differ");
  Eigen::VectorXd out(x.cols());
  for (Eigen::Index g = 0; g < x.cols(); ++g) {
    const Eigen::VectorXd xc = x.col(g);
    const Eigen::VectorXd yc = y.col(g);
    out[g] = wasserstein_1d({xc.data(), static_cast<std::size_t>(xc.size())},
                            {yc.data(), static_cast<std::size_t>(yc.size())});
  }
  return out;
}

double emd(const Matrix& x, const Matrix& y, std::span<const std::size_t> genes) {
  require(x.cols() == y.cols(), ErrorCode::argument, "emd: column counts differ");
  const auto idx = resolve(genes, static_cast<std::size_t>(x.cols()));
  require(!idx.empty(), ErrorCode::argument, "emd: empty gene subset");
  const Eigen::VectorXd w = per_gene_emd(columns(x, idx), columns(y, idx));
  return w.mean();
}

std::vector<std::size_t> de_genes(const Matrix& control, const Matrix& perturbed, std::size_t k) {
  require(k > 0, ErrorCode::argument, "de_genes: k must be positive");
  require(control.cols() == perturbed.cols(), ErrorCode::argument, "de_genes: column counts differ");
  require(control.rows() >= 1 && perturbed.rows() >= 1, ErrorCode::argument, "de_genes: empty sample set");
  const auto n = static_cast<std::size_t>(control.cols());
  require(k <= n, ErrorCode::argument, "de_genes: k exceeds gene count");
  const Eigen::RowVectorXd diff = (perturbed.colwise().mean() - control.colwise().mean()).cwiseAbs();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return diff[static_cast<Eigen::Index>(a)] > diff[static_cast<Eigen::Index>(b)];
  });
  order.resize(k);
  return order;
}

EvalReport evaluate(const Matrix& pred, const Matrix& truth, const Matrix& control,
                    const std::vector<std::size_t>& de_sizes) {
  require(pred.cols() == truth.cols() && truth.cols() == control.cols(), ErrorCode::argument,
          "evaluate: column counts differ");
  EvalReport report;
  report.per_gene_emd = per_gene_emd(pred, truth);
  SubsetScore all;
  all.label = "all";
  all.genes = resolve({}, static_cast<std::size_t>(pred.cols()));
  all.e_distance = energy_distance(pred, truth);
  all.emd = report.per_gene_emd.mean();
  report.subsets.push_back(std::move(all));
  for (auto k : de_sizes) {
    SubsetScore s;
    s.label = "de" + std::to_string(k);
    s.genes = de_genes(control, truth, std::min<std::size_t>(k, static_cast<std::size_t>(pred.cols())));
    s.e_distance = energy_distance(pred, truth, s.genes);
    s.emd = emd(pred, truth, s.genes);
    report.subsets.push_back(std::move(s));
  }
  return report;
}

}  // namespace unlasting::metrics
