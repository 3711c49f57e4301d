#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"
#include "data.hpp"
#include "dataset_io.hpp"
#include "mask_model.hpp"
#include "metrics.hpp"

namespace unlasting::pipeline {

using config::RunConfig;
using data::ExpressionDataset;

// Condition-level split. Control cells always land in train.
std::pair<ExpressionDataset, ExpressionDataset> make_split(const ExpressionDataset& ds, const config::SplitSpec& spec);

// Writes raw counts, condition registry, truth summary and the true GRN into `out_dir`.
void simulate_to_dir(const data::SimConfig& sim, std::uint64_t seed, const std::string& out_dir);

struct Preprocessed {
  ExpressionDataset train;  // log1p values
  ExpressionDataset test;
  std::vector<std::size_t> kept_genes;
  double x_max = 1.0;
  std::optional<Eigen::MatrixXi> prior;  // restricted to kept genes
};

// log1p, optional HVG selection, split, scale reference.
Preprocessed preprocess(const ExpressionDataset& raw, const RunConfig& cfg, const std::optional<Eigen::MatrixXi>& prior);
// train.csv, test.csv, conditions.json, meta.json and (with a prior) prior.csv.
void write_preprocessed(const Preprocessed& p, const RunConfig& cfg, const std::string& out_dir);

grn::Grn build_grn(const ExpressionDataset& ds, const std::optional<Eigen::MatrixXi>& prior, double eps_co);

// Largest value in the dataset (must be positive).
double max_value(const ExpressionDataset& ds);

using Progress = std::function<void(std::size_t step, double loss)>;

struct TrainedDenoiser {
  model::Denoiser model;
  double x_max = 1.0;
  std::uint64_t config_hash = 0;
};

struct TrainedMask {
  model::MaskModel model;
  double x_max = 1.0;
  std::uint64_t config_hash = 0;
};

// `train` holds log1p values; it is divided by x_max before fitting.
TrainedDenoiser train_denoiser(const RunConfig& cfg, const ExpressionDataset& train, const grn::Grn& graph,
                               double x_max, const Progress& progress = {});
TrainedMask train_mask(const RunConfig& cfg, const ExpressionDataset& train, const grn::Grn& graph, double x_max,
                       const Progress& progress = {});

nn::Checkpoint to_checkpoint(const TrainedDenoiser& d);
nn::Checkpoint to_checkpoint(const TrainedMask& m);
TrainedDenoiser denoiser_from_checkpoint(const nn::Checkpoint& ck);
TrainedMask mask_from_checkpoint(const nn::Checkpoint& ck);

// One prediction per non-control cell in `targets`, grouped by (condition, cell type),
// each bridged from a control cell of the same type in `controls`. Output is in log1p units.
ExpressionDataset predict(const RunConfig& cfg, const TrainedDenoiser& denoiser, const TrainedMask* mask,
                          const ExpressionDataset& targets, const ExpressionDataset& controls);

struct ConditionReport {
  std::string condition_id;
  std::size_t n_pred = 0;
  std::size_t n_truth = 0;
  metrics::EvalReport report;
};

struct Evaluation {
  std::vector<std::string> gene_names;
  std::vector<ConditionReport> conditions;
};

// Per perturbed condition present in `pred`, pooled over cell types.
Evaluation evaluate(const ExpressionDataset& pred, const ExpressionDataset& truth, const ExpressionDataset& control);

io::json report_json(const Evaluation& e, const std::optional<std::uint64_t>& config_hash = std::nullopt);
std::string per_gene_csv(const Evaluation& e);

// Rows of `ds` whose condition is `condition_id` (and cell type, when given).
data::Matrix rows_of(const ExpressionDataset& ds, const std::string& condition_id, std::optional<int> cell_type = {});
data::Matrix control_rows(const ExpressionDataset& ds, std::optional<int> cell_type = {});

}  // namespace unlasting::pipeline
