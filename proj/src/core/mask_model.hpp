#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "denoiser.hpp"

namespace unlasting::model {

// Predicts, per gene, the probability that it is expressed (non-zero) under a condition.
class MaskModel {
 public:
  MaskModel(const ArchConfig& arch, grn::Grn graph, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  const grn::Grn& graph() const { return graph_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  // Sigmoid of the gene-wise readout, N x 1 (unclamped).
  nn::Var forward(nn::Tape& tape, int cell_type, const Vector& ctrl, const data::PerturbationCondition& p) const;
  // Probabilities clamped to [1e-7, 1 - 1e-7].
  Vector mask_forward(int cell_type, const Vector& ctrl, const data::PerturbationCondition& p) const;

  nn::Checkpoint to_checkpoint() const;
  static MaskModel from_checkpoint(const nn::Checkpoint& ck);

 private:
  ArchConfig arch_;
  grn::Grn graph_;
  nn::ParameterSet params_;
  GeneBlock block_;
  std::size_t cell_table_ = 0;
};

inline constexpr double kProbClamp = 1e-7;

struct MaskSample {
  const TrainExample* example = nullptr;
  Vector ctrl;
};

std::vector<MaskSample> draw_mask_batch(std::span<const TrainExample* const> batch, const ControlStatsMap& stats,
                                        Rng& rng);

// Mean BCE over the batch; accumulates gradients of that mean when `grads` is non-null.
double mask_batch_loss(const MaskModel& model, std::span<const MaskSample> batch, nn::Gradients* grads);

double mask_train_step(MaskModel& model, std::span<const TrainExample* const> batch, const ControlStatsMap& stats,
                       Rng& rng, nn::AdamState& opt);

std::vector<double> train_mask_model(MaskModel& model, const data::ExpressionDataset& train, const TrainOptions& opts,
                                     Rng& rng);

struct MaskPrediction {
  Vector prob;                // mean active probability over the samples
  Vector binary;              // 1 = keep (active), 0 = silence
  Eigen::VectorXi agg_count;  // active votes per gene, in [0, K]
};

// One vote per control sample (prob >= tau); a gene stays active when its vote count
// reaches ceil(fraction * K).
MaskPrediction mask_predict(const MaskModel& model, std::span<const Vector> control_samples, int cell_type,
                            const data::PerturbationCondition& p, double tau = 0.5, double fraction = 0.5);

}  // namespace unlasting::model
