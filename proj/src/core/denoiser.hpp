#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "diffusion.hpp"
#include "gene_block.hpp"
#include "nn/adam.hpp"

namespace unlasting::model {

struct DenoiserFlags {
  bool no_ctrl_stats = false;  // drop the control-signal term
  bool no_grn = false;         // molecule conditions skip message passing
};

// x0-predicting conditional denoiser. The Control branch acts as the source model,
// knockout and molecule branches as the target model.
//
// The network output is wrapped per gene as
//   x0_hat = m + c_skip(t) (x_t - sqrt(abar_t) m) + c_out(t) net(c_in(t) (x_t - sqrt(abar_t) m), ...)
// with coefficients from the posterior mean under a Gaussian prior of mean m and spread s
// (data_mean(), data_spread()).
class Denoiser {
 public:
  Denoiser(const ArchConfig& arch, grn::Grn graph, DenoiserFlags flags, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  const grn::Grn& graph() const { return graph_; }
  const DenoiserFlags& flags() const { return flags_; }
  // Per-gene centre and spread of the (scaled) training data.
  const Vector& data_mean() const { return data_mean_; }
  const Vector& data_spread() const { return data_spread_; }
  void set_data_stats(const Vector& mean, const Vector& spread);
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  // Builds the forward graph on `tape`; returns the N x 1 prediction.
  nn::Var forward(nn::Tape& tape, const Vector& x_t, std::size_t t, const Conditioning& cond) const;
  Vector denoise(const Vector& x_t, std::size_t t, const Conditioning& cond) const;

  Matrix condition_embed(const Vector& x_t, std::size_t t, const Conditioning& cond) const;  // N x D
  Vector grn_block(const Matrix& embedded, const Conditioning& cond) const;                  // F_GW

  // Closure for the samplers with the conditioning bound in.
  diffusion::DenoiserFn as_fn(const Conditioning& cond) const;

  nn::Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const nn::Checkpoint& ck);

 private:
  nn::Var context(nn::Tape& tape, std::size_t t, int cell_type) const;
  nn::Var condition_embed_tape(nn::Tape& tape, const Vector& x_t, const Conditioning& cond, nn::Var ctx) const;
  const grn::Grn& graph_for(const Conditioning& cond) const;
  EmbedOptions embed_options() const { return {!flags_.no_ctrl_stats, false}; }

  struct Precondition {
    Vector skip, out, in;
    Vector offset;  // sqrt(abar_t) m
  };
  Precondition precondition(std::size_t t) const;

  ArchConfig arch_;
  grn::Grn graph_;
  grn::Grn identity_;
  DenoiserFlags flags_;
  Vector data_mean_;
  Vector data_spread_;
  Vector alpha_bar_;
  nn::ParameterSet params_;
  GeneBlock block_;
  nn::DenseRef time_dense_;
  std::size_t cell_table_ = 0;
  nn::MlpRef body_;     // [x_t ; time ; cell] -> D_B
  nn::MlpRef decoder_;  // [body ; F_GW ; time ; cell] -> N
};

// Sinusoidal features of 1000 t / T.
Vector time_features(std::size_t t, std::size_t T, std::size_t dim);

using ControlStatsMap = std::map<int, data::ControlStats>;

struct TrainExample {
  Vector x0;  // scaled to [0, 1]
  int cell_type = 0;
  data::PerturbationCondition perturbation = data::Control{};
};

std::vector<TrainExample> training_examples(const data::ExpressionDataset& ds);

// One training sample with its random draws fixed.
struct DrawnSample {
  const TrainExample* example = nullptr;
  std::size_t t = 1;
  Vector eps;
  std::optional<Vector> ctrl;
};

std::vector<DrawnSample> draw_batch(const Denoiser& model, std::span<const TrainExample* const> batch,
                                    const ControlStatsMap& stats, const diffusion::DiffusionSchedule& sched, Rng& rng);

// Mean per-sample loss over samples with at least one expressed gene. Gradients of that mean are
// accumulated into `grads` when non-null. Throws training when every sample is skipped.
double batch_loss(const Denoiser& model, std::span<const DrawnSample> batch, const diffusion::DiffusionSchedule& sched,
                  bool masked, nn::Gradients* grads, std::size_t* used = nullptr);

// Draws, evaluates and applies one Adam update. Parameters are untouched on error.
double train_step(Denoiser& model, std::span<const TrainExample* const> batch, const ControlStatsMap& stats,
                  const diffusion::DiffusionSchedule& sched, Rng& rng, nn::AdamState& opt, bool masked = true);

struct TrainOptions {
  std::size_t steps = 3000;
  std::size_t batch = 32;
  double lr = 1e-3;
  bool masked = true;
  std::function<void(std::size_t step, double loss)> on_step;
};

// Sets the model's data statistics from `train`, then fits on minibatches drawn uniformly with
// replacement. Returns the loss curve.
std::vector<double> train_denoiser(Denoiser& model, const data::ExpressionDataset& train,
                                   const diffusion::DiffusionSchedule& sched, const TrainOptions& opts, Rng& rng);

struct PredictOptions {
  diffusion::SamplerConfig sampler;
  bool random_latent = false;
  bool clamp = true;
};

// Encode the control cell with the source branch, decode under `perturbation`, clamp,
// apply `mask` when given, rescale by x_max. `rng` is needed only for random latents.
Vector predict(const Denoiser& model, const Vector* mask, const Vector& x_control, int cell_type,
               const data::PerturbationCondition& perturbation, const PredictOptions& opts,
               const diffusion::DiffusionSchedule& sched, double x_max, Rng* rng = nullptr);

}  // namespace unlasting::model
