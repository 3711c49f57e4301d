#include "mask_model.hpp"

#include <algorithm>
#include <cmath>

namespace unlasting::model {

MaskModel::MaskModel(const ArchConfig& arch, grn::Grn graph, std::uint64_t seed)
    : arch_(arch), graph_(std::move(graph)) {
  arch_.validate();
  require(graph_.size() == arch_.n_genes, ErrorCode::argument, "GRN size does not match gene count");
  Rng rng = derive_rng(seed, 0x6d61736b);
  cell_table_ = params_.add("cell_emb", nn::normal_matrix(static_cast<Eigen::Index>(arch_.n_cell_types),
                                                          static_cast<Eigen::Index>(arch_.cell_dim), 0.02, rng));
  block_ = add_gene_block(params_, "gene", arch_, arch_.cell_dim, false, rng);
}

nn::Var MaskModel::forward(nn::Tape& tape, int cell_type, const Vector& ctrl,
                           const data::PerturbationCondition& p) const {
  const Conditioning cond{cell_type, p, ctrl};
  nn::Var ce = cell_embedding(tape, cell_table_, arch_, cell_type);
  nn::Var embedded = condition_embed(tape, block_, arch_, cond, ce, nullptr, {true, true});
  return tape.activate(grn_readout(tape, block_, embedded, graph_, true), nn::Activation::sigmoid);
}

Vector MaskModel::mask_forward(int cell_type, const Vector& ctrl, const data::PerturbationCondition& p) const {
  nn::Tape tape(params_);
  return tape.value(forward(tape, cell_type, ctrl, p)).col(0).cwiseMax(kProbClamp).cwiseMin(1.0 - kProbClamp);
}

nn::Checkpoint MaskModel::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.add_scalar("meta.kind", 2.0);
  arch_.store(ck);
  store_grn(ck, graph_);
  ck.add_params(params_);
  return ck;
}

MaskModel MaskModel::from_checkpoint(const nn::Checkpoint& ck) {
  require(ck.scalar("meta.kind") == 2.0, ErrorCode::format, "checkpoint does not hold a mask model");
  MaskModel m(ArchConfig::restore(ck), restore_grn(ck), 0);
  ck.load_params(m.params_);
  return m;
}

std::vector<MaskSample> draw_mask_batch(std::span<const TrainExample* const> batch, const ControlStatsMap& stats,
                                        Rng& rng) {
  std::vector<MaskSample> out;
  out.reserve(batch.size());
  for (const TrainExample* ex : batch) {
    auto it = stats.find(ex->cell_type);
    require(it != stats.end(), ErrorCode::insufficient_data,
            "no control statistics for cell type " + std::to_string(ex->cell_type));
    out.push_back({ex, data::noisy_control(it->second, rng)});
  }
  return out;
}

double mask_batch_loss(const MaskModel& model, std::span<const MaskSample> batch, nn::Gradients* grads) {
  require(!batch.empty(), ErrorCode::argument, "mask batch is empty");
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& s : batch) {
    const Matrix target = (s.example->x0.array() != 0.0).cast<double>().matrix();
    nn::Tape tape(model.params());
    nn::Var prob = model.forward(tape, s.example->cell_type, s.ctrl, s.example->perturbation);
    nn::Var loss = tape.bce(prob, target, kProbClamp);
    total += tape.value(loss)(0, 0);
    if (grads) tape.backward(loss, *grads, weight);
  }
  return total * weight;
}

double mask_train_step(MaskModel& model, std::span<const TrainExample* const> batch, const ControlStatsMap& stats,
                       Rng& rng, nn::AdamState& opt) {
  const auto drawn = draw_mask_batch(batch, stats, rng);
  nn::Gradients grads(model.params());
  const double loss = mask_batch_loss(model, drawn, &grads);
  nn::adam_step(model.params(), grads, opt);
  require(model.params().all_finite(), ErrorCode::numeric, "mask parameters became non-finite");
  return loss;
}

std::vector<double> train_mask_model(MaskModel& model, const data::ExpressionDataset& train, const TrainOptions& opts,
                                     Rng& rng) {
  require(opts.batch >= 1, ErrorCode::argument, "batch size must be >= 1");
  require(train.n_cells() > 0, ErrorCode::insufficient_data, "training set is empty");
  require(train.n_genes() == model.arch().n_genes, ErrorCode::argument, "training data gene count mismatch");
  const auto examples = training_examples(train);
  const ControlStatsMap stats = data::control_stats_by_type(train);
  nn::AdamState opt = nn::AdamState::for_params(model.params(), opts.lr);
  std::vector<double> curve;
  curve.reserve(opts.steps);
  std::vector<const TrainExample*> batch(opts.batch);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    for (auto& b : batch) b = &examples[uniform_index(rng, examples.size())];
    curve.push_back(mask_train_step(model, batch, stats, rng, opt));
    if (opts.on_step) opts.on_step(step, curve.back());
  }
  return curve;
}

MaskPrediction mask_predict(const MaskModel& model, std::span<const Vector> control_samples, int cell_type,
                            const data::PerturbationCondition& p, double tau, double fraction) {
  require(!control_samples.empty(), ErrorCode::argument, "mask_predict: need at least one control sample");
  require(tau > 0.0 && tau < 1.0, ErrorCode::argument, "mask_predict: tau must be in (0, 1)");
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::argument, "mask_predict: fraction must be in (0, 1]");
  const auto n = static_cast<Eigen::Index>(model.arch().n_genes);
  MaskPrediction out;
  out.prob = Vector::Zero(n);
  out.agg_count = Eigen::VectorXi::Zero(n);
  for (const auto& ctrl : control_samples) {
    const Vector prob = model.mask_forward(cell_type, ctrl, p);
    out.prob += prob;
    for (Eigen::Index j = 0; j < n; ++j) out.agg_count[j] += prob[j] >= tau ? 1 : 0;
  }
  const auto k = static_cast<double>(control_samples.size());
  out.prob /= k;
  const int needed = static_cast<int>(std::ceil(fraction * k - 1e-12));
  out.binary = (out.agg_count.array() >= needed).cast<double>().matrix();
  return out;
}

}  // namespace unlasting::model
