#include "denoiser.hpp"

#include <cmath>
#include <limits>

namespace unlasting::model {
namespace {
constexpr double kMinSpread = 1e-2;
}  // namespace

Vector time_features(std::size_t t, std::size_t T, std::size_t dim) {
  require(T >= 1 && t <= T, ErrorCode::argument, "time step outside [0, T]");
  const std::size_t half = dim / 2;
  const double s = 1000.0 * static_cast<double>(t) / static_cast<double>(T);
  Vector f(static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(1e4) * static_cast<double>(k) / static_cast<double>(half));
    f[static_cast<Eigen::Index>(k)] = std::sin(s * w);
    f[static_cast<Eigen::Index>(half + k)] = std::cos(s * w);
  }
  return f;
}

Denoiser::Denoiser(const ArchConfig& arch, grn::Grn graph, DenoiserFlags flags, std::uint64_t seed)
    : arch_(arch), graph_(std::move(graph)), identity_(grn::Grn::identity(arch.n_genes)), flags_(flags) {
  arch_.validate();
  alpha_bar_ = diffusion::make_schedule(arch_.diffusion_steps).alpha_bar;
  data_mean_ = Vector::Zero(static_cast<Eigen::Index>(arch_.n_genes));
  data_spread_ = Vector::Constant(static_cast<Eigen::Index>(arch_.n_genes), 0.5);
  require(graph_.size() == arch_.n_genes, ErrorCode::argument, "GRN size does not match gene count");
  Rng rng = derive_rng(seed, 0x64656e6f);
  const auto td = static_cast<Eigen::Index>(arch_.time_dim);
  const auto cd = static_cast<Eigen::Index>(arch_.cell_dim);
  const auto n = static_cast<Eigen::Index>(arch_.n_genes);
  const auto h = static_cast<Eigen::Index>(arch_.hidden);
  const auto db = static_cast<Eigen::Index>(arch_.block_dim);
  time_dense_ = nn::add_dense(params_, "time", td, td, nn::Activation::silu, rng);
  cell_table_ = params_.add("cell_emb", nn::normal_matrix(static_cast<Eigen::Index>(arch_.n_cell_types), cd, 0.02, rng));
  block_ = add_gene_block(params_, "gene", arch_, arch_.time_dim + arch_.cell_dim, true, rng);
  body_ = nn::add_mlp(params_, "block", n + td + cd, h, db, arch_.mlp_depth, rng);
  decoder_ = nn::add_mlp(params_, "decoder", db + n + td + cd, h, n, arch_.mlp_depth, rng);
}

void Denoiser::set_data_stats(const Vector& mean, const Vector& spread) {
  const auto n = static_cast<Eigen::Index>(arch_.n_genes);
  require(mean.size() == n && spread.size() == n, ErrorCode::argument, "data statistics length mismatch");
  require(mean.allFinite() && spread.allFinite() && (spread.array() > 0.0).all(), ErrorCode::argument,
          "data spread must be positive and finite");
  data_mean_ = mean;
  data_spread_ = spread;
}

Denoiser::Precondition Denoiser::precondition(std::size_t t) const {
  require(t <= arch_.diffusion_steps, ErrorCode::argument, "time step outside [0, T]");
  const double a = alpha_bar_[static_cast<Eigen::Index>(t)];
  const Eigen::ArrayXd s2 = data_spread_.array().square();
  const Eigen::ArrayXd total = a * s2 + (1.0 - a);
  return {(std::sqrt(a) * s2 / total).matrix(), (((1.0 - a) / total).sqrt() * data_spread_.array()).matrix(),
          total.rsqrt().matrix(), std::sqrt(a) * data_mean_};
}

nn::Var Denoiser::context(nn::Tape& tape, std::size_t t, int cell_type) const {
  nn::Var te = nn::apply(tape, time_dense_,
                         row_constant(tape, time_features(t, arch_.diffusion_steps, arch_.time_dim)));
  nn::Var ce = cell_embedding(tape, cell_table_, arch_, cell_type);
  return tape.concat_cols({te, ce});
}

const grn::Grn& Denoiser::graph_for(const Conditioning& cond) const {
  return flags_.no_grn && data::is_molecule(cond.perturbation) ? identity_ : graph_;
}

nn::Var Denoiser::forward(nn::Tape& tape, const Vector& x_t, std::size_t t, const Conditioning& cond) const {
  require(x_t.size() == static_cast<Eigen::Index>(arch_.n_genes), ErrorCode::argument, "x_t length mismatch");
  const Precondition pc = precondition(t);
  const Vector centred = x_t - pc.offset;
  const Vector x_in = pc.in.cwiseProduct(centred);
  nn::Var ctx = context(tape, t, cond.cell_type);
  nn::Var embedded = condition_embed_tape(tape, x_in, cond, ctx);
  nn::Var fgw = grn_readout(tape, block_, embedded, graph_for(cond));
  nn::Var body = nn::apply(tape, body_, tape.concat_cols({row_constant(tape, x_in), ctx}));
  nn::Var out = nn::apply(tape, decoder_, tape.concat_cols({body, tape.transpose(fgw), ctx}));
  return tape.add(col_constant(tape, data_mean_ + pc.skip.cwiseProduct(centred)),
                  tape.scale_rows(tape.transpose(out), pc.out));
}

nn::Var Denoiser::condition_embed_tape(nn::Tape& tape, const Vector& x_t, const Conditioning& cond, nn::Var ctx) const {
  return model::condition_embed(tape, block_, arch_, cond, ctx, &x_t, embed_options());
}

Vector Denoiser::denoise(const Vector& x_t, std::size_t t, const Conditioning& cond) const {
  nn::Tape tape(params_);
  return tape.value(forward(tape, x_t, t, cond)).col(0);
}

Matrix Denoiser::condition_embed(const Vector& x_t, std::size_t t, const Conditioning& cond) const {
  nn::Tape tape(params_);
  nn::Var ctx = context(tape, t, cond.cell_type);
  const Precondition pc = precondition(t);
  return tape.value(condition_embed_tape(tape, pc.in.cwiseProduct(x_t - pc.offset), cond, ctx));
}

Vector Denoiser::grn_block(const Matrix& embedded, const Conditioning& cond) const {
  require(embedded.rows() == static_cast<Eigen::Index>(arch_.n_genes) &&
              embedded.cols() == static_cast<Eigen::Index>(arch_.gene_dim),
          ErrorCode::argument, "grn_block: embedding shape mismatch");
  nn::Tape tape(params_);
  return tape.value(grn_readout(tape, block_, tape.constant(embedded), graph_for(cond))).col(0);
}

diffusion::DenoiserFn Denoiser::as_fn(const Conditioning& cond) const {
  return [this, cond](const Vector& x_t, std::size_t t) { return denoise(x_t, t, cond); };
}

nn::Checkpoint Denoiser::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.add_scalar("meta.kind", 1.0);
  arch_.store(ck);
  ck.add_scalar("flags.no_ctrl_stats", flags_.no_ctrl_stats ? 1.0 : 0.0);
  ck.add_scalar("flags.no_grn", flags_.no_grn ? 1.0 : 0.0);
  ck.add_matrix("precond.mean", data_mean_);
  ck.add_matrix("precond.spread", data_spread_);
  store_grn(ck, graph_);
  ck.add_params(params_);
  return ck;
}

Denoiser Denoiser::from_checkpoint(const nn::Checkpoint& ck) {
  require(ck.scalar("meta.kind") == 1.0, ErrorCode::format, "checkpoint does not hold a denoiser");
  DenoiserFlags flags;
  flags.no_ctrl_stats = ck.scalar("flags.no_ctrl_stats") != 0.0;
  flags.no_grn = ck.scalar("flags.no_grn") != 0.0;
  Denoiser d(ArchConfig::restore(ck), restore_grn(ck), flags, 0);
  const Matrix mean = ck.matrix("precond.mean");
  const Matrix spread = ck.matrix("precond.spread");
  require(mean.cols() == 1 && spread.cols() == 1, ErrorCode::format, "data statistics must be column vectors");
  d.set_data_stats(mean.col(0), spread.col(0));
  ck.load_params(d.params_);
  return d;
}

// ---------------------------------------------------------------------------

std::vector<TrainExample> training_examples(const data::ExpressionDataset& ds) {
  std::vector<TrainExample> out;
  out.reserve(ds.n_cells());
  for (std::size_t i = 0; i < ds.n_cells(); ++i) {
    out.push_back({ds.values.row(static_cast<Eigen::Index>(i)).transpose(), ds.cell_type[i], ds.condition_of(i)});
  }
  return out;
}

std::vector<DrawnSample> draw_batch(const Denoiser& model, std::span<const TrainExample* const> batch,
                                    const ControlStatsMap& stats, const diffusion::DiffusionSchedule& sched, Rng& rng) {
  require(sched.T == model.arch().diffusion_steps, ErrorCode::argument, "schedule length does not match the model");
  std::vector<DrawnSample> out;
  out.reserve(batch.size());
  const auto n = static_cast<Eigen::Index>(model.arch().n_genes);
  for (const TrainExample* ex : batch) {
    DrawnSample s;
    s.example = ex;
    s.t = 1 + uniform_index(rng, sched.T);
    s.eps = standard_normal_vector(rng, n);
    if (data::is_molecule(ex->perturbation) && !model.flags().no_ctrl_stats) {
      auto it = stats.find(ex->cell_type);
      require(it != stats.end(), ErrorCode::insufficient_data,
              "no control statistics for cell type " + std::to_string(ex->cell_type));
      s.ctrl = data::noisy_control(it->second, rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

double batch_loss(const Denoiser& model, std::span<const DrawnSample> batch, const diffusion::DiffusionSchedule& sched,
                  bool masked, nn::Gradients* grads, std::size_t* used) {
  std::vector<const DrawnSample*> valid;
  for (const auto& s : batch) {
    const Vector& x0 = s.example->x0;
    if (!masked || (x0.array() != 0.0).any()) valid.push_back(&s);
  }
  if (used) *used = valid.size();
  require(!valid.empty(), ErrorCode::training, "every sample in the batch has an empty expression mask");
  const double weight = 1.0 / static_cast<double>(valid.size());
  double total = 0.0;
  for (const DrawnSample* s : valid) {
    const Vector& x0 = s->example->x0;
    Conditioning cond{s->example->cell_type, s->example->perturbation, s->ctrl};
    const Vector x_t = diffusion::forward_noise(x0, s->t, s->eps, sched);
    const Matrix mask = masked ? Matrix((x0.array() != 0.0).cast<double>()) : Matrix::Ones(x0.size(), 1);
    nn::Tape tape(model.params());
    nn::Var pred = model.forward(tape, x_t, s->t, cond);
    nn::Var loss = tape.masked_mse(pred, x0, mask);
    total += tape.value(loss)(0, 0);
    if (grads) tape.backward(loss, *grads, weight);
  }
  return total * weight;
}

double train_step(Denoiser& model, std::span<const TrainExample* const> batch, const ControlStatsMap& stats,
                  const diffusion::DiffusionSchedule& sched, Rng& rng, nn::AdamState& opt, bool masked) {
  require(!batch.empty(), ErrorCode::argument, "train_step: empty batch");
  const auto drawn = draw_batch(model, batch, stats, sched, rng);
  nn::Gradients grads(model.params());
  const double loss = batch_loss(model, drawn, sched, masked, &grads);
  nn::adam_step(model.params(), grads, opt);
  require(model.params().all_finite(), ErrorCode::numeric, "parameters became non-finite");
  return loss;
}

std::vector<double> train_denoiser(Denoiser& model, const data::ExpressionDataset& train,
                                   const diffusion::DiffusionSchedule& sched, const TrainOptions& opts, Rng& rng) {
  require(opts.batch >= 1, ErrorCode::argument, "batch size must be >= 1");
  require(train.n_cells() > 0, ErrorCode::insufficient_data, "training set is empty");
  require(train.n_genes() == model.arch().n_genes, ErrorCode::argument, "training data gene count mismatch");
  {
    const Vector mean = train.values.colwise().mean().transpose();
    const Vector spread = ((train.values.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() /
                           static_cast<double>(train.n_cells()))
                              .cwiseSqrt()
                              .cwiseMax(kMinSpread);
    model.set_data_stats(mean, spread);
  }
  const auto examples = training_examples(train);
  const ControlStatsMap stats = data::control_stats_by_type(train);
  nn::AdamState opt = nn::AdamState::for_params(model.params(), opts.lr);
  std::vector<double> curve;
  curve.reserve(opts.steps);
  std::vector<const TrainExample*> batch(opts.batch);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    for (auto& b : batch) b = &examples[uniform_index(rng, examples.size())];
    double loss = 0.0;
    try {
      loss = train_step(model, batch, stats, sched, rng, opt, opts.masked);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::training) throw;
      loss = std::numeric_limits<double>::quiet_NaN();  // all-silent batch, no update
    }
    curve.push_back(loss);
    if (opts.on_step) opts.on_step(step, loss);
  }
  return curve;
}

Vector predict(const Denoiser& model, const Vector* mask, const Vector& x_control, int cell_type,
               const data::PerturbationCondition& perturbation, const PredictOptions& opts,
               const diffusion::DiffusionSchedule& sched, double x_max, Rng* rng) {
  require(x_max > 0.0 && std::isfinite(x_max), ErrorCode::argument, "predict: x_max must be positive");
  require(sched.T == model.arch().diffusion_steps, ErrorCode::argument, "schedule length does not match the model");
  const auto n = static_cast<Eigen::Index>(model.arch().n_genes);
  require(x_control.size() == n, ErrorCode::argument, "predict: control cell length mismatch");
  if (mask) require(mask->size() == n, ErrorCode::argument, "predict: mask length mismatch");

  Vector latent;
  if (opts.random_latent) {
    require(rng != nullptr, ErrorCode::argument, "predict: random latent needs an rng");
    latent = standard_normal_vector(*rng, n);
  } else {
    const Conditioning source{cell_type, data::Control{}, std::nullopt};
    latent = diffusion::ode_encode(model.as_fn(source), x_control, opts.sampler, sched);
  }
  Conditioning target{cell_type, perturbation, std::nullopt};
  if (data::is_molecule(perturbation)) target.ctrl_signal = x_control;
  Vector out = diffusion::ode_decode(model.as_fn(target), latent, opts.sampler, sched);
  if (opts.clamp) out = out.cwiseMax(0.0).cwiseMin(1.0);
  if (mask) out = out.cwiseProduct(*mask);
  return out * x_max;
}

}  // namespace unlasting::model
