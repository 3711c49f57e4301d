#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

namespace unlasting::pipeline {

namespace fs = std::filesystem;
using data::Vector;

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

void shuffle(std::vector<std::string>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create directory '" + dir + "': " + ec.message());
}

std::set<std::string> used_conditions(const ExpressionDataset& ds) {
  return {ds.condition_id.begin(), ds.condition_id.end()};
}

}  // namespace

std::pair<ExpressionDataset, ExpressionDataset> make_split(const ExpressionDataset& ds, const config::SplitSpec& spec) {
  const auto used = used_conditions(ds);
  std::vector<std::string> knockouts;
  std::vector<std::string> molecules;
  for (const auto& id : used) {
    const auto& p = ds.conditions.at(id);
    if (data::is_knockout(p)) knockouts.push_back(id);
    if (data::is_molecule(p)) molecules.push_back(id);
  }
  require(knockouts.size() + molecules.size() >= 2, ErrorCode::argument,
          "split needs at least 2 perturbation conditions");

  std::set<std::string> test_ids;
  switch (spec.mode) {
    case config::SplitSpec::Mode::holdout_perturbations: {
      require(spec.fraction > 0.0 && spec.fraction < 1.0, ErrorCode::argument, "split fraction must be in (0, 1)");
      Rng rng = derive_rng(spec.seed, 0x73706c6974);
      for (auto* group : {&knockouts, &molecules}) {
        shuffle(*group, rng);
        const auto n_train = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(group->size())));
        for (std::size_t k = n_train; k < group->size(); ++k) test_ids.insert((*group)[k]);
      }
      break;
    }
    case config::SplitSpec::Mode::holdout_ood_list:
      require(!spec.conditions.empty(), ErrorCode::argument, "holdout_ood_list needs condition ids");
      for (const auto& id : spec.conditions) {
        require(used.count(id) == 1, ErrorCode::argument, "holdout condition '" + id + "' has no cells");
        require(!data::is_control(ds.conditions.at(id)), ErrorCode::argument, "control cannot be held out");
        test_ids.insert(id);
      }
      break;
    case config::SplitSpec::Mode::holdout_doses:
      require(!spec.doses.empty(), ErrorCode::argument, "holdout_doses needs dose values");
      for (const auto& id : molecules) {
        const double dose = std::get<data::Molecule>(ds.conditions.at(id)).dose;
        if (std::find(spec.doses.begin(), spec.doses.end(), dose) != spec.doses.end()) test_ids.insert(id);
      }
      break;
  }
  require(!test_ids.empty(), ErrorCode::argument, "split leaves no test conditions");

  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (std::size_t i = 0; i < ds.n_cells(); ++i) {
    (test_ids.count(ds.condition_id[i]) ? test_rows : train_rows).push_back(i);
  }
  return {ds.subset(train_rows), ds.subset(test_rows)};
}

void simulate_to_dir(const data::SimConfig& sim, std::uint64_t seed, const std::string& out_dir) {
  ensure_dir(out_dir);
  Rng rng = derive_rng(seed, 0x73696d);
  const auto result = data::simulate_dataset(sim, rng);
  io::save_dataset(result.dataset, path_in(out_dir, "raw.csv"), path_in(out_dir, "conditions.json"));
  io::json truth = io::truth_to_json(result.truth, result.dataset.gene_names);
  truth["sim_config"] = io::sim_config_to_json(sim);
  truth["seed"] = seed;
  io::write_text_file(path_in(out_dir, "truth.json"), truth.dump(2) + "\n");
  io::write_text_file(path_in(out_dir, "true_grn.csv"), io::matrix_csv(result.truth.true_grn.cast<double>()));
}

double max_value(const ExpressionDataset& ds) {
  require(ds.n_cells() > 0, ErrorCode::insufficient_data, "cannot take the maximum of an empty dataset");
  const double m = ds.values.maxCoeff();
  require(m > 0.0, ErrorCode::invalid_data, "dataset maximum must be positive");
  return m;
}

Preprocessed preprocess(const ExpressionDataset& raw, const RunConfig& cfg, const std::optional<Eigen::MatrixXi>& prior) {
  raw.validate();
  ExpressionDataset logged = data::log1p_normalize(raw);
  Preprocessed out;
  if (cfg.n_top_genes > 0 && cfg.n_top_genes < logged.n_genes()) {
    auto sel = data::select_hvg(logged, cfg.n_top_genes);
    logged = std::move(sel.dataset);
    out.kept_genes = std::move(sel.kept_indices);
  } else {
    out.kept_genes.resize(logged.n_genes());
    for (std::size_t j = 0; j < logged.n_genes(); ++j) out.kept_genes[j] = j;
  }
  if (prior) {
    require(static_cast<std::size_t>(prior->rows()) == raw.n_genes() && prior->cols() == prior->rows(),
            ErrorCode::argument, "prior adjacency must be genes x genes of the raw data");
    Eigen::MatrixXi sub(static_cast<Eigen::Index>(out.kept_genes.size()), static_cast<Eigen::Index>(out.kept_genes.size()));
    for (std::size_t a = 0; a < out.kept_genes.size(); ++a)
      for (std::size_t b = 0; b < out.kept_genes.size(); ++b)
        sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            (*prior)(static_cast<Eigen::Index>(out.kept_genes[a]), static_cast<Eigen::Index>(out.kept_genes[b]));
    out.prior = sub;
  }
  auto [train, test] = make_split(logged, cfg.split);
  if (cfg.scale_source == "train") {
    out.x_max = max_value(train);
  } else if (cfg.scale_source == "test") {
    out.x_max = max_value(test);
  } else {
    out.x_max = max_value(logged);
  }
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

void write_preprocessed(const Preprocessed& p, const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  io::save_dataset(p.train, path_in(out_dir, "train.csv"), path_in(out_dir, "conditions.json"));
  io::save_dataset(p.test, path_in(out_dir, "test.csv"));
  if (p.prior) io::write_text_file(path_in(out_dir, "prior.csv"), io::matrix_csv(p.prior->cast<double>()));
  const auto train_ids = used_conditions(p.train);
  const auto test_ids = used_conditions(p.test);
  io::json meta = {{"x_max", p.x_max},
                   {"scale_source", cfg.scale_source},
                   {"kept_genes", p.kept_genes},
                   {"gene_names", p.train.gene_names},
                   {"train_conditions", std::vector<std::string>(train_ids.begin(), train_ids.end())},
                   {"test_conditions", std::vector<std::string>(test_ids.begin(), test_ids.end())},
                   {"config_hash", config::hash_hex(config::config_hash(cfg))}};
  io::write_text_file(path_in(out_dir, "meta.json"), meta.dump(2) + "\n");
}

grn::Grn build_grn(const ExpressionDataset& ds, const std::optional<Eigen::MatrixXi>& prior, double eps_co) {
  return grn::build_grn(grn::pearson_matrix(ds.values), prior, eps_co);
}

namespace {

std::size_t cell_type_count(const ExpressionDataset& ds) {
  const auto types = ds.cell_types();
  require(!types.empty(), ErrorCode::insufficient_data, "dataset has no cells");
  return static_cast<std::size_t>(types.back()) + 1;
}

void store_meta(nn::Checkpoint& ck, double x_max, std::uint64_t hash) {
  ck.add_scalar("meta.x_max", x_max);
  ck.add_scalar("meta.config_hash_hi", static_cast<double>(hash >> 32));
  ck.add_scalar("meta.config_hash_lo", static_cast<double>(hash & 0xffffffffULL));
}

std::uint64_t restore_hash(const nn::Checkpoint& ck) {
  return (static_cast<std::uint64_t>(ck.scalar("meta.config_hash_hi")) << 32) |
         static_cast<std::uint64_t>(ck.scalar("meta.config_hash_lo"));
}

model::TrainOptions train_options(std::size_t steps, std::size_t batch, double lr, bool masked, const Progress& p) {
  model::TrainOptions o;
  o.steps = steps;
  o.batch = batch;
  o.lr = lr;
  o.masked = masked;
  o.on_step = p;
  return o;
}

}  // namespace

TrainedDenoiser train_denoiser(const RunConfig& cfg, const ExpressionDataset& train, const grn::Grn& graph,
                               double x_max, const Progress& progress) {
  cfg.validate();
  const auto arch = cfg.arch(train.n_genes(), train.molecule_dim(), cell_type_count(train));
  TrainedDenoiser out{model::Denoiser(arch, graph, {cfg.no_ctrl_stats, cfg.no_grn}, cfg.seed), x_max,
                      config::config_hash(cfg)};
  const ExpressionDataset scaled = data::scale_unit(train, x_max);
  const auto sched = diffusion::make_schedule(cfg.T);
  Rng rng = derive_rng(cfg.seed, 1);
  model::train_denoiser(out.model, scaled, sched, train_options(cfg.train_steps, cfg.batch, cfg.lr, !cfg.no_mask, progress),
                        rng);
  return out;
}

TrainedMask train_mask(const RunConfig& cfg, const ExpressionDataset& train, const grn::Grn& graph, double x_max,
                       const Progress& progress) {
  cfg.validate();
  const auto arch = cfg.arch(train.n_genes(), train.molecule_dim(), cell_type_count(train));
  TrainedMask out{model::MaskModel(arch, graph, cfg.seed), x_max, config::config_hash(cfg)};
  const ExpressionDataset scaled = data::scale_unit(train, x_max);
  Rng rng = derive_rng(cfg.seed, 2);
  model::train_mask_model(out.model, scaled,
                          train_options(cfg.mask_train_steps, cfg.batch, cfg.mask_lr, true, progress), rng);
  return out;
}

nn::Checkpoint to_checkpoint(const TrainedDenoiser& d) {
  nn::Checkpoint ck = d.model.to_checkpoint();
  store_meta(ck, d.x_max, d.config_hash);
  return ck;
}

nn::Checkpoint to_checkpoint(const TrainedMask& m) {
  nn::Checkpoint ck = m.model.to_checkpoint();
  store_meta(ck, m.x_max, m.config_hash);
  return ck;
}

TrainedDenoiser denoiser_from_checkpoint(const nn::Checkpoint& ck) {
  return {model::Denoiser::from_checkpoint(ck), ck.scalar("meta.x_max"), restore_hash(ck)};
}

TrainedMask mask_from_checkpoint(const nn::Checkpoint& ck) {
  return {model::MaskModel::from_checkpoint(ck), ck.scalar("meta.x_max"), restore_hash(ck)};
}

ExpressionDataset predict(const RunConfig& cfg, const TrainedDenoiser& denoiser, const TrainedMask* mask,
                          const ExpressionDataset& targets, const ExpressionDataset& controls) {
  cfg.validate();
  const std::size_t n_genes = denoiser.model.arch().n_genes;
  require(targets.n_genes() == n_genes && controls.n_genes() == n_genes, ErrorCode::argument,
          "prediction inputs do not match the model's gene count");
  require(cfg.no_mask || mask != nullptr, ErrorCode::argument, "a trained mask model is required unless no_mask is set");
  if (mask && !cfg.no_mask) {
    require(mask->model.arch().n_genes == n_genes, ErrorCode::argument, "mask model gene count mismatch");
  }
  const double x_max = denoiser.x_max;
  const auto sched = diffusion::make_schedule(denoiser.model.arch().diffusion_steps);
  model::PredictOptions opts;
  opts.sampler.num_steps = cfg.ddim_substeps;
  opts.random_latent = cfg.random_latent;
  opts.clamp = cfg.clamp_output;

  std::map<int, std::vector<std::size_t>> pool;
  for (std::size_t i = 0; i < controls.n_cells(); ++i) {
    if (controls.is_control_cell(i)) pool[controls.cell_type[i]].push_back(i);
  }
  std::map<std::pair<std::string, int>, std::size_t> groups;
  for (std::size_t i = 0; i < targets.n_cells(); ++i) {
    if (!targets.is_control_cell(i)) ++groups[{targets.condition_id[i], targets.cell_type[i]}];
  }

  ExpressionDataset out;
  out.gene_names = targets.gene_names;
  out.conditions = targets.conditions;
  std::size_t total = 0;
  for (const auto& [key, n] : groups) total += n;
  out.values.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(n_genes));

  Rng rng = derive_rng(cfg.seed, 3);
  std::size_t row = 0;
  for (const auto& [key, n] : groups) {
    const auto& [condition_id, cell_type] = key;
    auto it = pool.find(cell_type);
    require(it != pool.end() && !it->second.empty(), ErrorCode::insufficient_data,
            "no control cells of cell type " + std::to_string(cell_type) + " to bridge from");
    const auto& perturbation = targets.conditions.at(condition_id);
    auto scaled_control = [&](std::size_t idx) -> Vector {
      return controls.values.row(static_cast<Eigen::Index>(idx)).transpose() / x_max;
    };

    Vector keep;
    const Vector* keep_ptr = nullptr;
    if (!cfg.no_mask) {
      std::vector<std::size_t> picks = it->second;
      shuffle(picks, rng);
      picks.resize(std::min(cfg.mask_samples, picks.size()));
      std::vector<Vector> samples;
      for (auto idx : picks) samples.push_back(scaled_control(idx));
      keep = model::mask_predict(mask->model, samples, cell_type, perturbation, cfg.tau, cfg.mask_fraction).binary;
      keep_ptr = &keep;
    }

    std::vector<std::size_t> order = it->second;
    shuffle(order, rng);
    for (std::size_t k = 0; k < n; ++k) {
      const Vector x_c = scaled_control(order[k % order.size()]);
      out.values.row(static_cast<Eigen::Index>(row)) =
          model::predict(denoiser.model, keep_ptr, x_c, cell_type, perturbation, opts, sched, x_max, &rng).transpose();
      out.cell_type.push_back(cell_type);
      out.condition_id.push_back(condition_id);
      ++row;
    }
  }
  return out;
}

data::Matrix rows_of(const ExpressionDataset& ds, const std::string& condition_id, std::optional<int> cell_type) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.n_cells(); ++i) {
    if (ds.condition_id[i] == condition_id && (!cell_type || ds.cell_type[i] == *cell_type)) rows.push_back(i);
  }
  return ds.subset(rows).values;
}

data::Matrix control_rows(const ExpressionDataset& ds, std::optional<int> cell_type) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.n_cells(); ++i) {
    if (ds.is_control_cell(i) && (!cell_type || ds.cell_type[i] == *cell_type)) rows.push_back(i);
  }
  return ds.subset(rows).values;
}

Evaluation evaluate(const ExpressionDataset& pred, const ExpressionDataset& truth, const ExpressionDataset& control) {
  require(pred.n_genes() == truth.n_genes() && truth.n_genes() == control.n_genes(), ErrorCode::argument,
          "evaluate: gene counts differ");
  require(pred.gene_names == truth.gene_names, ErrorCode::argument, "evaluate: gene names differ");
  data::Matrix ctrl = control_rows(control);
  if (ctrl.rows() == 0) ctrl = control.values;  // a file holding only control cells without a registry entry
  require(ctrl.rows() > 0, ErrorCode::insufficient_data, "evaluate: no control cells");

  Evaluation e;
  e.gene_names = pred.gene_names;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < pred.n_cells(); ++i) {
    if (!pred.is_control_cell(i)) ids.insert(pred.condition_id[i]);
  }
  require(!ids.empty(), ErrorCode::insufficient_data, "evaluate: no perturbed predictions");
  for (const auto& id : ids) {
    const data::Matrix p = rows_of(pred, id);
    const data::Matrix t = rows_of(truth, id);
    require(t.rows() > 0, ErrorCode::invalid_data, "evaluate: no ground truth cells for '" + id + "'");
    e.conditions.push_back({id, static_cast<std::size_t>(p.rows()), static_cast<std::size_t>(t.rows()),
                            metrics::evaluate(p, t, ctrl)});
  }
  return e;
}

io::json report_json(const Evaluation& e, const std::optional<std::uint64_t>& config_hash) {
  io::json conditions = io::json::array();
  std::map<std::string, std::pair<double, double>> sums;
  std::vector<std::string> labels;
  for (const auto& c : e.conditions) {
    io::json entry = {{"condition_id", c.condition_id}, {"n_pred", c.n_pred}, {"n_truth", c.n_truth}};
    for (const auto& s : c.report.subsets) {
      io::json block = {{"e_distance", s.e_distance}, {"emd", s.emd}};
      if (s.label != "all") {
        std::vector<std::string> names;
        for (auto g : s.genes) names.push_back(e.gene_names[g]);
        block["genes"] = names;
      }
      entry[s.label] = block;
      if (!sums.count(s.label)) labels.push_back(s.label);
      sums[s.label].first += s.e_distance;
      sums[s.label].second += s.emd;
    }
    conditions.push_back(entry);
  }
  io::json mean = io::json::object();
  const double n = static_cast<double>(e.conditions.size());
  for (const auto& label : labels) {
    mean[label] = {{"e_distance", sums[label].first / n}, {"emd", sums[label].second / n}};
  }
  io::json out = {{"de_source", "truth"}, {"conditions", conditions}, {"mean", mean}};
  if (config_hash) out["config_hash"] = config::hash_hex(*config_hash);
  return out;
}

std::string per_gene_csv(const Evaluation& e) {
  std::string out = "condition_id,gene,emd\n";
  for (const auto& c : e.conditions) {
    for (Eigen::Index g = 0; g < c.report.per_gene_emd.size(); ++g) {
      out += c.condition_id + "," + e.gene_names[static_cast<std::size_t>(g)] + "," +
             io::format_double(c.report.per_gene_emd[g]) + "\n";
    }
  }
  return out;
}

}  // namespace unlasting::pipeline
