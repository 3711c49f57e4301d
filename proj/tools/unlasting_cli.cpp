// unlasting-cli: simulate, preprocess, build-grn, train, train-mask, predict, evaluate.
// Talks to the library only through the C interface.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "unlasting/unlasting.h"

namespace {

namespace fs = std::filesystem;

// Non-zero status from the library: report and exit 1.
struct Failure {
  unl_status status;
};

void check(unl_status s) {
  if (s != UNL_OK) throw Failure{s};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};

using Config = std::unique_ptr<unl_config, Deleter<unl_config, unl_config_free>>;
using Dataset = std::unique_ptr<unl_dataset, Deleter<unl_dataset, unl_dataset_free>>;
using GrnHandle = std::unique_ptr<unl_grn, Deleter<unl_grn, unl_grn_free>>;
using Denoiser = std::unique_ptr<unl_denoiser, Deleter<unl_denoiser, unl_denoiser_free>>;
using MaskModel = std::unique_ptr<unl_mask_model, Deleter<unl_mask_model, unl_mask_model_free>>;

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { unl_string_free(p); }
};

Config load_config(const std::string& path) {
  unl_config* c = nullptr;
  check(path.empty() ? unl_config_new(&c) : unl_config_load(path.c_str(), &c));
  return Config(c);
}

std::string beside(const std::string& file, const std::string& name) {
  return (fs::path(file).parent_path() / name).string();
}

Dataset load_data(const std::string& csv, const std::string& conditions, const std::string& molecules = {}) {
  unl_dataset* d = nullptr;
  const std::string reg = conditions.empty() ? beside(csv, "conditions.json") : conditions;
  check(unl_dataset_load(csv.c_str(), reg.c_str(), molecules.empty() ? nullptr : molecules.c_str(), &d));
  return Dataset(d);
}

const char* or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

void write_file(const std::string& path, const char* text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) {
    std::fprintf(stderr, "error: cannot write '%s'\n", path.c_str());
    throw Failure{UNL_ERR_IO};
  }
}

struct LogEvery {
  std::size_t every = 0;
  const char* what = "";
};

void log_progress(std::size_t step, double loss, void* user) {
  const auto* l = static_cast<const LogEvery*>(user);
  if (l->every > 0 && (step + 1) % l->every == 0) {
    std::fprintf(stderr, "%s step %zu loss %.6f\n", l->what, step + 1, loss);
  }
}

double resolve_x_max(const std::string& meta, const std::string& data_path, const unl_dataset* ds) {
  const std::string path = meta.empty() ? beside(data_path, "meta.json") : meta;
  double x_max = 0.0;
  if (fs::exists(path)) {
    check(unl_read_x_max(path.c_str(), &x_max));
  } else {
    check(unl_dataset_max(ds, &x_max));
  }
  return x_max;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-cell perturbation response prediction with dual diffusion bridges"};
  app.require_subcommand(1);

  std::string config_path, data_path, conditions_path, molecules_path, prior_path, out_path, out_dir;
  std::string grn_path, meta_path, model_path, mask_path, control_path, pred_path, truth_path, per_gene_path;
  std::uint64_t seed = 0;
  double eps_co = NAN;
  std::size_t log_every = 0;
  bool no_mask = false;
  bool random_latent = false;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic benchmark dataset");
  sim->add_option("--config", config_path, "Simulator config JSON")->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "Random seed");
  sim->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "log1p, gene selection and condition-level split");
  pre->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  pre->add_option("--data", data_path, "Raw expression CSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--conditions", conditions_path, "Condition registry (default: beside data)");
  pre->add_option("--molecules", molecules_path, "Molecule embedding CSV");
  pre->add_option("--prior", prior_path, "Prior adjacency CSV over the raw genes")->check(CLI::ExistingFile);
  pre->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* bg = app.add_subcommand("build-grn", "Co-expression GRN with optional prior");
  bg->add_option("--config", config_path, "Run config JSON (eps_co)")->check(CLI::ExistingFile);
  bg->add_option("--data", data_path, "Expression CSV (log1p)")->required()->check(CLI::ExistingFile);
  bg->add_option("--conditions", conditions_path, "Condition registry (default: beside data)");
  bg->add_option("--prior", prior_path, "Prior adjacency CSV")->check(CLI::ExistingFile);
  bg->add_option("--eps-co", eps_co, "Correlation threshold, overrides the config");
  bg->add_option("--out", out_path, "Adjacency CSV")->required();

  auto* tr = app.add_subcommand("train", "Train the conditional denoiser");
  auto* tm = app.add_subcommand("train-mask", "Train the expression mask model");
  for (auto* sc : {tr, tm}) {
    sc->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
    sc->add_option("--data", data_path, "Training expression CSV (log1p)")->required()->check(CLI::ExistingFile);
    sc->add_option("--conditions", conditions_path, "Condition registry (default: beside data)");
    sc->add_option("--grn", grn_path, "Adjacency CSV")->required()->check(CLI::ExistingFile);
    sc->add_option("--meta", meta_path, "meta.json holding x_max (default: beside data)");
    sc->add_option("--out", out_path, "Checkpoint path")->required();
    sc->add_option("--log-every", log_every, "Print the loss every N steps (0: silent)");
  }

  auto* pr = app.add_subcommand("predict", "Bridge control cells to perturbed predictions");
  pr->add_option("--config", config_path, "Run config JSON")->check(CLI::ExistingFile);
  pr->add_option("--model", model_path, "Denoiser checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--mask", mask_path, "Mask model checkpoint")->check(CLI::ExistingFile);
  pr->add_flag("--no-mask", no_mask, "Skip the expression mask");
  pr->add_flag("--random-latent", random_latent, "Decode from Gaussian noise instead of encoded controls");
  pr->add_option("--data", data_path, "Cells to predict (condition, cell type)")->required()->check(CLI::ExistingFile);
  pr->add_option("--control", control_path, "Expression CSV holding control cells")->required()->check(CLI::ExistingFile);
  pr->add_option("--conditions", conditions_path, "Condition registry (default: beside data)");
  pr->add_option("--out", out_path, "Prediction CSV")->required();

  auto* ev = app.add_subcommand("evaluate", "E-distance and EMD report");
  ev->add_option("--pred", pred_path, "Predicted expression CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--truth", truth_path, "Ground-truth expression CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--control", control_path, "Control expression CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--conditions", conditions_path, "Condition registry (default: beside truth)");
  ev->add_option("--config", config_path, "Run config JSON (hash recorded)")->check(CLI::ExistingFile);
  ev->add_option("--out", out_path, "Report JSON")->required();
  ev->add_option("--per-gene", per_gene_path, "Per-gene EMD CSV (default: <out>.genes.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      check(unl_simulate(or_null(config_path), seed, out_dir.c_str()));
    } else if (pre->parsed()) {
      const Config cfg = load_config(config_path);
      const Dataset raw = load_data(data_path, conditions_path, molecules_path);
      check(unl_preprocess(cfg.get(), raw.get(), or_null(prior_path), out_dir.c_str()));
    } else if (bg->parsed()) {
      if (std::isnan(eps_co)) {
        const Config cfg = load_config(config_path);
        OwnedString js;
        check(unl_config_to_json(cfg.get(), &js.p));
        eps_co = nlohmann::json::parse(js.p).at("eps_co").get<double>();
      }
      const Dataset ds = load_data(data_path, conditions_path);
      unl_grn* g = nullptr;
      check(unl_grn_build(ds.get(), or_null(prior_path), eps_co, &g));
      const GrnHandle grn(g);
      check(unl_grn_save(grn.get(), out_path.c_str()));
    } else if (tr->parsed() || tm->parsed()) {
      const Config cfg = load_config(config_path);
      const Dataset ds = load_data(data_path, conditions_path);
      unl_grn* g = nullptr;
      check(unl_grn_load(grn_path.c_str(), &g));
      const GrnHandle grn(g);
      const double x_max = resolve_x_max(meta_path, data_path, ds.get());
      if (tr->parsed()) {
        LogEvery log{log_every, "train"};
        unl_denoiser* d = nullptr;
        check(unl_denoiser_train(cfg.get(), ds.get(), grn.get(), x_max, log_progress, &log, &d));
        const Denoiser model(d);
        check(unl_denoiser_save(model.get(), out_path.c_str()));
      } else {
        LogEvery log{log_every, "train-mask"};
        unl_mask_model* m = nullptr;
        check(unl_mask_model_train(cfg.get(), ds.get(), grn.get(), x_max, log_progress, &log, &m));
        const MaskModel model(m);
        check(unl_mask_model_save(model.get(), out_path.c_str()));
      }
    } else if (pr->parsed()) {
      const Config cfg = load_config(config_path);
      if (no_mask) check(unl_config_set_flag(cfg.get(), "no_mask", 1));
      if (random_latent) check(unl_config_set_flag(cfg.get(), "random_latent", 1));
      const std::string reg = conditions_path.empty() ? beside(data_path, "conditions.json") : conditions_path;
      const Dataset targets = load_data(data_path, reg);
      const Dataset controls = load_data(control_path, reg);
      unl_denoiser* d = nullptr;
      check(unl_denoiser_load(model_path.c_str(), &d));
      const Denoiser model(d);
      MaskModel mask;
      if (!mask_path.empty() && !no_mask) {
        unl_mask_model* m = nullptr;
        check(unl_mask_model_load(mask_path.c_str(), &m));
        mask.reset(m);
      }
      unl_dataset* out = nullptr;
      check(unl_predict(cfg.get(), model.get(), mask.get(), targets.get(), controls.get(), &out));
      const Dataset pred(out);
      check(unl_dataset_save(pred.get(), out_path.c_str(), nullptr));
    } else if (ev->parsed()) {
      const std::string reg = conditions_path.empty() ? beside(truth_path, "conditions.json") : conditions_path;
      const Dataset pred = load_data(pred_path, reg);
      const Dataset truth = load_data(truth_path, reg);
      const Dataset control = load_data(control_path, reg);
      Config cfg;
      if (!config_path.empty()) cfg = load_config(config_path);
      OwnedString report, genes;
      check(unl_evaluate(pred.get(), truth.get(), control.get(), cfg.get(), &report.p, &genes.p));
      write_file(out_path, report.p);
      write_file(per_gene_path.empty() ? out_path + ".genes.csv" : per_gene_path, genes.p);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", unl_status_name(f.status), unl_last_error());
    return 1;
  }
  return 0;
}
