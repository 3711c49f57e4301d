#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "dataset_io.hpp"

namespace unlasting::config {

const char* to_string(SplitSpec::Mode m) {
  switch (m) {
    case SplitSpec::Mode::holdout_perturbations: return "holdout_perturbations";
    case SplitSpec::Mode::holdout_ood_list: return "holdout_ood_list";
    case SplitSpec::Mode::holdout_doses: return "holdout_doses";
  }
  return "holdout_perturbations";
}

namespace {

SplitSpec::Mode mode_from_string(const std::string& s) {
  if (s == "holdout_perturbations") return SplitSpec::Mode::holdout_perturbations;
  if (s == "holdout_ood_list") return SplitSpec::Mode::holdout_ood_list;
  if (s == "holdout_doses") return SplitSpec::Mode::holdout_doses;
  fail(ErrorCode::argument, "unknown split mode '" + s + "'");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::argument, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) == 1, ErrorCode::argument, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::argument, std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  require(T >= 1, ErrorCode::argument, "T must be >= 1");
  require(ddim_substeps >= 1 && ddim_substeps <= T, ErrorCode::argument, "ddim_substeps must be in [1, T]");
  require(heads >= 1 && gat_layers >= 1, ErrorCode::argument, "heads and gat_layers must be >= 1");
  require(eps_co > 0.0 && eps_co <= 1.0, ErrorCode::argument, "eps_co must be in (0, 1]");
  require(batch >= 1, ErrorCode::argument, "batch must be >= 1");
  require(gene_dim >= 1 && block_dim >= 1 && hidden >= 1 && mlp_depth >= 1 && cell_dim >= 1, ErrorCode::argument,
          "layer widths must be >= 1");
  require(time_dim >= 2 && time_dim % 2 == 0, ErrorCode::argument, "time_dim must be even and >= 2");
  require(lr > 0.0 && mask_lr > 0.0, ErrorCode::argument, "learning rates must be positive");
  require(tau > 0.0 && tau < 1.0, ErrorCode::argument, "tau must be in (0, 1)");
  require(mask_samples >= 1, ErrorCode::argument, "mask_samples must be >= 1");
  require(mask_fraction > 0.0 && mask_fraction <= 1.0, ErrorCode::argument, "mask_fraction must be in (0, 1]");
  require(scale_source == "train" || scale_source == "all" || scale_source == "test", ErrorCode::argument,
          "scale_source must be train, all or test");
  require(split.fraction > 0.0 && split.fraction < 1.0, ErrorCode::argument, "split.fraction must be in (0, 1)");
}

model::ArchConfig RunConfig::arch(std::size_t n_genes, std::size_t mol_dim, std::size_t n_cell_types) const {
  model::ArchConfig a;
  a.n_genes = n_genes;
  a.mol_dim = mol_dim;
  a.n_cell_types = n_cell_types;
  a.diffusion_steps = T;
  a.gene_dim = gene_dim;
  a.block_dim = block_dim;
  a.hidden = hidden;
  a.mlp_depth = mlp_depth;
  a.time_dim = time_dim;
  a.cell_dim = cell_dim;
  a.heads = heads;
  a.gat_layers = gat_layers;
  a.validate();
  return a;
}

json to_json(const RunConfig& c) {
  json split = {{"mode", to_string(c.split.mode)},
                {"fraction", c.split.fraction},
                {"conditions", c.split.conditions},
                {"doses", c.split.doses},
                {"seed", c.split.seed}};
  return {{"T", c.T},
          {"ddim_substeps", c.ddim_substeps},
          {"heads", c.heads},
          {"gat_layers", c.gat_layers},
          {"eps_co", c.eps_co},
          {"batch", c.batch},
          {"gene_dim", c.gene_dim},
          {"block_dim", c.block_dim},
          {"hidden", c.hidden},
          {"mlp_depth", c.mlp_depth},
          {"time_dim", c.time_dim},
          {"cell_dim", c.cell_dim},
          {"lr", c.lr},
          {"train_steps", c.train_steps},
          {"mask_train_steps", c.mask_train_steps},
          {"mask_lr", c.mask_lr},
          {"tau", c.tau},
          {"mask_samples", c.mask_samples},
          {"mask_fraction", c.mask_fraction},
          {"seed", c.seed},
          {"scale_source", c.scale_source},
          {"n_top_genes", c.n_top_genes},
          {"clamp_output", c.clamp_output},
          {"no_ctrl_stats", c.no_ctrl_stats},
          {"random_latent", c.random_latent},
          {"no_mask", c.no_mask},
          {"no_grn", c.no_grn},
          {"split", split}};
}

RunConfig from_json(const json& j) {
  check_keys(j,
             {"T", "ddim_substeps", "heads", "gat_layers", "eps_co", "batch", "gene_dim", "block_dim", "hidden",
              "mlp_depth", "time_dim", "cell_dim", "lr", "train_steps", "mask_train_steps", "mask_lr", "tau",
              "mask_samples", "mask_fraction", "seed", "scale_source", "n_top_genes", "clamp_output", "no_ctrl_stats",
              "random_latent", "no_mask", "no_grn", "split"},
             "run config");
  RunConfig c;
  read(j, "T", c.T);
  read(j, "ddim_substeps", c.ddim_substeps);
  read(j, "heads", c.heads);
  read(j, "gat_layers", c.gat_layers);
  read(j, "eps_co", c.eps_co);
  read(j, "batch", c.batch);
  read(j, "gene_dim", c.gene_dim);
  read(j, "block_dim", c.block_dim);
  read(j, "hidden", c.hidden);
  read(j, "mlp_depth", c.mlp_depth);
  read(j, "time_dim", c.time_dim);
  read(j, "cell_dim", c.cell_dim);
  read(j, "lr", c.lr);
  read(j, "train_steps", c.train_steps);
  read(j, "mask_train_steps", c.mask_train_steps);
  read(j, "mask_lr", c.mask_lr);
  read(j, "tau", c.tau);
  read(j, "mask_samples", c.mask_samples);
  read(j, "mask_fraction", c.mask_fraction);
  read(j, "seed", c.seed);
  read(j, "scale_source", c.scale_source);
  read(j, "n_top_genes", c.n_top_genes);
  read(j, "clamp_output", c.clamp_output);
  read(j, "no_ctrl_stats", c.no_ctrl_stats);
  read(j, "random_latent", c.random_latent);
  read(j, "no_mask", c.no_mask);
  read(j, "no_grn", c.no_grn);
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"mode", "fraction", "conditions", "doses", "seed"}, "split");
    std::string mode = to_string(c.split.mode);
    read(s, "mode", mode);
    c.split.mode = mode_from_string(mode);
    read(s, "fraction", c.split.fraction);
    read(s, "conditions", c.split.conditions);
    read(s, "doses", c.split.doses);
    read(s, "seed", c.split.seed);
  }
  c.validate();
  return c;
}

RunConfig load(const std::string& path) {
  json j;
  try {
    j = json::parse(io::read_text_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "cannot parse config '" + path + "': " + e.what());
  }
  return from_json(j);
}

std::uint64_t config_hash(const RunConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace unlasting::config
