#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gene_block.hpp"

namespace unlasting::config {

using json = nlohmann::json;

struct SplitSpec {
  enum class Mode { holdout_perturbations, holdout_ood_list, holdout_doses };
  Mode mode = Mode::holdout_perturbations;
  double fraction = 0.7;                // share of perturbation conditions kept for training
  std::vector<std::string> conditions;  // holdout_ood_list
  std::vector<double> doses;            // holdout_doses
  std::uint64_t seed = 0;
};

struct RunConfig {
  std::size_t T = 500;
  std::size_t ddim_substeps = 50;
  std::size_t heads = 2;
  std::size_t gat_layers = 2;
  double eps_co = 0.3;
  std::size_t batch = 32;
  std::size_t gene_dim = 64;
  std::size_t block_dim = 128;
  std::size_t hidden = 128;
  std::size_t mlp_depth = 2;
  std::size_t time_dim = 64;
  std::size_t cell_dim = 32;
  double lr = 1e-3;
  std::size_t train_steps = 3000;
  std::size_t mask_train_steps = 1000;
  double mask_lr = 1e-3;
  double tau = 0.5;
  std::size_t mask_samples = 16;  // K
  double mask_fraction = 0.5;
  std::uint64_t seed = 0;
  std::string scale_source = "train";  // train | all | test
  std::size_t n_top_genes = 0;         // 0 keeps every gene
  bool clamp_output = true;
  bool no_ctrl_stats = false;
  bool random_latent = false;
  bool no_mask = false;
  bool no_grn = false;
  SplitSpec split;

  void validate() const;
  model::ArchConfig arch(std::size_t n_genes, std::size_t mol_dim, std::size_t n_cell_types) const;
};

json to_json(const RunConfig& c);
// Missing keys take defaults; unknown keys are rejected.
RunConfig from_json(const json& j);
RunConfig load(const std::string& path);

const char* to_string(SplitSpec::Mode m);

// FNV-1a 64 of the canonical JSON dump.
std::uint64_t config_hash(const RunConfig& c);
std::string hash_hex(std::uint64_t h);

}  // namespace unlasting::config
