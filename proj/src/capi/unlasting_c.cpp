#include "unlasting/unlasting.h"

#include <cstring>
#include <exception>
#include <new>
#include <optional>
#include <string>

#include "pipeline.hpp"

using namespace unlasting;

struct unl_config {
  config::RunConfig value;
};
struct unl_dataset {
  data::ExpressionDataset value;
};
struct unl_grn {
  grn::Grn value;
};
struct unl_denoiser {
  pipeline::TrainedDenoiser value;
};
struct unl_mask_model {
  pipeline::TrainedMask value;
};

namespace {

thread_local std::string last_error;

unl_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::argument: return UNL_ERR_ARGUMENT;
    case ErrorCode::invalid_data: return UNL_ERR_INVALID_DATA;
    case ErrorCode::insufficient_data: return UNL_ERR_INSUFFICIENT_DATA;
    case ErrorCode::numeric: return UNL_ERR_NUMERIC;
    case ErrorCode::step_range: return UNL_ERR_STEP_RANGE;
    case ErrorCode::training: return UNL_ERR_TRAINING;
    case ErrorCode::io: return UNL_ERR_IO;
    case ErrorCode::format: return UNL_ERR_FORMAT;
  }
  return UNL_ERR_INTERNAL;
}

template <typename F>
unl_status guard(F&& body) {
  try {
    body();
    return UNL_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return UNL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return UNL_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return UNL_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::argument, std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::optional<Eigen::MatrixXi> read_prior(const char* path) {
  if (path == nullptr || *path == '\0') return std::nullopt;
  return grn::adjacency_from_real(io::parse_matrix_csv(io::read_text_file(path)));
}

pipeline::Progress progress_of(unl_progress_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](std::size_t step, double loss) { fn(step, loss, user); };
}

}  // namespace

extern "C" {

UNL_API const char* unl_version(void) { return "0.1.0"; }

UNL_API const char* unl_status_name(unl_status status) {
  switch (status) {
    case UNL_OK: return "ok";
    case UNL_ERR_ARGUMENT: return "argument error";
    case UNL_ERR_INVALID_DATA: return "invalid data";
    case UNL_ERR_INSUFFICIENT_DATA: return "insufficient data";
    case UNL_ERR_NUMERIC: return "numeric error";
    case UNL_ERR_STEP_RANGE: return "step range error";
    case UNL_ERR_TRAINING: return "training error";
    case UNL_ERR_IO: return "i/o error";
    case UNL_ERR_FORMAT: return "format error";
    case UNL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

UNL_API const char* unl_last_error(void) { return last_error.c_str(); }

UNL_API void unl_string_free(char* s) { delete[] s; }

UNL_API unl_status unl_config_new(unl_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new unl_config{};
  });
}

UNL_API unl_status unl_config_load(const char* path, unl_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new unl_config{config::load(path)};
  });
}

UNL_API unl_status unl_config_from_json(const char* text, unl_config** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    io::json j;
    try {
      j = io::json::parse(text);
    } catch (const io::json::exception& e) {
      fail(ErrorCode::format, std::string("config JSON: ") + e.what());
    }
    *out = new unl_config{config::from_json(j)};
  });
}

UNL_API unl_status unl_config_to_json(const unl_config* cfg, char** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = dup(config::to_json(cfg->value).dump(2) + "\n");
  });
}

UNL_API unl_status unl_config_hash(const unl_config* cfg, uint64_t* out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = config::config_hash(cfg->value);
  });
}

UNL_API unl_status unl_config_set_flag(unl_config* cfg, const char* name, int value) {
  return guard([&] {
    need(cfg, "cfg");
    need(name, "name");
    const std::string key = name;
    auto& c = cfg->value;
    bool* flag = key == "no_ctrl_stats"   ? &c.no_ctrl_stats
                 : key == "random_latent" ? &c.random_latent
                 : key == "no_mask"       ? &c.no_mask
                 : key == "no_grn"        ? &c.no_grn
                 : key == "clamp_output"  ? &c.clamp_output
                                          : nullptr;
    if (flag == nullptr) fail(ErrorCode::argument, "unknown flag '" + key + "'");
    *flag = value != 0;
  });
}

UNL_API void unl_config_free(unl_config* cfg) { delete cfg; }

UNL_API unl_status unl_simulate(const char* sim_config_path, uint64_t seed, const char* out_dir) {
  return guard([&] {
    need(out_dir, "out_dir");
    data::SimConfig sim;
    if (sim_config_path != nullptr && *sim_config_path != '\0') {
      io::json j;
      try {
        j = io::json::parse(io::read_text_file(sim_config_path));
      } catch (const io::json::exception& e) {
        fail(ErrorCode::format, std::string("simulator config: ") + e.what());
      }
      sim = io::sim_config_from_json(j);
    }
    pipeline::simulate_to_dir(sim, seed, out_dir);
  });
}

UNL_API unl_status unl_dataset_load(const char* csv_path, const char* conditions_path, const char* molecules_csv,
                                    unl_dataset** out) {
  return guard([&] {
    need(csv_path, "csv_path");
    need(conditions_path, "conditions_path");
    need(out, "out");
    *out = new unl_dataset{io::load_dataset(csv_path, conditions_path, molecules_csv ? molecules_csv : "")};
  });
}

UNL_API unl_status unl_dataset_save(const unl_dataset* ds, const char* csv_path, const char* conditions_path) {
  return guard([&] {
    need(ds, "ds");
    need(csv_path, "csv_path");
    io::save_dataset(ds->value, csv_path, conditions_path ? conditions_path : "");
  });
}

UNL_API unl_status unl_dataset_shape(const unl_dataset* ds, size_t* cells, size_t* genes) {
  return guard([&] {
    need(ds, "ds");
    if (cells) *cells = ds->value.n_cells();
    if (genes) *genes = ds->value.n_genes();
  });
}

UNL_API unl_status unl_dataset_values(const unl_dataset* ds, double* out) {
  return guard([&] {
    need(ds, "ds");
    need(out, "out");
    const auto& v = ds->value.values;
    std::memcpy(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  });
}

UNL_API unl_status unl_dataset_max(const unl_dataset* ds, double* out) {
  return guard([&] {
    need(ds, "ds");
    need(out, "out");
    *out = pipeline::max_value(ds->value);
  });
}

UNL_API void unl_dataset_free(unl_dataset* ds) { delete ds; }

UNL_API unl_status unl_read_x_max(const char* meta_path, double* out) {
  return guard([&] {
    need(meta_path, "meta_path");
    need(out, "out");
    try {
      const auto j = io::json::parse(io::read_text_file(meta_path));
      *out = j.at("x_max").get<double>();
    } catch (const io::json::exception& e) {
      fail(ErrorCode::format, std::string("meta file: ") + e.what());
    }
    require(*out > 0.0, ErrorCode::format, "meta file has a non-positive x_max");
  });
}

UNL_API unl_status unl_preprocess(const unl_config* cfg, const unl_dataset* raw, const char* prior_csv,
                                  const char* out_dir) {
  return guard([&] {
    need(cfg, "cfg");
    need(raw, "raw");
    need(out_dir, "out_dir");
    const auto p = pipeline::preprocess(raw->value, cfg->value, read_prior(prior_csv));
    pipeline::write_preprocessed(p, cfg->value, out_dir);
  });
}

UNL_API unl_status unl_grn_build(const unl_dataset* ds, const char* prior_csv, double eps_co, unl_grn** out) {
  return guard([&] {
    need(ds, "ds");
    need(out, "out");
    *out = new unl_grn{pipeline::build_grn(ds->value, read_prior(prior_csv), eps_co)};
  });
}

UNL_API unl_status unl_grn_load(const char* path, unl_grn** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new unl_grn{grn::Grn(grn::adjacency_from_real(io::parse_matrix_csv(io::read_text_file(path))))};
  });
}

UNL_API unl_status unl_grn_save(const unl_grn* g, const char* path) {
  return guard([&] {
    need(g, "grn");
    need(path, "path");
    io::write_text_file(path, io::matrix_csv(g->value.adjacency().cast<double>()));
  });
}

UNL_API unl_status unl_grn_size(const unl_grn* g, size_t* genes, size_t* edges) {
  return guard([&] {
    need(g, "grn");
    if (genes) *genes = g->value.size();
    if (edges) *edges = g->value.edge_count();
  });
}

UNL_API void unl_grn_free(unl_grn* g) { delete g; }

UNL_API unl_status unl_denoiser_train(const unl_config* cfg, const unl_dataset* train, const unl_grn* g, double x_max,
                                      unl_progress_fn progress, void* user, unl_denoiser** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(train, "train");
    need(g, "grn");
    need(out, "out");
    *out = new unl_denoiser{pipeline::train_denoiser(cfg->value, train->value, g->value, x_max,
                                                     progress_of(progress, user))};
  });
}

UNL_API unl_status unl_denoiser_save(const unl_denoiser* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    pipeline::to_checkpoint(model->value).save(path);
  });
}

UNL_API unl_status unl_denoiser_load(const char* path, unl_denoiser** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new unl_denoiser{pipeline::denoiser_from_checkpoint(nn::Checkpoint::load(path))};
  });
}

UNL_API void unl_denoiser_free(unl_denoiser* model) { delete model; }

UNL_API unl_status unl_mask_model_train(const unl_config* cfg, const unl_dataset* train, const unl_grn* g,
                                        double x_max, unl_progress_fn progress, void* user, unl_mask_model** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(train, "train");
    need(g, "grn");
    need(out, "out");
    *out = new unl_mask_model{pipeline::train_mask(cfg->value, train->value, g->value, x_max,
                                                   progress_of(progress, user))};
  });
}

UNL_API unl_status unl_mask_model_save(const unl_mask_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    pipeline::to_checkpoint(model->value).save(path);
  });
}

UNL_API unl_status unl_mask_model_load(const char* path, unl_mask_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new unl_mask_model{pipeline::mask_from_checkpoint(nn::Checkpoint::load(path))};
  });
}

UNL_API void unl_mask_model_free(unl_mask_model* model) { delete model; }

UNL_API unl_status unl_predict(const unl_config* cfg, const unl_denoiser* model, const unl_mask_model* mask,
                               const unl_dataset* targets, const unl_dataset* controls, unl_dataset** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(model, "model");
    need(targets, "targets");
    need(controls, "controls");
    need(out, "out");
    *out = new unl_dataset{pipeline::predict(cfg->value, model->value, mask ? &mask->value : nullptr, targets->value,
                                             controls->value)};
  });
}

UNL_API unl_status unl_evaluate(const unl_dataset* pred, const unl_dataset* truth, const unl_dataset* control,
                                const unl_config* cfg, char** report_json, char** per_gene_csv) {
  return guard([&] {
    need(pred, "pred");
    need(truth, "truth");
    need(control, "control");
    need(report_json, "report_json");
    const auto e = pipeline::evaluate(pred->value, truth->value, control->value);
    std::optional<std::uint64_t> hash;
    if (cfg) hash = config::config_hash(cfg->value);
    std::string csv = per_gene_csv ? pipeline::per_gene_csv(e) : std::string();
    *report_json = dup(pipeline::report_json(e, hash).dump(2) + "\n");
    if (per_gene_csv) *per_gene_csv = dup(csv);
  });
}

}  // extern "C"
