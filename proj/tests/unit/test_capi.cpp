#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>
#include <sys/wait.h>

#include <doctest.h>

#include "unlasting/unlasting.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("unl_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kSim = R"({"n_genes": 12, "n_knockouts": 4, "n_molecules": 1, "cells_per_condition": 6,
  "control_cells": 20, "mol_dim": 4, "n_modules": 2, "silent_per_cell_type": 1, "doses": [1.0, 10.0]})";

const char* kRun = R"({"T": 20, "ddim_substeps": 5, "batch": 4, "gene_dim": 6, "block_dim": 8, "hidden": 8,
  "time_dim": 4, "cell_dim": 3, "train_steps": 12, "mask_train_steps": 8, "mask_samples": 3, "seed": 9,
  "split": {"fraction": 0.75}})";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(UNLASTING_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void count_steps(size_t, double loss, void* user) {
  auto* seen = static_cast<std::vector<double>*>(user);
  seen->push_back(loss);
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("version, status names and null handling") {
    CHECK(std::string(unl_version()).size() > 0);
    CHECK(std::string(unl_status_name(UNL_OK)) == "ok");
    CHECK(std::string(unl_status_name(UNL_ERR_IO)).size() > 0);
    unl_config* cfg = nullptr;
    CHECK(unl_config_new(nullptr) == UNL_ERR_ARGUMENT);
    CHECK(std::string(unl_last_error()).size() > 0);
    CHECK(unl_config_from_json("{\"nope\": 1}", &cfg) == UNL_ERR_ARGUMENT);
    CHECK(cfg == nullptr);
    CHECK(unl_config_from_json("{not json", &cfg) != UNL_OK);
    CHECK(unl_dataset_load("/nonexistent/a.csv", "/nonexistent/c.json", nullptr, nullptr) == UNL_ERR_ARGUMENT);
    unl_dataset* ds = nullptr;
    CHECK(unl_dataset_load("/nonexistent/a.csv", "/nonexistent/c.json", nullptr, &ds) == UNL_ERR_IO);
    CHECK(ds == nullptr);
    unl_config_free(nullptr);
    unl_dataset_free(nullptr);
    unl_grn_free(nullptr);
    unl_denoiser_free(nullptr);
    unl_mask_model_free(nullptr);
    unl_string_free(nullptr);
  }

  TEST_CASE("config round trip, flags and hash") {
    unl_config* cfg = nullptr;
    REQUIRE(unl_config_from_json(kRun, &cfg) == UNL_OK);
    char* js = nullptr;
    REQUIRE(unl_config_to_json(cfg, &js) == UNL_OK);
    unl_config* back = nullptr;
    REQUIRE(unl_config_from_json(js, &back) == UNL_OK);
    uint64_t h1 = 0, h2 = 0, h3 = 0;
    CHECK(unl_config_hash(cfg, &h1) == UNL_OK);
    CHECK(unl_config_hash(back, &h2) == UNL_OK);
    CHECK(h1 == h2);
    CHECK(unl_config_set_flag(back, "no_grn", 1) == UNL_OK);
    CHECK(unl_config_hash(back, &h3) == UNL_OK);
    CHECK(h3 != h1);
    CHECK(unl_config_set_flag(back, "no_such_flag", 1) == UNL_ERR_ARGUMENT);
    unl_string_free(js);
    unl_config_free(back);
    unl_config_free(cfg);
  }

  TEST_CASE("library workflow end to end") {
    TempDir dir("capi");
    spit(dir / "sim.json", kSim);
    REQUIRE(unl_simulate((dir / "sim.json").c_str(), 3, (dir / "sim").c_str()) == UNL_OK);
    unl_dataset* raw = nullptr;
    REQUIRE(unl_dataset_load((dir / "sim/raw.csv").c_str(), (dir / "sim/conditions.json").c_str(), nullptr, &raw) ==
            UNL_OK);
    size_t cells = 0, genes = 0;
    CHECK(unl_dataset_shape(raw, &cells, &genes) == UNL_OK);
    CHECK(genes == 12);
    CHECK(cells == 2 * 20 + 2 * 6 * (4 + 1));
    std::vector<double> values(cells * genes);
    CHECK(unl_dataset_values(raw, values.data()) == UNL_OK);
    for (double v : values) CHECK(v >= 0.0);

    unl_config* cfg = nullptr;
    REQUIRE(unl_config_from_json(kRun, &cfg) == UNL_OK);
    REQUIRE(unl_preprocess(cfg, raw, (dir / "sim/true_grn.csv").c_str(), (dir / "pre").c_str()) == UNL_OK);
    double x_max = 0.0;
    REQUIRE(unl_read_x_max((dir / "pre/meta.json").c_str(), &x_max) == UNL_OK);
    CHECK(x_max > 0.0);

    unl_dataset *train = nullptr, *test = nullptr;
    REQUIRE(unl_dataset_load((dir / "pre/train.csv").c_str(), (dir / "pre/conditions.json").c_str(), nullptr,
                             &train) == UNL_OK);
    REQUIRE(unl_dataset_load((dir / "pre/test.csv").c_str(), (dir / "pre/conditions.json").c_str(), nullptr, &test) ==
            UNL_OK);
    unl_grn* grn = nullptr;
    REQUIRE(unl_grn_build(train, (dir / "pre/prior.csv").c_str(), 0.3, &grn) == UNL_OK);
    size_t n = 0, edges = 0;
    CHECK(unl_grn_size(grn, &n, &edges) == UNL_OK);
    CHECK(n == 12);
    CHECK(edges >= 12);
    CHECK(unl_grn_build(train, nullptr, 1.5, &grn) == UNL_ERR_ARGUMENT);
    REQUIRE(unl_grn_save(grn, (dir / "grn.csv").c_str()) == UNL_OK);
    unl_grn* grn2 = nullptr;
    REQUIRE(unl_grn_load((dir / "grn.csv").c_str(), &grn2) == UNL_OK);

    std::vector<double> losses;
    unl_denoiser* den = nullptr;
    REQUIRE(unl_denoiser_train(cfg, train, grn2, x_max, count_steps, &losses, &den) == UNL_OK);
    CHECK(losses.size() == 12);
    unl_mask_model* mask = nullptr;
    REQUIRE(unl_mask_model_train(cfg, train, grn2, x_max, nullptr, nullptr, &mask) == UNL_OK);
    REQUIRE(unl_denoiser_save(den, (dir / "den.ulck").c_str()) == UNL_OK);
    REQUIRE(unl_mask_model_save(mask, (dir / "mask.ulck").c_str()) == UNL_OK);
    CHECK(slurp(dir / "den.ulck").substr(0, 4) == "ULCK");
    unl_denoiser* den2 = nullptr;
    unl_mask_model* mask2 = nullptr;
    REQUIRE(unl_denoiser_load((dir / "den.ulck").c_str(), &den2) == UNL_OK);
    REQUIRE(unl_mask_model_load((dir / "mask.ulck").c_str(), &mask2) == UNL_OK);
    CHECK(unl_denoiser_load((dir / "mask.ulck").c_str(), &den2) == UNL_ERR_FORMAT);

    unl_dataset *pred = nullptr, *pred2 = nullptr;
    REQUIRE(unl_predict(cfg, den, mask, test, train, &pred) == UNL_OK);
    REQUIRE(unl_predict(cfg, den2, mask2, test, train, &pred2) == UNL_OK);
    size_t pc = 0, pg = 0;
    CHECK(unl_dataset_shape(pred, &pc, &pg) == UNL_OK);
    std::vector<double> a(pc * pg), b(pc * pg);
    unl_dataset_values(pred, a.data());
    unl_dataset_values(pred2, b.data());
    CHECK(a == b);
    unl_dataset* none = nullptr;
    CHECK(unl_predict(cfg, den, nullptr, test, train, &none) == UNL_ERR_ARGUMENT);

    char *report = nullptr, *per_gene = nullptr;
    REQUIRE(unl_evaluate(pred, test, train, cfg, &report, &per_gene) == UNL_OK);
    const std::string rep(report);
    CHECK(rep.find("\"de20\"") != std::string::npos);
    CHECK(rep.find("\"de40\"") != std::string::npos);
    CHECK(rep.find("\"config_hash\"") != std::string::npos);
    CHECK(std::string(per_gene).find("gene") != std::string::npos);
    unl_string_free(report);
    unl_string_free(per_gene);

    REQUIRE(unl_dataset_save(pred, (dir / "pred.csv").c_str(), nullptr) == UNL_OK);
    CHECK(slurp(dir / "pred.csv").size() > 0);

    for (auto* d : {raw, train, test, pred, pred2}) unl_dataset_free(d);
    unl_grn_free(grn);
    unl_grn_free(grn2);
    unl_denoiser_free(den);
    unl_denoiser_free(den2);
    unl_mask_model_free(mask);
    unl_mask_model_free(mask2);
    unl_config_free(cfg);
  }

  TEST_CASE("command line exit codes and outputs") {
    TempDir dir("cli");
    spit(dir / "sim.json", kSim);
    spit(dir / "run.json", kRun);
    const std::string d = dir.path.string();
    CHECK(run_cli("") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("simulate --bogus 1 --out-dir " + d + "/x") == 2);
    CHECK(run_cli("evaluate --pred /nonexistent --truth /nonexistent --control /nonexistent --out r.json") == 2);
    REQUIRE(run_cli("simulate --config " + d + "/sim.json --seed 4 --out-dir " + d + "/sim") == 0);
    REQUIRE(run_cli("preprocess --config " + d + "/run.json --data " + d + "/sim/raw.csv --out-dir " + d + "/pre") ==
            0);
    REQUIRE(run_cli("build-grn --config " + d + "/run.json --data " + d + "/pre/train.csv --out " + d + "/g.csv") == 0);
    REQUIRE(run_cli("train --config " + d + "/run.json --data " + d + "/pre/train.csv --grn " + d + "/g.csv --out " + d +
                    "/den.ulck") == 0);
    REQUIRE(run_cli("predict --config " + d + "/run.json --model " + d + "/den.ulck --no-mask --data " + d +
                    "/pre/test.csv --control " + d + "/pre/train.csv --out " + d + "/p.csv") == 0);
    REQUIRE(run_cli("evaluate --pred " + d + "/p.csv --truth " + d + "/pre/test.csv --control " + d +
                    "/pre/train.csv --out " + d + "/r.json") == 0);
    const std::string rep = slurp(d + "/r.json");
    CHECK(rep.find("\"all\"") != std::string::npos);
    CHECK(rep.find("\"de20\"") != std::string::npos);
    CHECK(fs::exists(d + "/r.json.genes.csv"));
    CHECK(run_cli("predict --config " + d + "/run.json --model " + d + "/den.ulck --data " + d + "/pre/test.csv --control " +
                  d + "/pre/train.csv --out " + d + "/p2.csv") == 1);
    spit(d + "/small.csv", "1,0\n0,1\n");
    CHECK(run_cli("train --config " + d + "/run.json --data " + d + "/pre/train.csv --grn " + d + "/small.csv --out " +
                  d + "/bad.ulck") == 1);
    CHECK_FALSE(fs::exists(d + "/bad.ulck"));
  }
}
