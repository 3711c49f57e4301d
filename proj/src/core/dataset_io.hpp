#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "data.hpp"

namespace unlasting::io {

using json = nlohmann::json;

std::string format_double(double v);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Expression CSV: header `cell_type,condition_id,<gene...>`, one row per cell.
struct ExpressionTable {
  std::vector<std::string> gene_names;
  std::vector<int> cell_type;
  std::vector<std::string> condition_id;
  data::Matrix values;
};
ExpressionTable parse_expression_csv(const std::string& text);
std::string expression_csv(const data::ExpressionDataset& ds);

// Molecule embeddings CSV: header `molecule_id,<dim...>`.
std::map<std::string, Eigen::VectorXd> parse_molecule_csv(const std::string& text);
std::string molecule_csv(const std::map<std::string, Eigen::VectorXd>& embeddings);

// Condition registry JSON. Knockout targets are stored by gene name.
data::ConditionRegistry conditions_from_json(const json& j, const std::vector<std::string>& gene_names,
                                             const std::map<std::string, Eigen::VectorXd>* molecules);
json conditions_to_json(const data::ConditionRegistry& reg, const std::vector<std::string>& gene_names);

data::ExpressionDataset load_dataset(const std::string& csv_path, const std::string& conditions_path,
                                     const std::string& molecules_path = {});
void save_dataset(const data::ExpressionDataset& ds, const std::string& csv_path,
                  const std::string& conditions_path = {});

// Plain numeric matrix CSV without header (GRN adjacency files).
Eigen::MatrixXd parse_matrix_csv(const std::string& text);
std::string matrix_csv(const Eigen::MatrixXd& m);

data::SimConfig sim_config_from_json(const json& j);
json sim_config_to_json(const data::SimConfig& c);
json truth_to_json(const data::SyntheticTruth& t, const std::vector<std::string>& gene_names);

}  // namespace unlasting::io
