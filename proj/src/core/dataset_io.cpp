#include "dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace unlasting::io {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    fail(ErrorCode::format, "line " + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) fail(ErrorCode::format, "cannot format number");
  return {buf, ptr};
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) fail(ErrorCode::io, "write to '" + path + "' failed");
}

ExpressionTable parse_expression_csv(const std::string& text) {
  const auto lines = lines_of(text);
  require(!lines.empty(), ErrorCode::format, "expression CSV is empty");
  const auto header = split_line(lines[0]);
  require(header.size() >= 3 && header[0] == "cell_type" && header[1] == "condition_id", ErrorCode::format,
          "expression CSV header must start with 'cell_type,condition_id'");
  ExpressionTable t;
  t.gene_names.assign(header.begin() + 2, header.end());
  const auto n_genes = static_cast<Eigen::Index>(t.gene_names.size());
  t.values.resize(static_cast<Eigen::Index>(lines.size() - 1), n_genes);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_line(lines[r]);
    require(fields.size() == header.size(), ErrorCode::format,
            "line " + std::to_string(r + 1) + ": expected " + std::to_string(header.size()) + " fields");
    const double ct = parse_double(fields[0], r + 1);
    require(ct >= 0 && ct == static_cast<double>(static_cast<int>(ct)), ErrorCode::format,
            "line " + std::to_string(r + 1) + ": cell_type must be a nonnegative integer");
    t.cell_type.push_back(static_cast<int>(ct));
    t.condition_id.push_back(fields[1]);
    for (Eigen::Index g = 0; g < n_genes; ++g) {
      t.values(static_cast<Eigen::Index>(r - 1), g) = parse_double(fields[static_cast<std::size_t>(g) + 2], r + 1);
    }
  }
  return t;
}

std::string expression_csv(const data::ExpressionDataset& ds) {
  std::string out = "cell_type,condition_id";
  for (const auto& g : ds.gene_names) out += "," + g;
  out += "\n";
  for (std::size_t i = 0; i < ds.n_cells(); ++i) {
    out += std::to_string(ds.cell_type[i]);
    out += ",";
    out += ds.condition_id[i];
    for (Eigen::Index g = 0; g < ds.values.cols(); ++g) {
      out += ",";
      out += format_double(ds.values(static_cast<Eigen::Index>(i), g));
    }
    out += "\n";
  }
  return out;
}

std::map<std::string, Eigen::VectorXd> parse_molecule_csv(const std::string& text) {
  const auto lines = lines_of(text);
  require(!lines.empty(), ErrorCode::format, "molecule CSV is empty");
  const auto header = split_line(lines[0]);
  require(header.size() >= 2 && header[0] == "molecule_id", ErrorCode::format,
          "molecule CSV header must start with 'molecule_id'");
  std::map<std::string, Eigen::VectorXd> out;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_line(lines[r]);
    require(fields.size() == header.size(), ErrorCode::format, "molecule CSV row has wrong field count");
    Eigen::VectorXd v(static_cast<Eigen::Index>(header.size() - 1));
    for (Eigen::Index d = 0; d < v.size(); ++d) v[d] = parse_double(fields[static_cast<std::size_t>(d) + 1], r + 1);
    require(out.emplace(fields[0], v).second, ErrorCode::format, "duplicate molecule id '" + fields[0] + "'");
  }
  return out;
}

std::string molecule_csv(const std::map<std::string, Eigen::VectorXd>& embeddings) {
  std::string out = "molecule_id";
  const Eigen::Index dim = embeddings.empty() ? 0 : embeddings.begin()->second.size();
  for (Eigen::Index d = 0; d < dim; ++d) out += ",e" + std::to_string(d);
  out += "\n";
  for (const auto& [id, v] : embeddings) {
    out += id;
    for (Eigen::Index d = 0; d < v.size(); ++d) out += "," + format_double(v[d]);
    out += "\n";
  }
  return out;
}

data::ConditionRegistry conditions_from_json(const json& j, const std::vector<std::string>& gene_names,
                                             const std::map<std::string, Eigen::VectorXd>* molecules) {
  require(j.is_object(), ErrorCode::format, "condition registry must be a JSON object");
  std::map<std::string, std::size_t> index;
  for (std::size_t g = 0; g < gene_names.size(); ++g) index.emplace(gene_names[g], g);
  data::ConditionRegistry reg;
  for (const auto& [id, entry] : j.items()) {
    require(entry.is_object() && entry.contains("type"), ErrorCode::format, "condition '" + id + "' lacks a type");
    const auto type = entry.at("type").get<std::string>();
    if (type == "control") {
      reg.emplace(id, data::Control{});
    } else if (type == "gene_knockout") {
      data::GeneKnockout ko;
      for (const auto& t : entry.at("targets")) {
        if (t.is_string()) {
          auto it = index.find(t.get<std::string>());
          require(it != index.end(), ErrorCode::invalid_data,
                  "condition '" + id + "': unknown knockout gene '" + t.get<std::string>() + "'");
          ko.targets.push_back(it->second);
        } else {
          ko.targets.push_back(t.get<std::size_t>());
        }
      }
      reg.emplace(id, ko);
    } else if (type == "molecule") {
      data::Molecule mol;
      mol.molecule_id = entry.value("molecule", id);
      mol.dose = entry.value("dose", 0.0);
      if (entry.contains("embedding")) {
        const auto& e = entry.at("embedding");
        mol.embedding.resize(static_cast<Eigen::Index>(e.size()));
        for (std::size_t d = 0; d < e.size(); ++d) mol.embedding[static_cast<Eigen::Index>(d)] = e[d].get<double>();
      } else {
        require(molecules != nullptr, ErrorCode::invalid_data,
                "condition '" + id + "' has no inline embedding and no molecule file was given");
        auto it = molecules->find(mol.molecule_id);
        require(it != molecules->end(), ErrorCode::invalid_data, "no embedding for molecule '" + mol.molecule_id + "'");
        mol.embedding = it->second;
      }
      reg.emplace(id, mol);
    } else {
      fail(ErrorCode::format, "condition '" + id + "': unknown type '" + type + "'");
    }
  }
  return reg;
}

json conditions_to_json(const data::ConditionRegistry& reg, const std::vector<std::string>& gene_names) {
  json j = json::object();
  for (const auto& [id, p] : reg) {
    if (data::is_control(p)) {
      j[id] = {{"type", "control"}};
    } else if (const auto* ko = std::get_if<data::GeneKnockout>(&p)) {
      json targets = json::array();
      for (auto t : ko->targets) targets.push_back(gene_names.at(t));
      j[id] = {{"type", "gene_knockout"}, {"targets", targets}};
    } else {
      const auto& mol = std::get<data::Molecule>(p);
      j[id] = {{"type", "molecule"},
               {"molecule", mol.molecule_id},
               {"dose", mol.dose},
               {"embedding", std::vector<double>(mol.embedding.data(), mol.embedding.data() + mol.embedding.size())}};
    }
  }
  return j;
}

data::ExpressionDataset load_dataset(const std::string& csv_path, const std::string& conditions_path,
                                     const std::string& molecules_path) {
  auto table = parse_expression_csv(read_text_file(csv_path));
  std::map<std::string, Eigen::VectorXd> molecules;
  if (!molecules_path.empty()) molecules = parse_molecule_csv(read_text_file(molecules_path));
  json reg_json;
  try {
    reg_json = json::parse(read_text_file(conditions_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "condition registry '" + conditions_path + "': " + e.what());
  }
  data::ExpressionDataset ds;
  ds.conditions = conditions_from_json(reg_json, table.gene_names, molecules_path.empty() ? nullptr : &molecules);
  ds.gene_names = std::move(table.gene_names);
  ds.cell_type = std::move(table.cell_type);
  ds.condition_id = std::move(table.condition_id);
  ds.values = std::move(table.values);
  ds.validate();
  return ds;
}

void save_dataset(const data::ExpressionDataset& ds, const std::string& csv_path, const std::string& conditions_path) {
  write_text_file(csv_path, expression_csv(ds));
  if (!conditions_path.empty()) {
    write_text_file(conditions_path, conditions_to_json(ds.conditions, ds.gene_names).dump(2) + "\n");
  }
}

Eigen::MatrixXd parse_matrix_csv(const std::string& text) {
  const auto lines = lines_of(text);
  require(!lines.empty(), ErrorCode::format, "matrix CSV is empty");
  const auto cols = split_line(lines[0]).size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(lines.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto fields = split_line(lines[r]);
    require(fields.size() == cols, ErrorCode::format, "matrix CSV rows have unequal length");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(fields[c], r + 1);
    }
  }
  return m;
}

std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ",";
      out += format_double(m(r, c));
    }
    out += "\n";
  }
  return out;
}

data::SimConfig sim_config_from_json(const json& j) {
  data::SimConfig c;
  static const std::set<std::string> known{
      "n_genes", "n_cell_types", "n_knockouts", "n_molecules", "cells_per_condition", "control_cells",
      "mol_dim", "n_modules", "silent_per_cell_type", "sparsity_rate", "bimodal_fraction", "p_resp",
      "edge_keep", "module_corr", "baseline_low", "baseline_high", "cell_type_sd", "noise_sd",
      "knockout_neighbor_shift", "molecule_target_shift", "bimodal_shift", "doses"};
  require(j.is_object(), ErrorCode::format, "simulator config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    require(known.count(k) > 0, ErrorCode::argument, "simulator config: unknown key '" + k + "'");
  }
  try {
#define UNL_READ(field) c.field = j.value(#field, c.field)
    UNL_READ(n_genes);
    UNL_READ(n_cell_types);
    UNL_READ(n_knockouts);
    UNL_READ(n_molecules);
    UNL_READ(cells_per_condition);
    UNL_READ(control_cells);
    UNL_READ(mol_dim);
    UNL_READ(n_modules);
    UNL_READ(silent_per_cell_type);
    UNL_READ(sparsity_rate);
    UNL_READ(bimodal_fraction);
    UNL_READ(p_resp);
    UNL_READ(edge_keep);
    UNL_READ(module_corr);
    UNL_READ(baseline_low);
    UNL_READ(baseline_high);
    UNL_READ(cell_type_sd);
    UNL_READ(noise_sd);
    UNL_READ(knockout_neighbor_shift);
    UNL_READ(molecule_target_shift);
    UNL_READ(bimodal_shift);
    UNL_READ(doses);
#undef UNL_READ
  } catch (const json::exception& e) {
    fail(ErrorCode::format, std::string("simulator config: ") + e.what());
  }
  return c;
}

json sim_config_to_json(const data::SimConfig& c) {
  return {{"n_genes", c.n_genes},
          {"n_cell_types", c.n_cell_types},
          {"n_knockouts", c.n_knockouts},
          {"n_molecules", c.n_molecules},
          {"cells_per_condition", c.cells_per_condition},
          {"control_cells", c.control_cells},
          {"mol_dim", c.mol_dim},
          {"n_modules", c.n_modules},
          {"silent_per_cell_type", c.silent_per_cell_type},
          {"sparsity_rate", c.sparsity_rate},
          {"bimodal_fraction", c.bimodal_fraction},
          {"p_resp", c.p_resp},
          {"edge_keep", c.edge_keep},
          {"module_corr", c.module_corr},
          {"baseline_low", c.baseline_low},
          {"baseline_high", c.baseline_high},
          {"cell_type_sd", c.cell_type_sd},
          {"noise_sd", c.noise_sd},
          {"knockout_neighbor_shift", c.knockout_neighbor_shift},
          {"molecule_target_shift", c.molecule_target_shift},
          {"bimodal_shift", c.bimodal_shift},
          {"doses", c.doses}};
}

json truth_to_json(const data::SyntheticTruth& t, const std::vector<std::string>& gene_names) {
  json rules = json::array();
  for (const auto& r : t.response_rules) {
    rules.push_back({{"condition", r.condition_id},
                     {"gene", gene_names.at(r.gene)},
                     {"shift", r.shift},
                     {"bimodal", r.bimodal},
                     {"p_resp", r.p_resp}});
  }
  json silent = json::array();
  for (const auto& [key, genes] : t.silent_sets) {
    json names = json::array();
    for (auto g : genes) names.push_back(gene_names.at(g));
    silent.push_back({{"cell_type", key.first}, {"condition", key.second}, {"genes", names}});
  }
  json bimodal = json::array();
  for (auto g : t.bimodal_genes) bimodal.push_back(gene_names.at(g));
  return {{"response_rules", rules},
          {"silent_sets", silent},
          {"bimodal_genes", bimodal},
          {"knockout_conditions", t.knockout_conditions},
          {"molecule_conditions", t.molecule_conditions}};
}

}  // namespace unlasting::io
