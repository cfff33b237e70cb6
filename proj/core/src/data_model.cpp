#include "rdb/data_model.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace rdb {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
    out.back().pop_back();
  }
  return out;
}

void check_unique(const std::vector<std::string>& ids, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw ContractError("duplicate " + what + " id \"" + id + "\"");
    }
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open file \"" + path + "\"");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    if (line.empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

void CountMatrix::validate() const {
  if (rows() < 1) throw ContractError("count matrix needs at least 1 component");
  if (cols() < 2) throw ContractError("count matrix needs at least 2 samples");
  if (counts.size() != rows() * cols()) throw ContractError("count matrix shape mismatch");
  check_unique(component_ids, "component");
  check_unique(sample_ids, "sample");
  for (std::size_t i = 0; i < rows(); ++i) {
    for (std::size_t j = 0; j < cols(); ++j) {
      if (at(i, j) < 0) {
        throw ContractError("negative count at (" + component_ids[i] + ", " + sample_ids[j] + ")");
      }
    }
  }
}

CountMatrix load_counts(const std::string& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw ContractError("empty count file \"" + path + "\"");
  auto header = split_tabs(lines[0]);
  if (header.size() < 3 || header[0] != "component_id") {
    throw ContractError("malformed header in \"" + path +
                        "\": expected component_id followed by at least 2 sample ids");
  }
  CountMatrix m;
  m.sample_ids.assign(header.begin() + 1, header.end());
  check_unique(m.sample_ids, "sample");
  const std::size_t n = m.sample_ids.size();
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto fields = split_tabs(lines[r]);
    if (fields.size() != n + 1) {
      throw ContractError("row \"" + fields[0] + "\" has " + std::to_string(fields.size() - 1) +
                          " cells, expected " + std::to_string(n));
    }
    m.component_ids.push_back(fields[0]);
    for (std::size_t j = 0; j < n; ++j) {
      const std::string& cell = fields[j + 1];
      errno = 0;
      char* end = nullptr;
      long long v = std::strtoll(cell.c_str(), &end, 10);
      if (end == cell.c_str() || *end != '\0' || errno == ERANGE) {
        throw ContractError("non-integer count \"" + cell + "\" at (" + fields[0] + ", " +
                            m.sample_ids[j] + ")");
      }
      if (v < 0) {
        throw ContractError("negative count at (" + fields[0] + ", " + m.sample_ids[j] + ")");
      }
      m.counts.push_back(v);
    }
  }
  m.validate();
  return m;
}

SampleMetadata load_metadata(const std::string& path,
                             const std::optional<std::string>& group_column,
                             const std::vector<std::string>& covariate_columns,
                             const std::optional<std::string>& outcome_column) {
  auto lines = read_lines(path);
  if (lines.empty()) throw ContractError("empty metadata file \"" + path + "\"");
  auto header = split_tabs(lines[0]);
  if (header.empty() || header[0] != "sample_id") {
    throw ContractError("malformed metadata header in \"" + path + "\": first column must be sample_id");
  }
  std::map<std::string, std::size_t> col_index;
  for (std::size_t c = 1; c < header.size(); ++c) col_index[header[c]] = c;

  auto require = [&](const std::string& name) {
    auto it = col_index.find(name);
    if (it == col_index.end()) {
      throw ContractError("metadata file has no column \"" + name + "\"");
    }
    return it->second;
  };

  SampleMetadata meta;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    auto fields = split_tabs(lines[r]);
    if (fields.size() != header.size()) {
      throw ContractError("metadata row \"" + fields[0] + "\" has wrong number of cells");
    }
    meta.sample_ids.push_back(fields[0]);
    rows.push_back(std::move(fields));
  }
  check_unique(meta.sample_ids, "sample");

  if (group_column) {
    std::size_t c = require(*group_column);
    std::vector<std::string> g;
    for (const auto& row : rows) g.push_back(row[c]);
    meta.group = std::move(g);
  }
  auto numeric = [&](const std::string& name, std::size_t c) {
    std::vector<double> vals;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::string& cell = rows[r][c];
      if (cell.empty() || cell == "NA") {
        throw ContractError("missing covariate " + name + " for sample " + meta.sample_ids[r]);
      }
      errno = 0;
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || errno == ERANGE) {
        throw ContractError("non-numeric value \"" + cell + "\" in column " + name + " for sample " +
                            meta.sample_ids[r]);
      }
      vals.push_back(v);
    }
    return vals;
  };
  for (const auto& name : covariate_columns) {
    meta.covariate_names.push_back(name);
    meta.covariates.push_back(numeric(name, require(name)));
  }
  if (outcome_column) {
    meta.outcome = numeric(*outcome_column, require(*outcome_column));
  }
  return meta;
}

CompositionMatrix to_proportions(const CountMatrix& c) {
  c.validate();
  CompositionMatrix p;
  p.component_ids = c.component_ids;
  p.sample_ids = c.sample_ids;
  p.props.resize(c.counts.size());
  for (std::size_t j = 0; j < c.cols(); ++j) {
    std::int64_t total = 0;
    for (std::size_t i = 0; i < c.rows(); ++i) total += c.at(i, j);
    if (total == 0) {
      throw ContractError("zero sequencing depth in sample " + c.sample_ids[j]);
    }
    for (std::size_t i = 0; i < c.rows(); ++i) {
      p.props[i * c.cols() + j] = static_cast<double>(c.at(i, j)) / static_cast<double>(total);
    }
  }
  return p;
}

TwoSampleDesign split_groups_by_labels(const CompositionMatrix& p,
                                       const std::vector<std::string>& labels,
                                       const std::optional<std::string>& group1_override) {
  if (labels.size() != p.cols()) {
    throw ContractError("group labels cover " + std::to_string(labels.size()) + " samples, matrix has " +
                        std::to_string(p.cols()));
  }
  std::set<std::string> levels(labels.begin(), labels.end());
  if (levels.size() != 2) {
    throw ContractError("group column must have exactly 2 levels, found " +
                        std::to_string(levels.size()));
  }
  std::string lvl1 = *levels.begin();
  std::string lvl2 = *std::next(levels.begin());
  if (group1_override) {
    if (*group1_override == lvl2) std::swap(lvl1, lvl2);
    else if (*group1_override != lvl1) {
      throw ContractError("group1 override \"" + *group1_override + "\" is not an observed level");
    }
  }

  TwoSampleDesign design;
  design.group1_level = lvl1;
  design.group2_level = lvl2;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    (labels[j] == lvl1 ? design.group1_sample_index : design.group2_sample_index).push_back(j);
  }
  for (const auto& [lvl, idx] :
       {std::pair{lvl1, &design.group1_sample_index}, std::pair{lvl2, &design.group2_sample_index}}) {
    if (idx->size() < 2) {
      throw ContractError("group " + lvl + " has fewer than 2 samples");
    }
  }

  // Quarantine components that are zero in every sample of both groups.
  std::vector<std::size_t> retained;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double total = 0;
    for (std::size_t j = 0; j < p.cols(); ++j) total += p.at(i, j);
    if (total == 0.0) {
      design.excluded.emplace_back(p.component_ids[i], "all-zero");
    } else {
      retained.push_back(i);
      design.component_ids.push_back(p.component_ids[i]);
    }
  }
  auto gather = [&](const std::vector<std::size_t>& sample_idx) {
    std::vector<std::vector<double>> out;
    for (std::size_t j : sample_idx) {
      std::vector<double> v(retained.size());
      for (std::size_t r = 0; r < retained.size(); ++r) v[r] = p.at(retained[r], j);
      out.push_back(std::move(v));
    }
    return out;
  };
  design.group1 = gather(design.group1_sample_index);
  design.group2 = gather(design.group2_sample_index);
  return design;
}

TwoSampleDesign split_groups(const CompositionMatrix& p, const SampleMetadata& meta,
                             const std::optional<std::string>& group1_override) {
  if (!meta.group) throw ContractError("metadata has no group column");
  if (meta.sample_ids != p.sample_ids) {
    // Align by id; order may differ between the two files.
    std::map<std::string, std::size_t> pos;
    for (std::size_t j = 0; j < meta.sample_ids.size(); ++j) pos[meta.sample_ids[j]] = j;
    std::vector<std::string> labels;
    for (const auto& sid : p.sample_ids) {
      auto it = pos.find(sid);
      if (it == pos.end()) throw ContractError("sample " + sid + " missing from metadata");
      labels.push_back((*meta.group)[it->second]);
    }
    return split_groups_by_labels(p, labels, group1_override);
  }
  return split_groups_by_labels(p, *meta.group, group1_override);
}

}  // namespace rdb
