#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rdb/continuous_outcome.hpp"
#include "rdb/covariate_balance.hpp"
#include "rdb/data_model.hpp"
#include "rdb/error_control.hpp"
#include "rdb/rdb_core.hpp"
#include "rdb/simbench.hpp"

namespace {

constexpr const char* kVersion = "rdb 1.0.0";

using nlohmann::json;

std::string direction_name(rdb::DirectionMode d) {
  switch (d) {
    case rdb::DirectionMode::TwoSided: return "two-sided";
    case rdb::DirectionMode::NegOnly: return "-";
    case rdb::DirectionMode::PosOnly: return "+";
  }
  return "?";
}

std::string decision_name(rdb::Decision d) {
  switch (d) {
    case rdb::Decision::Rejected: return "rejected";
    case rdb::Decision::Retained: return "retained";
    case rdb::Decision::Excluded: return "excluded";
  }
  return "?";
}

std::string fmt_stat(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  if (!out) throw rdb::ContractError("cannot write to \"" + path + "\"");
  out << content;
}

std::string outcome_to_tsv(const rdb::TestOutcome& outcome, const std::string& provenance) {
  std::ostringstream out;
  std::istringstream prov(provenance);
  std::string line;
  while (std::getline(prov, line)) out << "# " << line << "\n";
  out << "component_id\tdecision\tdirection\trejection_iteration\tstatistic_iter0\tnote\n";
  for (const auto& c : outcome.components) {
    out << c.component_id << "\t" << decision_name(c.decision) << "\t"
        << (c.direction ? direction_name(*c.direction) : ".") << "\t"
        << (c.rejection_iteration ? std::to_string(*c.rejection_iteration) : ".") << "\t"
        << (c.decision == rdb::Decision::Excluded ? "." : fmt_stat(c.first_iteration_statistic))
        << "\t" << (c.note.empty() ? "." : c.note) << "\n";
  }
  return out.str();
}

json stats_to_json(const std::vector<double>& stats) {
  json arr = json::array();
  for (double s : stats) {
    if (std::isinf(s)) arr.push_back(s > 0 ? "inf" : "-inf");
    else arr.push_back(s);
  }
  return arr;
}

json outcome_to_json(const rdb::TestOutcome& outcome) {
  json j;
  j["version"] = kVersion;
  j["config"] = {
      {"alpha", outcome.config.alpha},
      {"mode", outcome.config.mode == rdb::Mode::Fdr ? "fdr" : "fwer"},
      {"r_q", outcome.config.r_q},
      {"median_threshold",
       outcome.config.median_threshold ? json(*outcome.config.median_threshold) : json("auto")},
      {"fdr_tail", outcome.config.fdr_tail == rdb::FdrTail::Rayleigh ? "rayleigh" : "halfnormal"},
  };
  j["thresholds"] = {{"median_band", outcome.thresholds.median_band},
                     {"q_tilde", outcome.thresholds.q_tilde},
                     {"d_plus", outcome.thresholds.d_plus},
                     {"d_minus", outcome.thresholds.d_minus},
                     {"d_pm", outcome.thresholds.d_pm}};
  j["iterations"] = outcome.iterations;
  if (outcome.fdr_threshold_used) j["fdr_threshold"] = *outcome.fdr_threshold_used;
  auto balance = [](const rdb::BalanceSolverReport& r) {
    return json{{"iterations", r.iterations},
                {"gradient_norm", r.gradient_norm},
                {"balance_residual", r.balance_residual}};
  };
  if (outcome.balance_group1) j["balance_group1"] = balance(*outcome.balance_group1);
  if (outcome.balance_group2) j["balance_group2"] = balance(*outcome.balance_group2);
  j["components"] = json::array();
  for (const auto& c : outcome.components) {
    json jc = {{"component_id", c.component_id},
               {"decision", decision_name(c.decision)},
               {"statistic_iter0", std::isinf(c.first_iteration_statistic)
                                       ? json(fmt_stat(c.first_iteration_statistic))
                                       : json(c.first_iteration_statistic)}};
    if (c.rejection_iteration) jc["rejection_iteration"] = *c.rejection_iteration;
    if (c.direction) jc["direction"] = direction_name(*c.direction);
    if (!c.note.empty()) jc["note"] = c.note;
    j["components"].push_back(std::move(jc));
  }
  j["trace"] = json::array();
  for (const auto& rec : outcome.trace) {
    j["trace"].push_back({{"direction", direction_name(rec.direction)},
                          {"median", rec.median},
                          {"active", rec.active},
                          {"stats", stats_to_json(rec.stats)},
                          {"rejected", rec.rejected},
                          {"thresholds",
                           {{"median_band", rec.thresholds.median_band},
                            {"d_plus", rec.thresholds.d_plus},
                            {"d_minus", rec.thresholds.d_minus},
                            {"d_pm", rec.thresholds.d_pm}}}});
  }
  return j;
}

/// Reorders metadata-aligned values into count-matrix sample order.
template <typename T>
std::vector<T> align_to_matrix(const std::vector<T>& values, const std::vector<std::string>& meta_ids,
                               const std::vector<std::string>& matrix_ids) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t j = 0; j < meta_ids.size(); ++j) pos[meta_ids[j]] = j;
  std::vector<T> out;
  out.reserve(matrix_ids.size());
  for (const auto& sid : matrix_ids) {
    auto it = pos.find(sid);
    if (it == pos.end()) throw rdb::ContractError("sample " + sid + " missing from metadata");
    out.push_back(values[it->second]);
  }
  return out;
}

rdb::BalanceWeights load_weights(const std::string& path, const rdb::TwoSampleDesign& design,
                                 const std::vector<std::string>& matrix_sample_ids) {
  std::ifstream in(path);
  if (!in) throw rdb::ContractError("cannot open weights file \"" + path + "\"");
  std::map<std::string, double> by_id;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string sid;
    double w = 0.0;
    if (!(ls >> sid >> w)) throw rdb::ContractError("malformed weights line: " + line);
    if (sid == "sample_id") continue;
    if (w <= 0.0) throw rdb::ContractError("non-positive weight for sample " + sid);
    by_id[sid] = w;
  }
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    for (std::size_t j : idx) {
      auto it = by_id.find(matrix_sample_ids[j]);
      if (it == by_id.end()) {
        throw rdb::ContractError("weights file has no entry for sample " + matrix_sample_ids[j]);
      }
      out.push_back(it->second);
    }
    return out;
  };
  rdb::BalanceWeights bw;
  bw.w1 = gather(design.group1_sample_index);
  bw.w2 = gather(design.group2_sample_index);
  return bw;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct TestArgs {
  std::string counts, meta, group, outcome, balance, weights;
  std::string mode = "fwer", fdr_tail = "rayleigh", m_threshold = "auto";
  std::string group1, out = "-", json_path;
  double alpha = 0.1, rq = 0.2;
};

int cmd_test(const TestArgs& a) {
  if (!a.group.empty() && !a.outcome.empty()) {
    throw rdb::ContractError("--group and --outcome are mutually exclusive");
  }
  if (a.group.empty() && a.outcome.empty()) {
    throw rdb::ContractError("one of --group or --outcome is required");
  }
  if (!a.balance.empty() && !a.weights.empty()) {
    throw rdb::ContractError("--balance and --weights are mutually exclusive");
  }
  if (!a.outcome.empty() && (!a.balance.empty() || !a.weights.empty())) {
    throw rdb::ContractError("covariate balancing is not supported with --outcome");
  }

  rdb::RdbConfig cfg;
  cfg.alpha = a.alpha;
  cfg.r_q = a.rq;
  cfg.mode = a.mode == "fdr" ? rdb::Mode::Fdr : rdb::Mode::Fwer;
  cfg.fdr_tail = a.fdr_tail == "halfnormal" ? rdb::FdrTail::HalfNormal : rdb::FdrTail::Rayleigh;
  if (a.m_threshold != "auto") cfg.median_threshold = std::stod(a.m_threshold);
  if (!a.group1.empty()) cfg.group1_override = a.group1;

  const auto balance_cols = split_commas(a.balance);
  const auto counts = rdb::load_counts(a.counts);
  const auto meta = rdb::load_metadata(
      a.meta, a.group.empty() ? std::nullopt : std::optional<std::string>(a.group), balance_cols,
      a.outcome.empty() ? std::nullopt : std::optional<std::string>(a.outcome));
  const auto comp = rdb::to_proportions(counts);

  rdb::TestOutcome outcome;
  if (!a.group.empty()) {
    auto design = rdb::split_groups(comp, meta, cfg.group1_override);
    if (!a.weights.empty()) {
      outcome = rdb::rdb_weighted_with(design, load_weights(a.weights, design, comp.sample_ids), cfg);
    } else if (!balance_cols.empty()) {
      std::vector<std::vector<double>> cov;
      for (const auto& col : meta.covariates) {
        cov.push_back(align_to_matrix(col, meta.sample_ids, comp.sample_ids));
      }
      outcome = rdb::rdb_weighted(design, cov, balance_cols, cfg);
    } else {
      outcome = rdb::rdb_iterate(design, cfg);
    }
  } else {
    const auto y = align_to_matrix(*meta.outcome, meta.sample_ids, comp.sample_ids);
    outcome = rdb::rdb_continuous(rdb::make_continuous_design(comp, y), cfg);
  }

  std::ostringstream prov;
  prov << kVersion << "\n"
       << "command=test counts=" << a.counts << " meta=" << a.meta
       << (a.group.empty() ? "" : " group=" + a.group)
       << (a.outcome.empty() ? "" : " outcome=" + a.outcome) << " alpha=" << cfg.alpha
       << " mode=" << a.mode << " m_threshold=" << a.m_threshold << " r_q=" << cfg.r_q
       << " fdr_tail=" << a.fdr_tail << (a.balance.empty() ? "" : " balance=" + a.balance)
       << (a.weights.empty() ? "" : " weights=" + a.weights)
       << (a.group1.empty() ? "" : " group1=" + a.group1) << "\n"
       << "thresholds: M=" << outcome.thresholds.median_band << " q_tilde=" << outcome.thresholds.q_tilde
       << " d_pm=" << outcome.thresholds.d_pm;
  if (outcome.fdr_threshold_used) prov << " fdr_T=" << *outcome.fdr_threshold_used;

  std::cerr << "resolved config: alpha=" << cfg.alpha << " mode=" << a.mode
            << " M=" << outcome.thresholds.median_band << " r_q=" << cfg.r_q
            << " q_tilde=" << outcome.thresholds.q_tilde << "\n";
  write_text(a.out, outcome_to_tsv(outcome, prov.str()));
  if (!a.json_path.empty()) write_text(a.json_path, outcome_to_json(outcome).dump(2) + "\n");
  return 0;
}

struct SimArgs {
  std::string scenario = "pg";
  std::size_t d = 200, s = 20, m1 = 50, m2 = 50, reps = 100;
  int setting = 1;
  double beta = 1.0, rho = 0.0, alpha = 0.1;
  std::uint64_t seed = 0;
  std::string methods = "RDB", control = "fwer", source, out = "-", json_path;
  unsigned threads = 0;
  bool timings = false;
};

json report_to_json(const rdb::PerformanceReport& report) {
  json j;
  j["version"] = kVersion;
  const auto& sc = report.scenario;
  j["scenario"] = {{"kind", rdb::scenario_kind_name(sc.kind)}, {"d", sc.d},       {"s", sc.s},
                   {"m1", sc.m1},                              {"m2", sc.m2},     {"setting", sc.setting},
                   {"beta", sc.beta},                          {"rho", sc.rho},   {"seed", sc.seed}};
  j["methods"] = json::array();
  for (const auto& [method, ms] : report.scores) {
    json jm = {{"method", rdb::method_name(method)},
               {"fwer", ms.fwer},
               {"fwer_se", ms.fwer_se},
               {"fdr", ms.fdr},
               {"fdr_se", ms.fdr_se},
               {"reps", ms.reps}};
    if (ms.power) {
      jm["power"] = *ms.power;
      jm["power_se"] = *ms.power_se;
    }
    j["methods"].push_back(std::move(jm));
  }
  return j;
}

int cmd_simulate(const SimArgs& a) {
  rdb::Scenario sc;
  if (a.scenario == "pg") sc.kind = rdb::ScenarioKind::PoissonGamma;
  else if (a.scenario == "pg-continuous") sc.kind = rdb::ScenarioKind::PoissonGammaContinuous;
  else if (a.scenario == "lognormal") sc.kind = rdb::ScenarioKind::LogNormal;
  else if (a.scenario == "lognormal-cov") sc.kind = rdb::ScenarioKind::LogNormalCov;
  else if (a.scenario == "shuffle") sc.kind = rdb::ScenarioKind::Shuffle;
  else throw rdb::ContractError("unknown scenario \"" + a.scenario + "\"");

  sc.d = a.d;
  sc.s = a.s;
  sc.m1 = a.m1;
  sc.m2 = a.m2;
  sc.setting = a.setting;
  sc.beta = a.beta;
  sc.rho = a.rho;
  sc.seed = a.seed;
  if (sc.kind == rdb::ScenarioKind::Shuffle) {
    if (a.source.empty()) throw rdb::ContractError("--scenario shuffle requires --source");
    sc.source = rdb::load_counts(a.source);
  }

  rdb::RdbConfig cfg;
  cfg.alpha = a.alpha;
  cfg.mode = a.control == "fdr" ? rdb::Mode::Fdr : rdb::Mode::Fwer;

  std::vector<rdb::Method> methods;
  for (const auto& name : split_commas(a.methods)) methods.push_back(rdb::parse_method(name));

  unsigned threads = a.threads;
  if (threads == 0) {
    if (const char* env = std::getenv("RDB_THREADS")) threads = std::max(1, std::atoi(env));
    else threads = 1;
  }

  std::cerr << "resolved config: scenario=" << a.scenario << " d=" << sc.d << " s=" << sc.s
            << " m1=" << sc.m1 << " m2=" << sc.m2 << " setting=" << sc.setting << " beta=" << sc.beta
            << " rho=" << sc.rho << " reps=" << a.reps << " seed=" << sc.seed << " alpha=" << cfg.alpha
            << " control=" << a.control << " threads=" << threads << "\n";

  const auto report = rdb::run_scenario(sc, methods, a.reps, cfg, threads);
  std::ostringstream prov;
  prov << kVersion << "\n"
       << "command=simulate reps=" << a.reps << " alpha=" << cfg.alpha << " control=" << a.control
       << " methods=" << a.methods;
  write_text(a.out, rdb::report_to_tsv(report, prov.str(), a.timings));
  if (!a.json_path.empty()) write_text(a.json_path, report_to_json(report).dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust differential abundance testing for compositional count data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TestArgs ta;
  auto* test = app.add_subcommand("test", "Run the RDB test on a count table");
  test->add_option("--counts", ta.counts, "Count TSV")->required();
  test->add_option("--meta", ta.meta, "Metadata TSV")->required();
  test->add_option("--group", ta.group, "Group column name (two-sample test)");
  test->add_option("--outcome", ta.outcome, "Outcome column name (continuous test)");
  test->add_option("--alpha", ta.alpha, "Target level")->check(CLI::Range(1e-12, 1.0));
  test->add_option("--mode", ta.mode, "Error control mode")->check(CLI::IsMember({"fwer", "fdr"}));
  test->add_option("--balance", ta.balance, "Comma-separated covariate columns to balance");
  test->add_option("--weights", ta.weights, "Weights TSV (sample_id, weight)");
  test->add_option("--rq", ta.rq, "Two-sided widening factor r_Q");
  test->add_option("--m-threshold", ta.m_threshold, "Median band M, or 'auto'");
  test->add_option("--fdr-tail", ta.fdr_tail, "Tail law for the FDR plug-in")
      ->check(CLI::IsMember({"rayleigh", "halfnormal"}));
  test->add_option("--group1", ta.group1, "Level treated as group 1");
  test->add_option("--out", ta.out, "Results TSV path (- for stdout)");
  test->add_option("--json", ta.json_path, "Full-trace JSON path");

  SimArgs sa;
  auto* sim = app.add_subcommand("simulate", "Run a Monte-Carlo benchmark scenario");
  sim->add_option("--scenario", sa.scenario, "pg|pg-continuous|lognormal|lognormal-cov|shuffle")
      ->required();
  sim->add_option("--d", sa.d, "Number of components");
  sim->add_option("--s", sa.s, "Number of differential components");
  sim->add_option("--m1", sa.m1, "Group 1 sample size");
  sim->add_option("--m2", sa.m2, "Group 2 sample size");
  sim->add_option("--setting", sa.setting, "Effect-size setting")->check(CLI::IsMember({1, 2}));
  sim->add_option("--reps", sa.reps, "Replicates");
  sim->add_option("--seed", sa.seed, "RNG seed");
  sim->add_option("--beta", sa.beta, "Depth unbalance factor (>= 1)");
  sim->add_option("--rho", sa.rho, "AR(1) correlation");
  sim->add_option("--alpha", sa.alpha, "Target level");
  sim->add_option("--methods", sa.methods, "Comma-separated method list");
  sim->add_option("--control", sa.control, "fwer|fdr")->check(CLI::IsMember({"fwer", "fdr"}));
  sim->add_option("--source", sa.source, "Source counts for shuffle");
  sim->add_option("--out", sa.out, "Report TSV path (- for stdout)");
  sim->add_option("--json", sa.json_path, "Report JSON path");
  sim->add_option("--threads", sa.threads, "Worker threads (default RDB_THREADS or 1)");
  sim->add_flag("--timings", sa.timings, "Include runtime rows in the report");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(test)) return cmd_test(ta);
    return cmd_simulate(sa);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const rdb::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
