#include "gagfl/io.hpp"

#include "gagfl/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace gagfl {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      cur += ch;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end;
}

std::string names(const std::vector<std::string>& x_names, int j) {
  return j < static_cast<int>(x_names.size()) ? x_names[static_cast<std::size_t>(j)] : "x" + std::to_string(j + 1);
}

json path_to_json(const CoefficientPath& path) {
  json out = json::array();
  for (int g = 0; g < path.n_groups(); ++g) {
    json rows = json::array();
    for (int t = 0; t < path.n_periods(); ++t) {
      json row = json::array();
      for (int j = 0; j < path.n_regressors(); ++j) row.push_back(path.group(g)(t, j));
      rows.push_back(std::move(row));
    }
    out.push_back(std::move(rows));
  }
  return out;
}

Matrix matrix_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) throw ParseError("expected a non-empty array of rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ParseError("ragged coefficient rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
  }
  return m;
}

CoefficientPath path_from_json(const json& j) {
  std::vector<Matrix> groups;
  for (const auto& g : j) groups.push_back(matrix_from_json(g));
  return CoefficientPath(std::move(groups));
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

LoadedPanel read_panel_csv(std::istream& in, const LoadOptions& opts, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  const auto header = split_fields(line);
  if (header.size() < 4) throw ParseError(source + ": header needs unit, time, y and at least one regressor");
  const int k = static_cast<int>(header.size()) - 3;

  struct Record {
    std::size_t unit;
    std::string period;
    std::vector<double> values;
    int line;
  };
  std::vector<std::string> units;
  std::unordered_map<std::string, std::size_t> unit_index;
  std::vector<Record> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << source << ":" << line_no << ": expected " << header.size() << " fields, found " << fields.size();
      throw ParseError(msg.str());
    }
    Record rec;
    auto [it, fresh] = unit_index.emplace(fields[0], units.size());
    if (fresh) units.push_back(fields[0]);
    rec.unit = it->second;
    rec.period = fields[1];
    rec.line = line_no;
    for (std::size_t c = 2; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v) || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << source << ":" << line_no << ": column '" << header[c] << "' is not a finite number: '" << fields[c] << "'";
        throw ParseError(msg.str());
      }
      rec.values.push_back(v);
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ParseError(source + ": no data rows");

  std::vector<std::string> periods;
  {
    std::map<std::string, int> seen;
    for (const auto& r : records) {
      if (seen.emplace(r.period, 0).second) periods.push_back(r.period);
    }
    std::vector<double> numeric(periods.size());
    bool all_numeric = true;
    for (std::size_t p = 0; p < periods.size(); ++p) all_numeric = all_numeric && parse_double(periods[p], numeric[p]);
    if (all_numeric) {
      std::vector<std::size_t> order(periods.size());
      for (std::size_t p = 0; p < order.size(); ++p) order[p] = p;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return numeric[a] < numeric[b]; });
      std::vector<std::string> sorted;
      for (std::size_t p : order) sorted.push_back(periods[p]);
      periods = std::move(sorted);
    } else {
      std::sort(periods.begin(), periods.end());
    }
  }
  std::unordered_map<std::string, int> period_index;
  for (std::size_t p = 0; p < periods.size(); ++p) period_index[periods[p]] = static_cast<int>(p);

  const int n = static_cast<int>(units.size());
  const int t_len = static_cast<int>(periods.size());
  Matrix y(n, t_len);
  Matrix x(static_cast<Eigen::Index>(n) * t_len, k);
  std::vector<int> filled(static_cast<std::size_t>(n) * t_len, 0);
  for (const auto& r : records) {
    const int t = period_index.at(r.period);
    const std::size_t cell = r.unit * static_cast<std::size_t>(t_len) + static_cast<std::size_t>(t);
    if (filled[cell]) {
      std::ostringstream msg;
      msg << source << ":" << r.line << ": duplicate row for unit '" << units[r.unit] << "', time '" << r.period
          << "' (first seen on line " << filled[cell] << ")";
      throw ValidationError(msg.str());
    }
    filled[cell] = r.line;
    y(static_cast<Eigen::Index>(r.unit), t) = r.values[0];
    for (int j = 0; j < k; ++j) x(static_cast<Eigen::Index>(cell), j) = r.values[static_cast<std::size_t>(j + 1)];
  }
  std::vector<std::string> missing;
  std::size_t n_missing = 0;
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < t_len; ++t) {
      if (filled[static_cast<std::size_t>(i) * t_len + t]) continue;
      ++n_missing;
      if (missing.size() < 20) missing.push_back("(" + units[static_cast<std::size_t>(i)] + ", " + periods[static_cast<std::size_t>(t)] + ")");
    }
  }
  if (n_missing > 0) {
    std::ostringstream msg;
    msg << source << ": unbalanced panel, " << n_missing << " missing (unit, time) cell" << (n_missing > 1 ? "s" : "") << ":";
    for (const auto& m : missing) msg << ' ' << m;
    if (n_missing > missing.size()) msg << " ...";
    throw ValidationError(msg.str());
  }

  std::vector<std::string> x_names;
  for (int j = 0; j < k; ++j) x_names.push_back(header[static_cast<std::size_t>(j + 3)]);
  std::vector<bool> standardized(static_cast<std::size_t>(k), false);
  if (opts.standardize) {
    auto standardize = [&](auto&& col, const std::string& name) {
      const double cnt = static_cast<double>(col.size());
      const double mean = col.sum() / cnt;
      const double var = (col.array() - mean).square().sum() / (cnt - 1.0);
      if (!(var > 0.0)) throw ValidationError("cannot standardize constant column '" + name + "'");
      col = ((col.array() - mean) / std::sqrt(var)).matrix();
    };
    Eigen::Map<Vector> yv(y.data(), y.size());
    standardize(yv, header[2]);
    for (int j = 0; j < k; ++j) {
      if ((x.col(j).array() == 1.0).all()) continue;
      auto col = x.col(j);
      standardize(col, x_names[static_cast<std::size_t>(j)]);
      standardized[static_cast<std::size_t>(j)] = true;
    }
  }
  return {Panel(std::move(y), std::move(x), units, periods), header[2], std::move(x_names), std::move(standardized)};
}

LoadedPanel load_panel(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file '" + path + "'");
  return read_panel_csv(in, opts, path);
}

void write_panel_csv(std::ostream& out, const Panel& panel) {
  out << "unit,time,y";
  for (int j = 0; j < panel.n_regressors(); ++j) out << ",x" << j + 1;
  out << '\n';
  out.precision(17);
  for (int i = 0; i < panel.n_units(); ++i) {
    for (int t = 0; t < panel.n_periods(); ++t) {
      out << panel.unit_ids()[static_cast<std::size_t>(i)] << ',' << panel.period_ids()[static_cast<std::size_t>(t)] << ','
          << panel.y(i, t);
      for (int j = 0; j < panel.n_regressors(); ++j) out << ',' << panel.x(i, t)(j);
      out << '\n';
    }
  }
}

json fit_to_json(const FitResult& fit, const Panel& panel, const std::vector<std::string>& x_names) {
  json j;
  j["n_groups"] = fit.assignment.n_groups();
  j["n_periods"] = fit.breaks.n_periods;
  json coefs = json::array();
  for (int c = 0; c < panel.n_regressors(); ++c) coefs.push_back(names(x_names, c));
  j["coefficients"] = coefs;
  json labels = json::array();
  for (int i = 0; i < fit.assignment.n_units(); ++i) labels.push_back(fit.assignment[i] + 1);
  j["assignment"] = {{"units", panel.unit_ids()}, {"groups", labels}};
  json groups = json::array();
  for (int g = 0; g < fit.breaks.n_groups(); ++g) {
    const auto& gb = fit.breaks.groups[static_cast<std::size_t>(g)];
    json regimes = json::array();
    for (int r = 0; r <= gb.n_breaks(); ++r) {
      json est = json::array();
      json se = json::array();
      for (int c = 0; c < gb.regimes.cols(); ++c) {
        est.push_back(gb.regimes(r, c));
        se.push_back(fit.regime_std_errors[static_cast<std::size_t>(g)](r, c));
      }
      const int first = gb.regime_start(r);
      const int last = gb.regime_end(r, fit.breaks.n_periods) - 1;
      regimes.push_back({{"start", first},
                         {"end", last},
                         {"start_label", panel.period_ids()[static_cast<std::size_t>(first - 1)]},
                         {"end_label", panel.period_ids()[static_cast<std::size_t>(last - 1)]},
                         {"estimate", est},
                         {"std_error", se}});
    }
    json labels_at = json::array();
    for (int d : gb.dates) labels_at.push_back(panel.period_ids()[static_cast<std::size_t>(d - 1)]);
    groups.push_back({{"group", g + 1},
                      {"size", fit.assignment.sizes()[static_cast<std::size_t>(g)]},
                      {"break_dates", gb.dates},
                      {"break_labels", labels_at},
                      {"regimes", regimes}});
  }
  j["groups"] = groups;
  j["lambda"] = fit.lambda;
  j["penalized_objective"] = fit.penalized_objective;
  j["sse"] = fit.sse;
  j["penalized_sse"] = fit.penalized_sse;
  j["n_params"] = fit.n_params;
  j["diagnostics"] = {{"outer_iterations", fit.n_outer_iterations},
                      {"converged", fit.converged},
                      {"cycle_detected", fit.cycle_detected},
                      {"empty_group_repairs", fit.empty_group_repairs},
                      {"agfl_unconverged", fit.agfl_unconverged}};
  j["post_lasso_path"] = path_to_json(fit.post_lasso_path);
  j["std_error_path"] = path_to_json(fit.std_error_path);
  j["penalized_path"] = path_to_json(fit.penalized_path);
  return j;
}

FitResult fit_from_json(const json& j) {
  try {
    FitResult fit;
    const int n_groups = j.at("n_groups").get<int>();
    const auto labels = j.at("assignment").at("groups").get<std::vector<int>>();
    fit.assignment = GroupAssignment::from_one_based(labels, n_groups);
    fit.breaks.n_periods = j.at("n_periods").get<int>();
    for (const auto& g : j.at("groups")) {
      GroupBreaks gb;
      gb.dates = g.at("break_dates").get<std::vector<int>>();
      json est = json::array();
      json se = json::array();
      for (const auto& r : g.at("regimes")) {
        est.push_back(r.at("estimate"));
        se.push_back(r.at("std_error"));
      }
      gb.regimes = matrix_from_json(est);
      fit.regime_std_errors.push_back(matrix_from_json(se));
      fit.breaks.groups.push_back(std::move(gb));
    }
    fit.breaks.validate();
    fit.lambda = j.at("lambda").get<double>();
    fit.penalized_objective = j.at("penalized_objective").get<double>();
    fit.sse = j.at("sse").get<double>();
    fit.penalized_sse = j.value("penalized_sse", 0.0);
    fit.n_params = j.at("n_params").get<int>();
    const auto& d = j.at("diagnostics");
    fit.n_outer_iterations = d.value("outer_iterations", 0);
    fit.converged = d.value("converged", false);
    fit.cycle_detected = d.value("cycle_detected", false);
    fit.empty_group_repairs = d.value("empty_group_repairs", 0);
    fit.agfl_unconverged = d.value("agfl_unconverged", 0);
    fit.post_lasso_path = path_from_json(j.at("post_lasso_path"));
    fit.std_error_path = path_from_json(j.at("std_error_path"));
    if (j.contains("penalized_path")) fit.penalized_path = path_from_json(j.at("penalized_path"));
    return fit;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed fit JSON: ") + e.what());
  }
}

json truth_to_json(const SimTruth& truth) {
  json labels = json::array();
  for (int i = 0; i < truth.assignment.n_units(); ++i) labels.push_back(truth.assignment[i] + 1);
  json groups = json::array();
  for (const auto& gb : truth.breaks.groups) groups.push_back({{"break_dates", gb.dates}, {"regimes", matrix_to_json(gb.regimes)}});
  return {{"n_groups", truth.assignment.n_groups()},
          {"n_periods", truth.breaks.n_periods},
          {"assignment", labels},
          {"groups", groups}};
}

SimTruth truth_from_json(const json& j) {
  try {
    SimTruth truth;
    truth.assignment = GroupAssignment::from_one_based(j.at("assignment").get<std::vector<int>>(), j.at("n_groups").get<int>());
    truth.breaks.n_periods = j.at("n_periods").get<int>();
    for (const auto& g : j.at("groups")) {
      GroupBreaks gb;
      gb.dates = g.at("break_dates").get<std::vector<int>>();
      gb.regimes = matrix_from_json(g.at("regimes"));
      truth.breaks.groups.push_back(std::move(gb));
    }
    truth.breaks.validate();
    truth.beta_path = expand_regimes(truth.breaks, truth.breaks.n_periods);
    return truth;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed truth JSON: ") + e.what());
  }
}

json selection_to_json(const SelectionReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"n_groups", r.n_groups}, {"lambda", r.lambda}, {"ic", r.ic}, {"bic", r.bic}, {"sse", r.sse},
                    {"n_params", r.n_params}, {"break_counts", r.break_counts}, {"chosen", r.chosen}});
  }
  json choices = json::array();
  for (const auto& c : report.choices) {
    choices.push_back({{"n_groups", c.n_groups}, {"lambda", c.lambda}, {"ic", c.ic}, {"bic", c.bic}, {"sse", c.sse},
                       {"n_params", c.n_params}, {"initial_sse", c.initial_sse}, {"break_counts", c.break_counts}});
  }
  return {{"chosen_groups", report.chosen_groups},
          {"sigma2", report.sigma2},
          {"choices", choices},
          {"grid", rows},
          {"warnings", report.warnings}};
}

void write_regimes_csv(std::ostream& out, const FitResult& fit, const Panel& panel,
                       const std::vector<std::string>& x_names) {
  out << "group,regime,start,end,coefficient,estimate,std_error\n";
  out.precision(17);
  for (int g = 0; g < fit.breaks.n_groups(); ++g) {
    const auto& gb = fit.breaks.groups[static_cast<std::size_t>(g)];
    for (int r = 0; r <= gb.n_breaks(); ++r) {
      for (int c = 0; c < gb.regimes.cols(); ++c) {
        out << g + 1 << ',' << r + 1 << ',' << panel.period_ids()[static_cast<std::size_t>(gb.regime_start(r) - 1)] << ','
            << panel.period_ids()[static_cast<std::size_t>(gb.regime_end(r, fit.breaks.n_periods) - 2)] << ','
            << names(x_names, c) << ',' << gb.regimes(r, c) << ','
            << fit.regime_std_errors[static_cast<std::size_t>(g)](r, c) << '\n';
      }
    }
  }
}

void write_assignment_csv(std::ostream& out, const FitResult& fit, const Panel& panel) {
  out << "unit,group\n";
  for (int i = 0; i < fit.assignment.n_units(); ++i) {
    out << panel.unit_ids()[static_cast<std::size_t>(i)] << ',' << fit.assignment[i] + 1 << '\n';
  }
}

void write_plotdata_csv(std::ostream& out, const FitResult& fit, const Panel& panel,
                        const std::vector<std::string>& x_names) {
  out << "group,period,time,coefficient,penalized,post_lasso,std_error\n";
  out.precision(17);
  const bool has_pen = fit.penalized_path.n_groups() == fit.post_lasso_path.n_groups();
  for (int g = 0; g < fit.post_lasso_path.n_groups(); ++g) {
    for (int t = 0; t < fit.post_lasso_path.n_periods(); ++t) {
      for (int c = 0; c < fit.post_lasso_path.n_regressors(); ++c) {
        out << g + 1 << ',' << t + 1 << ',' << panel.period_ids()[static_cast<std::size_t>(t)] << ',' << names(x_names, c)
            << ',';
        if (has_pen) out << fit.penalized_path.group(g)(t, c);
        out << ',' << fit.post_lasso_path.group(g)(t, c) << ',' << fit.std_error_path.group(g)(t, c) << '\n';
      }
    }
  }
}

void write_selection_csv(std::ostream& out, const SelectionReport& report) {
  out << "kind,n_groups,lambda,ic,bic,sse,n_params,break_counts,chosen\n";
  out.precision(17);
  auto counts = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t q = 0; q < v.size(); ++q) s += (q ? ";" : "") + std::to_string(v[q]);
    return s;
  };
  for (const auto& c : report.choices) {
    out << "chosen," << c.n_groups << ',' << c.lambda << ',' << c.ic << ',' << c.bic << ',' << c.sse << ',' << c.n_params
        << ',' << counts(c.break_counts) << ',' << int(c.n_groups == report.chosen_groups) << '\n';
  }
  for (const auto& r : report.rows) {
    out << "grid," << r.n_groups << ',' << r.lambda << ',' << r.ic << ',' << r.bic << ',' << r.sse << ',' << r.n_params
        << ',' << counts(r.break_counts) << ',' << int(r.chosen) << '\n';
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace gagfl
