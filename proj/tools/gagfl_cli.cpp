// gagfl: fit, select, simulate, evaluate.

#include "gagfl/error.hpp"
#include "gagfl/gagfl.hpp"
#include "gagfl/io.hpp"
#include "gagfl/metrics.hpp"
#include "gagfl/parallel.hpp"
#include "gagfl/selection.hpp"
#include "gagfl/simulate.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace {

enum Exit { ok = 0, parse_failure = 2, validation_failure = 3, numerical_failure = 4, io_failure = 5 };

struct Common {
  std::string input;
  std::string output;
  std::string format = "json";
  std::string mode = "level";
  std::string coef_kinds;
  std::string penalized_mask;
  std::string homogeneous_mask;
  std::string invariant_mask;
  double kappa = 2.0;
  bool standardize = false;
  std::uint64_t seed = 0;
  int threads = gagfl::default_threads();
  int starts = 100;
  double ic_c = 0.05;
  double lambda_min = 0.01;
  double lambda_max = 100.0;
  int lambda_points = 50;
  bool pseudoinverse = false;
};

void add_model_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--mode", c.mode, "level or fd")->check(CLI::IsMember({"level", "fd"}));
  cmd->add_option("--kappa", c.kappa, "adaptive weight exponent")->check(CLI::PositiveNumber);
  cmd->add_option("--coef-kinds", c.coef_kinds,
                  "comma list per regressor: fused, varying, invariant, homogeneous");
  cmd->add_option("--penalized-mask", c.penalized_mask, "comma list of 0/1, 1 = fused");
  cmd->add_option("--homogeneous-mask", c.homogeneous_mask, "comma list of 0/1, 1 = common to all groups");
  cmd->add_option("--invariant-mask", c.invariant_mask, "comma list of 0/1, 1 = constant within group");
  cmd->add_option("--seed", c.seed, "base seed for every random draw");
  cmd->add_option("--threads", c.threads, "worker cap")->check(CLI::PositiveNumber);
  cmd->add_option("--starts", c.starts, "random starts of the preliminary fit")->check(CLI::PositiveNumber);
  cmd->add_flag("--pseudoinverse", c.pseudoinverse, "use a pseudo-inverse for singular Gram matrices");
}

void add_grid_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--lambda-min", c.lambda_min)->check(CLI::PositiveNumber);
  cmd->add_option("--lambda-max", c.lambda_max)->check(CLI::PositiveNumber);
  cmd->add_option("--lambda-points", c.lambda_points)->check(CLI::Range(2, 100000));
  cmd->add_option("--ic-c", c.ic_c, "constant of the lambda information criterion")->check(CLI::PositiveNumber);
}

std::vector<bool> parse_mask(const std::string& text) {
  std::vector<bool> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "1" || item == "true") {
      out.push_back(true);
    } else if (item == "0" || item == "false") {
      out.push_back(false);
    } else {
      throw gagfl::ParseError("mask entries must be 0 or 1, got '" + item + "'");
    }
  }
  return out;
}

gagfl::ModelDesign design_from(const Common& c, int k) {
  gagfl::ModelDesign d;
  d.mode = c.mode == "fd" ? gagfl::Mode::first_difference : gagfl::Mode::level;
  if (!c.coef_kinds.empty()) {
    std::stringstream ss(c.coef_kinds);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "fused") d.kinds.push_back(gagfl::CoefKind::fused);
      else if (item == "varying") d.kinds.push_back(gagfl::CoefKind::time_varying);
      else if (item == "invariant") d.kinds.push_back(gagfl::CoefKind::time_invariant);
      else if (item == "homogeneous") d.kinds.push_back(gagfl::CoefKind::homogeneous);
      else throw gagfl::ParseError("unknown coefficient kind '" + item + "'");
    }
  } else if (!c.penalized_mask.empty() || !c.homogeneous_mask.empty() || !c.invariant_mask.empty()) {
    auto pen = c.penalized_mask.empty() ? std::vector<bool>(static_cast<std::size_t>(k), true) : parse_mask(c.penalized_mask);
    auto hom = parse_mask(c.homogeneous_mask);
    auto inv = parse_mask(c.invariant_mask);
    if (c.penalized_mask.empty()) {
      for (std::size_t j = 0; j < pen.size(); ++j) pen[j] = !(j < hom.size() && hom[j]) && !(j < inv.size() && inv[j]);
    }
    d = gagfl::ModelDesign::from_masks(d.mode, pen, hom, inv);
  }
  d.validate(k);
  return d;
}

gagfl::GagflOptions fit_options(const Common& c, int k) {
  gagfl::GagflOptions o;
  o.design = design_from(c, k);
  o.agfl.kappa = c.kappa;
  o.gfe.seed = c.seed;
  o.gfe.threads = c.threads;
  o.gfe.n_starts = c.starts;
  const auto policy = c.pseudoinverse ? gagfl::SingularPolicy::pseudoinverse : gagfl::SingularPolicy::error;
  o.gfe.singular_policy = policy;
  o.agfl.singular_policy = policy;
  return o;
}

gagfl::SelectionOptions selection_options(const Common& c) {
  gagfl::SelectionOptions s;
  s.grid = {c.lambda_min, c.lambda_max, c.lambda_points};
  s.ic_c = c.ic_c;
  s.threads = c.threads;
  return s;
}

std::string prefix_of(const std::string& output) {
  std::filesystem::path p(output);
  if (p.extension() == ".json" || p.extension() == ".csv") p.replace_extension();
  return p.string();
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

void emit_fit(const gagfl::FitResult& fit, const gagfl::LoadedPanel& data, const Common& c) {
  if (c.output.empty()) {
    std::cout << gagfl::fit_to_json(fit, data.panel, data.x_names).dump(2) << '\n';
    return;
  }
  const std::string prefix = prefix_of(c.output);
  if (c.format == "json") {
    gagfl::write_text_file(prefix + ".json", gagfl::fit_to_json(fit, data.panel, data.x_names).dump(2) + "\n");
  } else {
    gagfl::write_text_file(prefix + ".regimes.csv", render([&](std::ostream& os) { gagfl::write_regimes_csv(os, fit, data.panel, data.x_names); }));
    gagfl::write_text_file(prefix + ".assignment.csv", render([&](std::ostream& os) { gagfl::write_assignment_csv(os, fit, data.panel); }));
  }
  gagfl::write_text_file(prefix + ".plotdata.csv", render([&](std::ostream& os) { gagfl::write_plotdata_csv(os, fit, data.panel, data.x_names); }));
  spdlog::info("wrote results with prefix {}", prefix);
}

void log_fit(const gagfl::FitResult& fit) {
  const auto counts = fit.breaks.break_counts();
  std::ostringstream os;
  for (std::size_t g = 0; g < counts.size(); ++g) os << (g ? "," : "") << counts[g];
  spdlog::info("G={} lambda={:.6g} breaks per group=({}) sse={:.6g} outer iterations={} converged={}",
               fit.assignment.n_groups(), fit.lambda, os.str(), fit.sse, fit.n_outer_iterations, fit.converged);
  if (fit.cycle_detected) spdlog::warn("assignment cycle detected; returned the last consistent pair");
  if (fit.agfl_unconverged > 0) spdlog::warn("{} group solves hit the sweep limit", fit.agfl_unconverged);
}

int run(int argc, char** argv) {
  CLI::App app{"Grouped adaptive group fused Lasso for panels with latent groups and structural breaks"};
  app.require_subcommand(1);
  Common c;

  int groups = 3;
  std::optional<double> lambda;
  auto* fit = app.add_subcommand("fit", "estimate one model (lambda fixed or chosen by IC)");
  fit->add_option("--input", c.input, "long-format CSV: unit,time,y,x1..xk")->required();
  fit->add_option("--output", c.output, "output prefix");
  fit->add_option("--format", c.format)->check(CLI::IsMember({"csv", "json"}));
  fit->add_option("--groups", groups, "number of groups")->check(CLI::PositiveNumber);
  fit->add_option("--lambda", lambda, "tuning parameter; omit to select over the grid")->check(CLI::NonNegativeNumber);
  fit->add_flag("--standardize", c.standardize, "center and scale y and non-constant x");
  add_model_flags(fit, c);
  add_grid_flags(fit, c);

  int g_min = 1;
  int g_max = 5;
  bool bic_initial = false;
  auto* select = app.add_subcommand("select", "choose G by BIC and lambda by IC");
  select->add_option("--input", c.input)->required();
  select->add_option("--output", c.output, "output prefix");
  select->add_option("--format", c.format)->check(CLI::IsMember({"csv", "json"}));
  select->add_option("--groups-min", g_min)->check(CLI::PositiveNumber);
  select->add_option("--groups-max", g_max)->check(CLI::PositiveNumber);
  select->add_flag("--standardize", c.standardize);
  select->add_flag("--bic-initial", bic_initial, "BIC on the preliminary fully time-varying fit");
  add_model_flags(select, c);
  add_grid_flags(select, c);

  int dgp = 1;
  gagfl::DgpSpec spec;
  int reps = 100;
  std::string layout = "standard";
  std::vector<double> shares;
  bool emit_panel = false;
  int sim_g_min = 0;
  int sim_g_max = 0;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study, or one simulated panel with --emit-panel");
  simulate->add_option("--dgp", dgp)->check(CLI::Range(1, 4));
  simulate->add_option("--n", spec.n_units)->check(CLI::PositiveNumber);
  simulate->add_option("--t", spec.n_periods)->check(CLI::PositiveNumber);
  simulate->add_option("--sigma", spec.sigma)->check(CLI::NonNegativeNumber);
  simulate->add_option("--shares", shares)->delimiter(',')->expected(3);
  simulate->add_option("--layout", layout)->check(CLI::IsMember({"standard", "close"}));
  simulate->add_flag("--group-dependent-x", spec.group_dependent_x);
  simulate->add_flag("--small-breaks", spec.small_breaks);
  simulate->add_option("--reps", reps)->check(CLI::PositiveNumber);
  simulate->add_option("--groups-min", sim_g_min, "select G by BIC over this range");
  simulate->add_option("--groups-max", sim_g_max);
  simulate->add_option("--lambda", lambda, "fixed lambda instead of IC selection")->check(CLI::NonNegativeNumber);
  simulate->add_option("--output", c.output, "output prefix")->required();
  simulate->add_option("--format", c.format)->check(CLI::IsMember({"csv", "json"}));
  simulate->add_flag("--emit-panel", emit_panel, "write one panel CSV plus its truth JSON");
  add_model_flags(simulate, c);
  add_grid_flags(simulate, c);

  std::string fit_path;
  std::string truth_path;
  auto* evaluate = app.add_subcommand("evaluate", "score a fit JSON against a truth JSON");
  evaluate->add_option("--fit", fit_path)->required();
  evaluate->add_option("--truth", truth_path)->required();
  evaluate->add_option("--output", c.output, "output prefix");
  evaluate->add_option("--format", c.format)->check(CLI::IsMember({"csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return parse_failure;
  }

  if (*fit) {
    const auto data = gagfl::load_panel(c.input, {c.standardize});
    const auto opts = fit_options(c, data.panel.n_regressors());
    gagfl::FitResult result;
    if (lambda) {
      result = gagfl::fit_gagfl(data.panel, groups, *lambda, opts);
    } else {
      auto ls = gagfl::select_lambda(data.panel, groups, selection_options(c), opts);
      for (const auto& w : ls.warnings) spdlog::warn("{}", w);
      result = ls.best();
    }
    log_fit(result);
    emit_fit(result, data, c);
    return ok;
  }

  if (*select) {
    const auto data = gagfl::load_panel(c.input, {c.standardize});
    const auto opts = fit_options(c, data.panel.n_regressors());
    if (g_min > g_max) throw gagfl::ValidationError("--groups-min exceeds --groups-max");
    std::vector<int> range;
    for (int g = g_min; g <= g_max; ++g) range.push_back(g);
    auto sel = selection_options(c);
    if (bic_initial) sel.bic_variant = gagfl::BicVariant::initial_estimates;
    const auto report = gagfl::bic_groups(data.panel, range, sel, opts);
    for (const auto& w : report.warnings) spdlog::warn("{}", w);
    spdlog::info("selected G={}", report.chosen_groups);
    log_fit(*report.chosen_fit);
    if (c.output.empty()) {
      std::cout << gagfl::selection_to_json(report).dump(2) << '\n';
      return ok;
    }
    const std::string prefix = prefix_of(c.output);
    if (c.format == "json") {
      gagfl::write_text_file(prefix + ".selection.json", gagfl::selection_to_json(report).dump(2) + "\n");
    } else {
      gagfl::write_text_file(prefix + ".selection.csv", render([&](std::ostream& os) { gagfl::write_selection_csv(os, report); }));
    }
    emit_fit(*report.chosen_fit, data, c);
    return ok;
  }

  if (*simulate) {
    spec.dgp = static_cast<gagfl::Dgp>(dgp - 1);
    spec.layout = layout == "close" ? gagfl::BreakLayout::close_breaks : gagfl::BreakLayout::standard;
    if (!shares.empty()) spec.shares = shares;
    spec.seed = c.seed;
    const std::string prefix = prefix_of(c.output);
    if (emit_panel) {
      const auto data = gagfl::generate(spec);
      gagfl::write_text_file(prefix + ".csv", render([&](std::ostream& os) { gagfl::write_panel_csv(os, data.panel); }));
      gagfl::write_text_file(prefix + ".truth.json", gagfl::truth_to_json(data.truth).dump(2) + "\n");
      spdlog::info("wrote {}.csv and {}.truth.json", prefix, prefix);
      return ok;
    }
    gagfl::StudyConfig cfg;
    cfg.spec = spec;
    cfg.fit = fit_options(c, spec.dgp == gagfl::Dgp::dgp4 ? 2 : 1);
    if (spec.dgp == gagfl::Dgp::dgp3 && c.mode == "level") spdlog::warn("DGP.3 has individual effects; consider --mode fd");
    cfg.selection = selection_options(c);
    cfg.lambda = lambda;
    cfg.n_replications = reps;
    cfg.seed = c.seed;
    cfg.threads = c.threads;
    if (sim_g_min > 0 || sim_g_max > 0) {
      const int lo = sim_g_min > 0 ? sim_g_min : 1;
      const int hi = sim_g_max > 0 ? sim_g_max : 5;
      if (lo > hi) throw gagfl::ValidationError("--groups-min exceeds --groups-max");
      for (int g = lo; g <= hi; ++g) cfg.group_range.push_back(g);
    }
    const auto result = gagfl::run_study(cfg);
    gagfl::write_text_file(prefix + ".csv", render([&](std::ostream& os) { gagfl::write_study_csv(os, result); }));
    const auto& s = result.summary;
    nlohmann::json summary = {{"replications", reps},
                              {"ok", s.n_ok},
                              {"failed", s.n_failed},
                              {"mean_mf", s.mean_mf},
                              {"break_accuracy", s.break_accuracy},
                              {"hd_conditional", s.hd_conditional},
                              {"hd_unconditional", s.hd_unconditional},
                              {"mean_rmse", s.mean_rmse},
                              {"mean_coverage", s.mean_coverage}};
    if (!std::isnan(s.g_correct)) summary["g_correct"] = s.g_correct;
    gagfl::write_text_file(prefix + ".summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << '\n';
    return ok;
  }

  if (*evaluate) {
    const auto fitted = gagfl::fit_from_json(gagfl::read_json_file(fit_path));
    const auto truth = gagfl::truth_from_json(gagfl::read_json_file(truth_path));
    const auto m = gagfl::evaluate_fit(fitted, truth.assignment, truth.breaks, truth.beta_path);
    nlohmann::json out = {{"mf", m.mf},
                          {"hd", m.hd},
                          {"break_count_correct", m.break_count_correct},
                          {"rmse", m.rmse},
                          {"rmse_per_coefficient", m.rmse_per_coordinate}};
    if (m.coverage_ok) out["coverage"] = m.coverage;
    if (c.output.empty()) {
      std::cout << out.dump(2) << '\n';
    } else if (c.format == "json") {
      gagfl::write_text_file(prefix_of(c.output) + ".json", out.dump(2) + "\n");
    } else {
      std::ostringstream os;
      os.precision(17);
      os << "metric,group,value\nmf,," << m.mf << "\nrmse,," << m.rmse << '\n';
      if (m.coverage_ok) os << "coverage,," << m.coverage << '\n';
      for (std::size_t g = 0; g < m.hd.size(); ++g) {
        os << "hd," << g + 1 << ',' << m.hd[g] << "\nbreak_count_correct," << g + 1 << ',' << int(m.break_count_correct[g]) << '\n';
      }
      gagfl::write_text_file(prefix_of(c.output) + ".csv", os.str());
    }
    return ok;
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("gagfl");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("GAGFL_LOG")) spdlog::set_level(spdlog::level::from_str(env));

  try {
    return run(argc, argv);
  } catch (const gagfl::ParseError& e) {
    spdlog::error("{}", e.what());
    return parse_failure;
  } catch (const gagfl::ValidationError& e) {
    spdlog::error("{}", e.what());
    return validation_failure;
  } catch (const gagfl::NumericalError& e) {
    spdlog::error("{}", e.what());
    return numerical_failure;
  } catch (const gagfl::IoError& e) {
    spdlog::error("{}", e.what());
    return io_failure;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return numerical_failure;
  }
}
