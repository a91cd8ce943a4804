#include "gagfl/error.hpp"
#include "gagfl/gagfl.hpp"
#include "gagfl/gfe.hpp"
#include "gagfl/io.hpp"
#include "gagfl/metrics.hpp"
#include "gagfl/selection.hpp"
#include "gagfl/simulate.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace gagfl;

namespace {

Mode parse_mode(const std::string& m) {
  if (m == "level") return Mode::level;
  if (m == "fd") return Mode::first_difference;
  throw ValidationError("mode must be 'level' or 'fd'");
}

GagflOptions make_options(const std::string& mode, double kappa, int n_starts, std::uint64_t seed, int threads) {
  GagflOptions o;
  o.design.mode = parse_mode(mode);
  o.agfl.kappa = kappa;
  o.gfe.n_starts = n_starts;
  o.gfe.seed = seed;
  o.gfe.threads = threads;
  return o;
}

SelectionOptions make_selection(double lambda_min, double lambda_max, int lambda_points, double ic_c, int threads) {
  SelectionOptions s;
  s.grid = {lambda_min, lambda_max, lambda_points};
  s.ic_c = ic_c;
  s.threads = threads;
  return s;
}

std::vector<Matrix> path_list(const CoefficientPath& p) {
  std::vector<Matrix> out;
  for (int g = 0; g < p.n_groups(); ++g) out.push_back(p.group(g));
  return out;
}

std::vector<std::vector<int>> dates_of(const BreakStructure& b) {
  std::vector<std::vector<int>> out;
  for (const auto& g : b.groups) out.push_back(g.dates);
  return out;
}

std::vector<Matrix> regimes_of(const BreakStructure& b) {
  std::vector<Matrix> out;
  for (const auto& g : b.groups) out.push_back(g.regimes);
  return out;
}

struct SimPanel {
  Panel panel;
  SimTruth truth;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Grouped adaptive group fused Lasso for panels with latent groups and group-specific breaks";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<Panel>(m, "Panel")
      .def(py::init<Matrix, Matrix, std::vector<std::string>, std::vector<std::string>>(), py::arg("y"), py::arg("x"),
           py::arg("unit_ids") = std::vector<std::string>{}, py::arg("period_ids") = std::vector<std::string>{},
           "y is N x T, x is (N*T) x k with row i*T + t holding x_it")
      .def_property_readonly("n_units", &Panel::n_units)
      .def_property_readonly("n_periods", &Panel::n_periods)
      .def_property_readonly("n_regressors", &Panel::n_regressors)
      .def_property_readonly("y", &Panel::y_matrix)
      .def_property_readonly("x", &Panel::x_matrix)
      .def_property_readonly("unit_ids", &Panel::unit_ids)
      .def_property_readonly("period_ids", &Panel::period_ids)
      .def("__repr__", [](const Panel& p) {
        std::ostringstream os;
        os << "Panel(N=" << p.n_units() << ", T=" << p.n_periods() << ", k=" << p.n_regressors() << ")";
        return os.str();
      });

  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly("assignment", [](const FitResult& f) { return f.assignment.labels(); },
                             "0-based group label per unit")
      .def_property_readonly("n_groups", [](const FitResult& f) { return f.assignment.n_groups(); })
      .def_property_readonly("break_dates", [](const FitResult& f) { return dates_of(f.breaks); },
                             "1-based first period of each new regime, per group")
      .def_property_readonly("regimes", [](const FitResult& f) { return regimes_of(f.breaks); })
      .def_property_readonly("regime_std_errors", [](const FitResult& f) { return f.regime_std_errors; })
      .def_property_readonly("path", [](const FitResult& f) { return path_list(f.post_lasso_path); })
      .def_property_readonly("penalized_path", [](const FitResult& f) { return path_list(f.penalized_path); })
      .def_property_readonly("std_error_path", [](const FitResult& f) { return path_list(f.std_error_path); })
      .def_readonly("lambda_", &FitResult::lambda)
      .def_readonly("penalized_objective", &FitResult::penalized_objective)
      .def_readonly("sse", &FitResult::sse)
      .def_readonly("n_params", &FitResult::n_params)
      .def_readonly("n_outer_iterations", &FitResult::n_outer_iterations)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("cycle_detected", &FitResult::cycle_detected)
      .def("to_json", [](const FitResult& f, const Panel& p) { return fit_to_json(f, p).dump(); }, py::arg("panel"));

  py::class_<SelectionReport>(m, "SelectionReport")
      .def_readonly("chosen_groups", &SelectionReport::chosen_groups)
      .def_readonly("sigma2", &SelectionReport::sigma2)
      .def_readonly("warnings", &SelectionReport::warnings)
      .def_property_readonly("chosen_fit", [](const SelectionReport& r) { return r.chosen_fit; })
      .def_property_readonly("bic", [](const SelectionReport& r) {
        py::dict d;
        for (const auto& c : r.choices) d[py::int_(c.n_groups)] = c.bic;
        return d;
      })
      .def_property_readonly("lambdas", [](const SelectionReport& r) {
        py::dict d;
        for (const auto& c : r.choices) d[py::int_(c.n_groups)] = c.lambda;
        return d;
      })
      .def("to_json", [](const SelectionReport& r) { return selection_to_json(r).dump(); });

  py::class_<SimPanel>(m, "SimulatedPanel")
      .def_readonly("panel", &SimPanel::panel)
      .def_property_readonly("assignment", [](const SimPanel& s) { return s.truth.assignment.labels(); })
      .def_property_readonly("break_dates", [](const SimPanel& s) { return dates_of(s.truth.breaks); })
      .def_property_readonly("regimes", [](const SimPanel& s) { return regimes_of(s.truth.breaks); })
      .def_property_readonly("path", [](const SimPanel& s) { return path_list(s.truth.beta_path); });

  m.def(
      "load_panel",
      [](const std::string& path, bool standardize) { return load_panel(path, {standardize}).panel; },
      py::arg("path"), py::arg("standardize") = false, "Read a long-format CSV: unit,time,y,x1..xk");

  m.def(
      "simulate",
      [](int dgp, int n_units, int n_periods, double sigma, std::uint64_t seed) {
        if (dgp < 1 || dgp > 4) throw ValidationError("dgp must be 1..4");
        DgpSpec spec;
        spec.dgp = static_cast<Dgp>(dgp - 1);
        spec.n_units = n_units;
        spec.n_periods = n_periods;
        spec.sigma = sigma;
        spec.seed = seed;
        auto d = generate(spec);
        return SimPanel{std::move(d.panel), std::move(d.truth)};
      },
      py::arg("dgp") = 1, py::arg("n_units") = 50, py::arg("n_periods") = 10, py::arg("sigma") = 0.5,
      py::arg("seed") = 0);

  m.def(
      "fit",
      [](const Panel& panel, int n_groups, std::optional<double> lambda, const std::string& mode, double kappa,
         int n_starts, std::uint64_t seed, double lambda_min, double lambda_max, int lambda_points, double ic_c,
         int threads) {
        const auto opts = make_options(mode, kappa, n_starts, seed, threads);
        py::gil_scoped_release release;
        if (lambda) return fit_gagfl(panel, n_groups, *lambda, opts);
        return select_lambda(panel, n_groups, make_selection(lambda_min, lambda_max, lambda_points, ic_c, threads), opts)
            .best();
      },
      py::arg("panel"), py::arg("n_groups"), py::arg("lambda_") = py::none(), py::arg("mode") = "level",
      py::arg("kappa") = 2.0, py::arg("n_starts") = 100, py::arg("seed") = 0, py::arg("lambda_min") = 0.01,
      py::arg("lambda_max") = 100.0, py::arg("lambda_points") = 50, py::arg("ic_c") = 0.05, py::arg("threads") = 1,
      "Fit with a fixed lambda, or choose lambda by the information criterion when lambda_ is None");

  m.def(
      "select_groups",
      [](const Panel& panel, std::vector<int> group_range, const std::string& mode, double kappa, int n_starts,
         std::uint64_t seed, double lambda_min, double lambda_max, int lambda_points, double ic_c, bool bic_initial,
         int threads) {
        const auto opts = make_options(mode, kappa, n_starts, seed, threads);
        auto sel = make_selection(lambda_min, lambda_max, lambda_points, ic_c, threads);
        if (bic_initial) sel.bic_variant = BicVariant::initial_estimates;
        py::gil_scoped_release release;
        return bic_groups(panel, group_range, sel, opts);
      },
      py::arg("panel"), py::arg("group_range") = std::vector<int>{1, 2, 3, 4, 5}, py::arg("mode") = "level",
      py::arg("kappa") = 2.0, py::arg("n_starts") = 100, py::arg("seed") = 0, py::arg("lambda_min") = 0.01,
      py::arg("lambda_max") = 100.0, py::arg("lambda_points") = 50, py::arg("ic_c") = 0.05,
      py::arg("bic_initial") = false, py::arg("threads") = 1);

  m.def(
      "gfe",
      [](const Panel& panel, int n_groups, int n_starts, std::uint64_t seed) {
        GfeOptions o;
        o.n_starts = n_starts;
        o.seed = seed;
        const auto r = fit_gfe(panel, n_groups, o);
        return py::make_tuple(r.assignment.labels(), path_list(r.path), r.ssr);
      },
      py::arg("panel"), py::arg("n_groups"), py::arg("n_starts") = 100, py::arg("seed") = 0,
      "Preliminary grouped fixed-effects fit: (labels, per-group T x k paths, SSR)");

  m.def(
      "evaluate",
      [](const FitResult& fit, const SimPanel& sim) {
        const auto r = evaluate_fit(fit, sim.truth.assignment, sim.truth.breaks, sim.truth.beta_path);
        py::dict d;
        d["mf"] = r.mf;
        d["hd"] = r.hd;
        d["break_count_correct"] = r.break_count_correct;
        d["rmse"] = r.rmse;
        d["coverage"] = r.coverage_ok ? py::object(py::float_(r.coverage)) : py::object(py::none());
        return d;
      },
      py::arg("fit"), py::arg("truth"));

  m.def(
      "misclassification",
      [](const std::vector<int>& estimated, const std::vector<int>& truth) {
        auto groups = [](const std::vector<int>& v) { return v.empty() ? 0 : *std::max_element(v.begin(), v.end()) + 1; };
        return misclassification(GroupAssignment(estimated, groups(estimated)), GroupAssignment(truth, groups(truth))).mf;
      },
      py::arg("estimated"), py::arg("truth"), "Share of misassigned units under the best label matching (0-based labels)");

  m.def(
      "hausdorff",
      [](const std::vector<int>& estimated, const std::vector<int>& truth, int n_periods) {
        return hausdorff(estimated, truth, n_periods).scaled;
      },
      py::arg("estimated"), py::arg("truth"), py::arg("n_periods"), "Hausdorff distance between break-date sets, times 100/T");
}
