#pragma once

// Long-format CSV ingestion and result serialization (JSON and tidy CSV).

#include "gagfl/model.hpp"
#include "gagfl/selection.hpp"
#include "gagfl/simulate.hpp"

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace gagfl {

struct LoadOptions {
  bool standardize = false;
};

struct LoadedPanel {
  Panel panel;
  std::string y_name;
  std::vector<std::string> x_names;
  std::vector<bool> standardized;  // per x column
};

// Header: unit, time, y, x1..xk. Units keep first-appearance order, periods
// are sorted (numerically when every label is a number).
LoadedPanel read_panel_csv(std::istream& in, const LoadOptions& opts = {}, const std::string& source = "<input>");
LoadedPanel load_panel(const std::string& path, const LoadOptions& opts = {});

void write_panel_csv(std::ostream& out, const Panel& panel);

nlohmann::json fit_to_json(const FitResult& fit, const Panel& panel, const std::vector<std::string>& x_names = {});
FitResult fit_from_json(const nlohmann::json& j);

nlohmann::json truth_to_json(const SimTruth& truth);
SimTruth truth_from_json(const nlohmann::json& j);

nlohmann::json selection_to_json(const SelectionReport& report);

// One row per group-regime-coefficient.
void write_regimes_csv(std::ostream& out, const FitResult& fit, const Panel& panel,
                       const std::vector<std::string>& x_names = {});
void write_assignment_csv(std::ostream& out, const FitResult& fit, const Panel& panel);
// Per-group coefficient paths over time.
void write_plotdata_csv(std::ostream& out, const FitResult& fit, const Panel& panel,
                        const std::vector<std::string>& x_names = {});
void write_selection_csv(std::ostream& out, const SelectionReport& report);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace gagfl
