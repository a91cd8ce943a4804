#pragma once

// Tuning: lambda by the information criterion over a log grid, the number
// of groups by BIC over a range.

#include "gagfl/gagfl.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gagfl {

struct LambdaGrid {
  double min = 0.01;
  double max = 100.0;
  int n_points = 50;

  static LambdaGrid simulation() { return {0.01, 100.0, 50}; }
  static LambdaGrid empirical() { return {0.001, 50.0, 200}; }

  void validate() const;
  std::vector<double> values() const;  // ascending
};

// rho = c ln(NT) / sqrt(NT)
double ic_rho(int n_units, int n_periods, double c);
double ic_value(double sse, int n_params, int n_units, int n_periods, double c);
double bic_value(double sse, int n_params, double sigma2, int n_units, int n_periods);

// Index of the IC-minimizing fit; ties go to the earliest entry.
std::size_t ic_lambda(const std::vector<FitResult>& fits, int n_units, int n_periods, double c);

enum class BicVariant { final_estimates, initial_estimates };

struct SelectionOptions {
  LambdaGrid grid;
  double ic_c = 0.05;
  BicVariant bic_variant = BicVariant::final_estimates;
  int threads = 1;
};

struct SelectionRow {
  int n_groups = 0;
  double lambda = 0.0;
  double ic = 0.0;
  double bic = 0.0;
  double sse = 0.0;
  int n_params = 0;
  std::vector<int> break_counts;
  bool chosen = false;
};

struct GroupChoice {
  int n_groups = 0;
  double lambda = 0.0;
  double ic = 0.0;
  double bic = 0.0;
  double sse = 0.0;
  int n_params = 0;
  double initial_sse = 0.0;
  std::vector<int> break_counts;
};

struct LambdaSelection {
  std::vector<FitResult> fits;        // successful fits, ascending lambda
  std::vector<double> ic;
  std::size_t chosen = 0;
  double initial_sse = 0.0;           // preliminary GFE SSR / (N T)
  std::vector<std::string> warnings;

  const FitResult& best() const { return fits[chosen]; }
};

LambdaSelection select_lambda(const Panel& panel, int n_groups, const SelectionOptions& sel,
                              const GagflOptions& opts);

struct SelectionReport {
  std::vector<SelectionRow> rows;
  std::vector<GroupChoice> choices;
  std::vector<FitResult> choice_fits;  // IC-chosen fit per entry of choices
  int chosen_groups = 0;
  double sigma2 = 0.0;
  std::optional<FitResult> chosen_fit;

  const FitResult* fit_for(int n_groups) const;
  std::vector<std::string> warnings;
};

// A G whose fits all fail is dropped with a warning.
SelectionReport bic_groups(const Panel& panel, const std::vector<int>& group_range, const SelectionOptions& sel,
                           const GagflOptions& opts);

}  // namespace gagfl
