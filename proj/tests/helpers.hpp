#pragma once

#include "gagfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace testing_util {

using gagfl::Matrix;
using gagfl::Vector;

// y_it = x_it' path(g_i, t) + sigma e_it with standard normal x.
inline gagfl::Panel make_panel(const std::vector<int>& labels, const std::vector<Matrix>& paths, double sigma,
                               unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = static_cast<int>(labels.size());
  const int t_len = static_cast<int>(paths.front().rows());
  const int k = static_cast<int>(paths.front().cols());
  Matrix y(n, t_len);
  Matrix x(n * t_len, k);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < t_len; ++t) {
      double v = 0.0;
      for (int j = 0; j < k; ++j) {
        x(i * t_len + t, j) = z(rng);
        v += x(i * t_len + t, j) * paths[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])](t, j);
      }
      y(i, t) = v + sigma * z(rng);
    }
  }
  return gagfl::Panel(y, x);
}

// Dense OLS via the normal equations.
inline Vector dense_ols(const Matrix& x, const Vector& y) {
  return (x.transpose() * x).ldlt().solve(x.transpose() * y);
}

inline Matrix step_path(int t_len, const std::vector<int>& dates, const std::vector<double>& values) {
  Matrix p(t_len, 1);
  std::size_t j = 0;
  for (int t = 1; t <= t_len; ++t) {
    if (j < dates.size() && t == dates[j]) ++j;
    p(t - 1, 0) = values[j];
  }
  return p;
}

// Brute-force SSR of a k=1 assignment using per-cell ratios.
inline double brute_ssr(const gagfl::Panel& p, const std::vector<int>& labels, int g_count) {
  double total = 0.0;
  for (int t = 0; t < p.n_periods(); ++t) {
    for (int g = 0; g < g_count; ++g) {
      double sxx = 0.0, sxy = 0.0;
      for (int i = 0; i < p.n_units(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != g) continue;
        sxx += p.x(i, t)(0) * p.x(i, t)(0);
        sxy += p.x(i, t)(0) * p.y(i, t);
      }
      if (sxx == 0.0) continue;
      const double b = sxy / sxx;
      for (int i = 0; i < p.n_units(); ++i) {
        if (labels[static_cast<std::size_t>(i)] != g) continue;
        const double r = p.y(i, t) - p.x(i, t)(0) * b;
        total += r * r;
      }
    }
  }
  return total;
}

// Accelerated proximal gradient on (1/S)||y - X theta||^2 + lambda sum_s w_s ||theta_s||
// with the cumulative-sum design built directly from the data (k = 1).
inline double fista_objective(const gagfl::Panel& p, const std::vector<int>& members, const Vector& w, double lambda) {
  const int t_len = p.n_periods();
  const double scale = static_cast<double>(p.n_units()) * t_len;
  const int rows = static_cast<int>(members.size()) * t_len;
  Matrix x = Matrix::Zero(rows, t_len);
  Vector y(rows);
  int r = 0;
  for (int i : members) {
    for (int t = 0; t < t_len; ++t, ++r) {
      for (int s = 0; s <= t; ++s) x(r, s) = p.x(i, t)(0);
      y[r] = p.y(i, t);
    }
  }
  const Matrix xtx = x.transpose() * x;
  const Vector xty = x.transpose() * y;
  const double lip = 2.0 / scale * Eigen::SelfAdjointEigenSolver<Matrix>(xtx).eigenvalues().maxCoeff();
  auto f = [&](const Vector& th) {
    double pen = 0.0;
    for (int s = 1; s < t_len; ++s) pen += w[s - 1] * std::abs(th[s]);
    return (y - x * th).squaredNorm() / scale + lambda * pen;
  };
  auto prox = [&](Vector v) {
    for (int s = 1; s < t_len; ++s) {
      const double thr = lambda * w[s - 1] / lip;
      v[s] = std::copysign(std::max(0.0, std::abs(v[s]) - thr), v[s]);
    }
    return v;
  };
  Vector th = Vector::Zero(t_len), prev = th, mom = th;
  double tk = 1.0;
  double best = f(th);
  for (int it = 0; it < 200000; ++it) {
    const Vector grad = 2.0 / scale * (xtx * mom - xty);
    const Vector next = prox(mom - grad / lip);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    if (f(next) > f(th)) {
      // adaptive restart
      mom = th;
      tk = 1.0;
      continue;
    }
    mom = next + ((tk - 1.0) / tn) * (next - th);
    prev = th;
    th = next;
    tk = tn;
    best = std::min(best, f(th));
    if ((th - prev).cwiseAbs().maxCoeff() < 1e-15) break;
  }
  return best;
}

}  // namespace testing_util
