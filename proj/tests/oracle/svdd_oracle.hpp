#pragma once

// Exact solution of the SVDD dual for tiny n by enumerating which variables
// sit at 0, at the box bound C, or strictly inside. For every split the KKT
// system of the free block is solved directly; the best feasible candidate is
// the global optimum because the dual objective is concave.

#include <cmath>
#include <optional>
#include <vector>

namespace oracle {

struct QpSolution {
  std::vector<double> alpha;
  double objective = -1e300;
};

// Solves A z = b in place (partial pivoting). Returns false if singular.
inline bool solve_linear(std::vector<std::vector<double>> a, std::vector<double> b, std::vector<double>& z) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-13) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[r][k] -= f * a[col][k];
      b[r] -= f * b[col];
    }
  }
  z.resize(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = b[i] / a[i][i];
  return true;
}

inline double dual_objective(const std::vector<std::vector<double>>& k, const std::vector<double>& a) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lin += a[i] * k[i][i];
    for (std::size_t j = 0; j < a.size(); ++j) quad += a[i] * a[j] * k[i][j];
  }
  return lin - quad;
}

// max sum_i a_i K_ii - a'Ka  s.t.  sum a = 1, 0 <= a <= c.
inline QpSolution brute_force_svdd(const std::vector<std::vector<double>>& k, double c) {
  const std::size_t n = k.size();
  QpSolution best;
  std::size_t combos = 1;
  for (std::size_t i = 0; i < n; ++i) combos *= 3;
  for (std::size_t code = 0; code < combos; ++code) {
    // state: 0 -> a=0, 1 -> a=C, 2 -> free
    std::vector<int> state(n);
    std::size_t t = code;
    for (std::size_t i = 0; i < n; ++i, t /= 3) state[i] = static_cast<int>(t % 3);
    std::vector<std::size_t> free;
    double fixed_sum = 0.0;
    std::vector<double> a(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (state[i] == 1) {
        a[i] = c;
        fixed_sum += c;
      } else if (state[i] == 2) {
        free.push_back(i);
      }
    }
    if (free.empty()) {
      if (std::abs(fixed_sum - 1.0) > 1e-12) continue;
    } else {
      // Stationarity on F: K_ii - 2 (K a)_i - lambda = 0, plus sum a = 1.
      const std::size_t f = free.size();
      std::vector<std::vector<double>> m(f + 1, std::vector<double>(f + 1, 0.0));
      std::vector<double> rhs(f + 1, 0.0);
      for (std::size_t r = 0; r < f; ++r) {
        const std::size_t i = free[r];
        for (std::size_t q = 0; q < f; ++q) m[r][q] = 2.0 * k[i][free[q]];
        m[r][f] = 1.0;
        double fixed_part = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (state[j] == 1) fixed_part += k[i][j] * c;
        }
        rhs[r] = k[i][i] - 2.0 * fixed_part;
      }
      for (std::size_t q = 0; q < f; ++q) m[f][q] = 1.0;
      rhs[f] = 1.0 - fixed_sum;
      std::vector<double> z;
      if (!solve_linear(m, rhs, z)) continue;
      bool ok = true;
      for (std::size_t q = 0; q < f; ++q) {
        if (z[q] < -1e-12 || z[q] > c + 1e-12) ok = false;
        a[free[q]] = std::min(std::max(z[q], 0.0), c);
      }
      if (!ok) continue;
    }
    const double obj = dual_objective(k, a);
    if (obj > best.objective) {
      best.objective = obj;
      best.alpha = a;
    }
  }
  return best;
}

}  // namespace oracle
