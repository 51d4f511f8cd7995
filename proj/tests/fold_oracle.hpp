#pragma once

// Brute-force fold locator for scalar shooting problems, independent of the
// continuation code: it only evaluates r(p, mu) pointwise.
//
// For each p on a grid every root mu of r(p, .) in the window is bracketed by
// sign changes and polished with TOMS 748. The number of solutions at a given
// mu changes by two exactly where a root curve mu_k(p) has a local extremum,
// so folds are the extrema of the tracked curves, refined by p-scans at 1e-3
// and then 1e-4.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "lgc/error.hpp"

namespace lgc::testing {

using Shoot = std::function<double(double p, double mu)>;

struct ScanWindow {
  double p_lo, p_hi, dp;
  double mu_lo, mu_hi, dmu;
};

struct ScanFold {
  double p;
  double mu;
};

namespace oracle_detail {

inline double safe(const Shoot& r, double p, double mu) {
  try {
    return r(p, mu);
  } catch (const Error&) {
    return NAN;
  }
}

inline std::optional<double> polish(const Shoot& r, double p, double a, double b, double fa, double fb) {
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (!(fa * fb < 0)) return std::nullopt;
  std::uintmax_t iters = 200;
  try {
    const auto br = boost::math::tools::toms748_solve([&](double m) { return safe(r, p, m); }, a, b, fa, fb,
                                                      boost::math::tools::eps_tolerance<double>(50), iters);
    return 0.5 * (br.first + br.second);
  } catch (...) {
    return std::nullopt;
  }
}

inline std::vector<double> mu_roots(const Shoot& r, double p, const ScanWindow& w) {
  std::vector<double> out;
  const int n = static_cast<int>(std::ceil((w.mu_hi - w.mu_lo) / w.dmu));
  double m0 = w.mu_lo, f0 = safe(r, p, m0);
  for (int j = 1; j <= n; ++j) {
    const double m1 = w.mu_lo + (w.mu_hi - w.mu_lo) * j / n;
    const double f1 = safe(r, p, m1);
    if (std::isfinite(f0) && std::isfinite(f1) && f0 != 0.0 && f0 * f1 <= 0)
      if (auto m = polish(r, p, m0, m1, f0, f1)) out.push_back(*m);
    m0 = m1;
    f0 = f1;
  }
  return out;
}

// root of r(p, .) nearest to `near`, bracketed by growing intervals
inline std::optional<double> root_near(const Shoot& r, double p, double near, double width) {
  for (double h = width; h < 64 * width; h *= 2) {
    const double a = near - h, b = near + h;
    const double fa = safe(r, p, a), fb = safe(r, p, b);
    if (std::isfinite(fa) && std::isfinite(fb) && fa * fb <= 0) return polish(r, p, a, b, fa, fb);
  }
  return std::nullopt;
}

}  // namespace oracle_detail

inline std::vector<ScanFold> scan_folds(const Shoot& r, const ScanWindow& w) {
  using namespace oracle_detail;
  const int np = static_cast<int>(std::ceil((w.p_hi - w.p_lo) / w.dp));
  std::vector<double> ps;
  std::vector<std::vector<double>> rows;
  for (int i = 0; i <= np; ++i) {
    ps.push_back(w.p_lo + (w.p_hi - w.p_lo) * i / np);
    rows.push_back(mu_roots(r, ps.back(), w));
  }
  std::vector<ScanFold> folds;
  for (int i = 1; i + 1 <= np; ++i) {
    if (rows[i - 1].size() != rows[i].size() || rows[i].size() != rows[i + 1].size()) continue;
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      const double d1 = rows[i][k] - rows[i - 1][k];
      const double d2 = rows[i + 1][k] - rows[i][k];
      if (!(d1 * d2 < 0)) continue;
      const double sign = d1 > 0 ? 1.0 : -1.0;  // +1: maximum
      ScanFold best{ps[i], rows[i][k]};
      double lo = ps[i - 1], hi = ps[i + 1];
      for (double step : {1e-3, 1e-4}) {
        double mu_prev = best.mu;
        const int m = static_cast<int>(std::round((hi - lo) / step));
        for (int s = 0; s <= m; ++s) {
          const double p = lo + step * s;
          const auto mu = root_near(r, p, mu_prev, std::max(10 * step, 1e-6));
          if (!mu) continue;
          mu_prev = *mu;
          if (sign * (*mu - best.mu) > 0) best = {p, *mu};
        }
        lo = best.p - 10 * 1e-4;
        hi = best.p + 10 * 1e-4;
      }
      if (best.mu >= w.mu_lo && best.mu <= w.mu_hi) folds.push_back(best);
    }
  }
  return folds;
}

}  // namespace lgc::testing
