#pragma once

// Randomized property suites behind `lgc verify`: the homotopy constructions
// for vanishing 2-jets (hformula) and split germs with a zero lower block
// (switchon), and class independence under cotangent structure changes.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lgc/classify.hpp"
#include "lgc/cotangent.hpp"

namespace lgc {

struct TrialOutcome {
  int trial = 0;
  bool pass = false;
  double residual = 0.0;
  double origin_error = 0.0;
  std::string detail;
};

struct SuiteReport {
  std::string lemma;
  std::uint64_t seed = 0;
  std::vector<TrialOutcome> trials;

  double max_residual() const {
    double m = 0.0;
    for (const auto& t : trials) m = std::max(m, t.residual);
    return m;
  }
  bool all_pass() const {
    return std::all_of(trials.begin(), trials.end(), [](const TrialOutcome& t) { return t.pass; });
  }
};

namespace detail {

inline Jet monomials_jet(int n, int d, const std::vector<std::pair<MultiIndex, double>>& terms) {
  return Jet::from_terms(n, d, terms);
}

// origin-fixing change with random linear part (|det| >= 0.3) and small nonlinear terms
inline CoordinateChange random_origin_change(std::mt19937_64& rng, int n, int d, double nonlinear) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix a;
  do {
    a = Matrix::Identity(n, n) + 0.4 * Matrix::NullaryExpr(n, n, [&] { return u(rng); });
  } while (std::abs(a.determinant()) < 0.3);
  std::vector<Jet> comps;
  for (int i = 0; i < n; ++i) {
    Jet c(n, d);
    auto coef = c.mutable_coefficients();
    for (std::size_t m = c.basis().degree_begin(2); m < coef.size(); ++m) coef[m] = nonlinear * u(rng);
    for (int k = 0; k < n; ++k) coef[1 + k] = a(i, k);
    comps.push_back(c.canonicalize());
  }
  return CoordinateChange(comps);
}

inline Jet random_h_entry(std::mt19937_64& rng, int n2, int d, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Jet j(n2, d);
  for (double& c : j.mutable_coefficients()) c = scale * u(rng);
  return j.canonicalize();
}

// Symmetric random h with entries of size `scale`; the block i, j >= upper stays zero when zero_lower.
inline StructureChange random_structure_change(std::mt19937_64& rng, int n, int d, double scale, int upper,
                                               bool zero_lower) {
  std::vector<std::vector<Jet>> h(n, std::vector<Jet>(n, Jet(2 * n, d)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      if (zero_lower && i >= upper && j >= upper) continue;
      h[i][j] = h[j][i] = random_h_entry(rng, 2 * n, d, scale);
    }
  return StructureChange(h, zero_lower ? BlockProfile::ZeroH22 : BlockProfile::Full, zero_lower ? upper : 0);
}

struct NamedGerm {
  const char* label;
  int n;
  std::vector<std::pair<MultiIndex, double>> terms;
};

// germs with vanishing 2-jet
inline const std::vector<NamedGerm>& degenerate_germs() {
  static const std::vector<NamedGerm> g{
      {"A2", 1, {{{3}, 1.0}}},
      {"A3+", 1, {{{4}, 1.0}}},
      {"A4", 1, {{{5}, 1.0}}},
      {"D4+", 2, {{{2, 1}, 1.0}, {{0, 3}, 1.0}}},
      {"D4-", 2, {{{2, 1}, 1.0}, {{0, 3}, -1.0}}},
      {"E6+", 2, {{{3, 0}, 1.0}, {{0, 4}, 1.0}}},
  };
  return g;
}

// |x|_inf <= 0.1 box; RK4 at dt = 0.01 keeps the flow error far below the 1e-6 tolerance
inline SampleGrid suite_grid() {
  SampleGrid g;
  g.dt = 0.01;
  return g;
}

}  // namespace detail

/// Homotopy construction for germs with vanishing 2-jet: phi = normal form o random
/// change, H a random full structure change; f_1 must satisfy psi_1 o f_1 = phi.
inline SuiteReport verify_hformula(int trials, std::uint64_t seed, double tol = 1e-6) {
  SuiteReport rep{"hformula", seed, {}};
  std::mt19937_64 rng(seed);
  const auto& germs = detail::degenerate_germs();
  for (int t = 0; t < trials; ++t) {
    const auto& g = germs[t % germs.size()];
    const int d = 5;
    const Jet phi =
        jet_compose(detail::monomials_jet(g.n, d, g.terms), detail::random_origin_change(rng, g.n, d, 0.3));
    // at 0.3 about one draw in twenty makes B(t, x) singular inside the box
    const StructureChange H = detail::random_structure_change(rng, g.n, 2, 0.15, 0, false);
    TrialOutcome o{t};
    try {
      const auto r = homotopy_equivalence(phi, H, detail::suite_grid());
      o.residual = r.residual;
      o.origin_error = r.origin_error;
      o.pass = r.residual < tol && r.origin_error < 1e-8;
      o.detail = g.label;
    } catch (const Error& e) {
      o.detail = e.what();
    }
    rep.trials.push_back(std::move(o));
  }
  return rep;
}

/// Split germs g(x_bar) + x_under^T Q x_under with H vanishing on the lower block.
/// With inject_h22 the lower block is made nonzero and the hypothesis guard must
/// reject the input (the HypothesisViolation propagates).
inline SuiteReport verify_switchon(int trials, std::uint64_t seed, bool inject_h22 = false, double tol = 1e-6) {
  SuiteReport rep{"switchon", seed, {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  const auto& germs = detail::degenerate_germs();
  for (int t = 0; t < trials; ++t) {
    const auto& g = germs[t % germs.size()];
    const int k = g.n, n = g.n + 1, d = 5;
    // g o (random change of x_bar), then the quadratic block in the last variable
    const Jet gbar =
        jet_compose(detail::monomials_jet(k, d, g.terms), detail::random_origin_change(rng, k, d, 0.3));
    std::vector<int> map(k);
    for (int i = 0; i < k; ++i) map[i] = i;
    MultiIndex sq(n, 0);
    sq[n - 1] = 2;
    const double q = coin(rng) ? 1.0 : -1.0;
    const Jet phi = jet_embed(gbar, n, map) + Jet::from_terms(n, d, {{sq, q}});
    // The quadratic block doubles the off-diagonal entries of B(t, x); at scale
    // 0.1 and above some draws make B singular inside the 0.1 box.
    StructureChange H = detail::random_structure_change(rng, n, 2, 0.05, k, true);
    if (inject_h22) {
      auto h = H.matrix();
      h[n - 1][n - 1] = Jet::constant(2 * n, 2, 0.2);
      H = StructureChange(h, BlockProfile::Full);
    }
    TrialOutcome o{t};
    try {
      const auto r = homotopy_equivalence(phi, H, detail::suite_grid());
      o.residual = r.residual;
      o.origin_error = r.origin_error;
      o.pass = r.residual < tol && r.origin_error < 1e-8;
      o.detail = std::string(g.label) + (q > 0 ? " + y^2" : " - y^2");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::HypothesisViolation) throw;
      o.detail = e.what();
    }
    rep.trials.push_back(std::move(o));
  }
  return rep;
}

/// Normal forms plus a quadratic block under random structure changes. Every
/// fifth trial pins the lower block at the origin to -B^{-1}/4, which makes
/// B' = B + 4 B H22 B vanish: those must be reported non-graphical. All others
/// must keep their class label through the transition generating function.
inline SuiteReport verify_structure_independence(int trials, std::uint64_t seed) {
  SuiteReport rep{"structure-independence", seed, {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  const auto& germs = detail::degenerate_germs();
  for (int t = 0; t < trials; ++t) {
    const auto& g = germs[t % germs.size()];
    const int k = g.n, n = g.n + 1, d = 6;
    std::vector<int> map(k);
    for (int i = 0; i < k; ++i) map[i] = i;
    MultiIndex sq(n, 0);
    sq[n - 1] = 2;
    const double b = coin(rng) ? 1.0 : -1.0;  // phi = g + b y^2, so B = b
    const Jet phi = jet_embed(detail::monomials_jet(k, d, g.terms), n, map) + Jet::from_terms(n, d, {{sq, b}});
    auto h = detail::random_structure_change(rng, n, 3, 0.4, 0, false).matrix();
    const bool degenerate = t % 5 == 4;
    auto c = h[n - 1][n - 1].mutable_coefficients();
    if (degenerate) {
      c[0] = -0.25 / b;
    } else if (std::abs(1.0 + 4.0 * b * c[0]) < 0.2) {
      c[0] = 0.0;  // keep clear of the singular value so the verdict is not borderline
    }
    const StructureChange H(h);
    TrialOutcome o{t};
    const std::string before = to_string(classify(phi));
    try {
      const auto gr = graphical_in_structure(phi, H);
      if (degenerate) {
        o.pass = !gr.graphical;
        o.detail = std::string(g.label) + ": " + (gr.graphical ? "missed non-graphical case" : "non-graphical");
      } else if (!gr.graphical) {
        o.detail = std::string(g.label) + ": unexpectedly non-graphical";
      } else {
        const std::string after = to_string(classify(transition_generating(phi, H)));
        o.pass = after == before;
        o.detail = before + " -> " + after;
      }
    } catch (const Error& e) {
      o.detail = e.what();
    }
    rep.trials.push_back(std::move(o));
  }
  return rep;
}

}  // namespace lgc
