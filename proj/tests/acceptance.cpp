// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bvp_systems.hpp"
#include "fold_oracle.hpp"
#include "lgc/bvp.hpp"
#include "lgc/classify.hpp"
#include "lgc/contact.hpp"
#include "lgc/cotangent.hpp"
#include "lgc/splitting.hpp"
#include "lgc/verify.hpp"
#include "test_util.hpp"

using namespace lgc;
using namespace lgc::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int count_sign(const Matrix& h, int sgn) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  int c = 0;
  for (int i = 0; i < h.rows(); ++i)
    if (sgn * es.eigenvalues()[i] > 1e-6) ++c;
  return c;
}

// 1 ---------------------------------------------------------------------------

Outcome splitting_reconstruction() {
  std::mt19937_64 rng(501);
  std::uniform_int_distribution<int> coin(0, 1);
  int recon_ok = 0, sig_ok = 0, trials = 500;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int n = 1 + t % 4, d = 2 + t % 4, r = static_cast<int>(rng() % (n + 1));
    Jet base = random_jet(rng, n, d, 3);
    MultiIndex e(n, 0);
    for (int i = 0; i < r; ++i) {
      e[i] = 2;
      base.add_term(e, (coin(rng) ? 1.0 : -1.0) * (0.5 + (rng() % 100) / 100.0));
      e[i] = 0;
    }
    const Jet phi = jet_compose(base, random_change(rng, n, d));
    try {
      const MorseSplit s = split(phi);
      const double err = max_coeff_diff(jet_compose(phi, s.change), split_normal_form(s));
      worst = std::max(worst, err);
      recon_ok += err < 1e-9;
      const Matrix h = phi.hessian_at_zero();
      sig_ok += s.signature.plus == count_sign(h, 1) && s.signature.minus == count_sign(h, -1) &&
                s.signature.plus + s.signature.minus == r;
    } catch (const Error&) {
    }
  }
  return {recon_ok == trials && sig_ok == trials,
          fmt("%d/%d reconstructions < 1e-9 (worst %.1e), %d/%d signatures match", recon_ok, trials, worst, sig_ok,
              trials)};
}

// 2 ---------------------------------------------------------------------------

Outcome homotopy_suites() {
  const SuiteReport hf = verify_hformula(20, 2024);
  const SuiteReport so = verify_switchon(20, 2024);
  auto origin = [](const SuiteReport& r) {
    double m = 0.0;
    for (const auto& t : r.trials) m = std::max(m, t.origin_error);
    return m;
  };
  const bool ok = hf.all_pass() && so.all_pass() && hf.max_residual() < 1e-6 && so.max_residual() < 1e-6 &&
                  origin(hf) < 1e-8 && origin(so) < 1e-8;
  return {ok, fmt("hformula max residual %.1e |f1(0)| %.1e; switchon max residual %.1e |f1(0)| %.1e",
                  hf.max_residual(), origin(hf), so.max_residual(), origin(so))};
}

// 3 ---------------------------------------------------------------------------

Outcome structure_independence() {
  // trials cycle through the six normal forms, so 300 trials give 50 per form
  const SuiteReport r = verify_structure_independence(300, 77);
  int graphical = 0, same = 0, degenerate = 0, detected = 0;
  for (const auto& t : r.trials) {
    if (t.trial % 5 == 4) {
      ++degenerate;
      detected += t.pass;
    } else {
      ++graphical;
      same += t.pass;
    }
  }
  return {r.all_pass(), fmt("labels kept in %d/%d graphical cases; %d/%d B'(0)-singular cases reported", same,
                            graphical, detected, degenerate)};
}

// 4 ---------------------------------------------------------------------------

Outcome remark_pair() {
  // phi = x^3 + y^2 (B = 1); h22 = (B^-1 D B^-1 - B^-1) / 4 with D = -1 gives B' = D
  const Jet phi = poly(2, 5, {{{3, 0}, 1}, {{0, 2}, 1}});
  const double b = 1.0, dd = -1.0;
  Matrix c = Matrix::Zero(2, 2);
  c(1, 1) = 0.25 * (dd / (b * b) - 1.0 / b);
  const auto H = StructureChange::constant(c, 3, BlockProfile::Full);
  const auto g = graphical_in_structure(phi, H);
  if (!g.graphical) return {false, "pair is not graphical"};
  const Jet psi = transition_generating(phi, H);
  const auto st = stably_right_equivalent(phi, psi);
  const auto rt = right_equivalent_same_vars(phi, psi);
  return {st.equivalent && !rt.equivalent && rt.reason == VerdictReason::SignatureMismatch,
          fmt("B' = %.3g; stably_right_equivalent = %s, right_equivalent_same_vars = %s (%s)", g.b_prime(0, 0),
              st.equivalent ? "true" : "false", rt.equivalent ? "true" : "false", to_string(rt.reason))};
}

// 5 ---------------------------------------------------------------------------

ContactProblem graph_problem(const Jet& phi) {
  const int n = phi.nvars();
  return ContactProblem(LagrangianSpec::zero_section(n), LagrangianSpec::graph(phi), Vector::Zero(2 * n));
}

AffineSymplectic random_affine(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {random_symplectic(rng, n, 0.3), Vector::NullaryExpr(2 * n, [&] { return u(rng); })};
}

Outcome contact_corpus() {
  struct Form {
    const char* label;
    Jet jet;
  };
  const std::vector<Form> forms{
      {"A2", poly(1, 4, {{{3}, 1}})},
      {"A3+", poly(1, 4, {{{4}, 1}})},
      {"A3-", poly(1, 4, {{{4}, -1}})},
      {"D4+", poly(2, 4, {{{2, 1}, 1}, {{0, 3}, 1}})},
      {"D4-", poly(2, 4, {{{2, 1}, 1}, {{0, 3}, -1}})},
      {"E6", poly(2, 4, {{{3, 0}, 1}, {{0, 4}, 1}})},
  };
  std::mt19937_64 rng(3030);
  std::uniform_int_distribution<int> coin(0, 1);
  int agree = 0, indeterminate = 0, pairs = 30;
  std::string misses;
  for (int t = 0; t < pairs; ++t) {
    const auto& fa = forms[t % forms.size()];
    const bool same = t % 2 == 0;
    const auto& fb = same ? fa : forms[(t + 1 + t / 6) % forms.size()];
    ContactProblem b = graph_problem(fb.jet).transformed(random_affine(rng, fb.jet.nvars()));
    if (coin(rng)) {
      const int m = 1 + coin(rng);
      Matrix q = Matrix::Zero(m, m);
      for (int i = 0; i < m; ++i) q(i, i) = coin(rng) ? 1.0 : -1.0;
      b = b.stabilized(q);
      b = b.transformed(random_affine(rng, b.n()));
    }
    const ContactProblem a = graph_problem(fa.jet).transformed(random_affine(rng, fa.jet.nvars()));
    const bool truth = std::string(fa.label) == fb.label;
    try {
      const auto v = contact_equivalent(a, b);
      if (v.reason == VerdictReason::Indeterminate) {
        ++indeterminate;
        misses += fmt(" [%d indeterminate: %s]", t, v.detail.c_str());
      } else if (v.equivalent == truth) {
        ++agree;
      } else {
        misses += fmt(" [%d %s vs %s]", t, fa.label, fb.label);
      }
    } catch (const Error& e) {
      ++indeterminate;
      misses += fmt(" [%d error: %s]", t, e.what());
    }
  }
  return {agree == pairs && indeterminate == 0,
          fmt("%d/%d verdicts match construction, %d indeterminate", agree, pairs, indeterminate) + misses};
}

// 6 ---------------------------------------------------------------------------

struct FoldRun {
  std::vector<SingularPoint> folds;
  std::vector<ScanFold> oracle;
};

FoldRun fold_run(double qend, int steps, bool with_oracle) {
  const SymplecticMapSpec spec{cubic_oscillator(), 1.0, steps};
  const auto bc = dirichlet(0.0, qend);
  std::vector<Vector> seeds;
  for (double p = -6.0; p <= 6.0; p += 0.5) seeds.push_back(vec({p}));
  const auto d = continue_branches(spec, bc, {vec({-1.2}), vec({1.2})}, seeds);
  FoldRun out;
  for (const auto& s : d.singular_points)
    if (s.kind == "fold") out.folds.push_back(s);
  if (with_oracle)
    out.oracle = scan_folds([&](double p, double mu) { return shoot(spec, vec({mu}), 0.0, qend, p); },
                            {-10.0, 10.0, 0.05, -1.2, 1.2, 0.05});
  return out;
}

// continuation folds and oracle folds pair up one to one within 1e-3 in mu; all A2; same labels at 2N
std::pair<bool, std::string> fold_agreement(double qend) {
  const FoldRun a = fold_run(qend, 200, true);
  const FoldRun b = fold_run(qend, 400, false);
  bool ok = a.folds.size() == a.oracle.size();
  double worst = 0.0;
  std::vector<bool> used(a.oracle.size(), false);
  for (const auto& f : a.folds) {
    int best = -1;
    for (std::size_t k = 0; k < a.oracle.size(); ++k)
      if (!used[k] && (best < 0 || std::abs(a.oracle[k].mu - f.mu[0]) < std::abs(a.oracle[best].mu - f.mu[0])))
        best = static_cast<int>(k);
    if (best < 0) {
      ok = false;
      continue;
    }
    used[best] = true;
    worst = std::max(worst, std::abs(a.oracle[best].mu - f.mu[0]));
  }
  ok = ok && worst < 1e-3;
  std::vector<std::string> la, lb;
  for (const auto& f : a.folds) la.push_back(label_of(f));
  for (const auto& f : b.folds) lb.push_back(label_of(f));
  for (const auto& l : la) ok = ok && l == "A2";
  ok = ok && la == lb;
  std::ostringstream s;
  s << "Q*=" << qend << ": " << a.folds.size() << " continuation folds, " << a.oracle.size() << " oracle folds";
  if (!a.folds.empty()) {
    s << ", max |dmu| " << fmt("%.1e", worst) << ", labels N=200 {";
    for (const auto& l : la) s << l << (&l == &la.back() ? "" : ",");
    s << "} N=400 {";
    for (const auto& l : lb) s << l << (&l == &lb.back() ? "" : ",");
    s << "}";
    for (const auto& f : a.folds) s << fmt(" at mu=%.6f p=%.4f", f.mu[0], f.z[1]);
  }
  return {ok, s.str()};
}

Outcome bvp_folds() {
  const auto [ok_main, main] = fold_agreement(0.5);
  // Q* = 0.5 has no folds in the window, so the same checks also run where a fold exists
  const auto [ok_sup, sup] = fold_agreement(2.0);
  return {ok_main && ok_sup, main + "; " + sup};
}

// 7 ---------------------------------------------------------------------------

Outcome bvp_cusp() {
  const SymplecticMapSpec spec{cusp_family(), 1.0, 200};
  const auto bc = dirichlet(0.0, 0.5);
  // folds of mu1 for fixed mu2, from the oracle only
  auto folds_at = [&](double mu2) {
    return scan_folds([&](double p, double mu1) { return shoot(spec, vec({mu1, mu2}), 0.0, 0.5, p); },
                      {-3.5, 1.5, 0.01, 2.0, 3.0, 0.05});
  };
  const double lo0 = -10.1, hi0 = -9.5;
  std::vector<std::pair<double, std::size_t>> coarse;
  for (int i = 0; i <= 6; ++i) {
    const double m2 = lo0 + (hi0 - lo0) * i / 6;
    coarse.emplace_back(m2, folds_at(m2).size());
  }
  int k = -1;
  for (std::size_t i = 0; i + 1 < coarse.size() && k < 0; ++i)
    if ((coarse[i].second == 0) != (coarse[i + 1].second == 0)) k = static_cast<int>(i);
  if (k < 0) return {false, "oracle found no change in the number of folds over mu2 in [-10.1, -9.5]"};
  // bisect on the fold count to resolution 1e-3
  double zero_side = coarse[k].second == 0 ? coarse[k].first : coarse[k + 1].first;
  double fold_side = coarse[k].second == 0 ? coarse[k + 1].first : coarse[k].first;
  std::vector<ScanFold> pair = folds_at(fold_side);
  while (std::abs(fold_side - zero_side) > 1e-3) {
    const double mid = 0.5 * (fold_side + zero_side);
    auto f = folds_at(mid);
    if (f.size() >= 2) {
      fold_side = mid;
      pair = std::move(f);
    } else {
      zero_side = mid;
    }
  }
  if (pair.size() < 2) return {false, "fold pair lost during bisection"};
  const double mu1 = 0.5 * (pair[0].mu + pair[1].mu), p = 0.5 * (pair[0].p + pair[1].p);
  const double mu2 = 0.5 * (fold_side + zero_side);
  const std::string where = fmt("oracle meeting point mu=(%.4f, %.4f) p=%.4f", mu1, mu2, p);

  const auto refined = detail::refine_cusp(spec, bc, vec({mu1, mu2}), 0, 1, p);
  if (!refined) return {false, where + "; Newton refinement did not converge"};
  const auto& [mu, pv] = *refined;
  const double shift = (mu - vec({mu1, mu2})).cwiseAbs().maxCoeff();
  try {
    const auto cls = classify_singular_solution(spec, bc, mu, vec({0.0, pv[0]}), 4);
    const bool ok = cls.family == Family::A && cls.k == 3 && shift < 5e-3;
    return {ok, where + fmt("; refined mu=(%.6f, %.6f) p=%.5f (shift %.1e) classifies as %s", mu[0], mu[1], pv[0],
                            shift, to_string(cls).c_str())};
  } catch (const Error& e) {
    return {false, where + "; classification failed: " + e.what()};
  }
}

// 8 ---------------------------------------------------------------------------

Outcome symmetry() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int inv_ok = 0, non_ok = 0;
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    // finite group generated by R, conjugated by a random linear A: h = A^-1 R A, phi = (sum_k psi o R^k) o A
    const int n = t % 4 == 0 ? 1 : 2;
    const int d = 4 + t % 2;
    Matrix r(n, n);
    int order = 2;
    if (n == 1) {
      r << -1.0;
    } else if (t % 4 == 1) {
      r << -1.0, 0.0, 0.0, 1.0;
    } else {
      order = t % 4 == 2 ? 3 : 4;
      const double th = 2.0 * M_PI / order;
      r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    }
    Matrix a;
    do {
      a = Matrix::Identity(n, n) + 0.4 * Matrix::NullaryExpr(n, n, [&] { return u(rng); });
    } while (std::abs(a.determinant()) < 0.3);
    const Jet psi = random_jet(rng, n, d, 2);
    Jet sym(n, d);
    Matrix rk = Matrix::Identity(n, n);
    for (int k = 0; k < order; ++k) {
      sym += jet_compose(psi, CoordinateChange::linear(rk, d));
      rk = r * rk;
    }
    const Jet phi = jet_compose(sym, CoordinateChange::linear(a, d));
    const auto h = CoordinateChange::linear(a.inverse() * r * a, d);
    const auto inv = check_symmetry_invariance(phi, h);
    worst = std::max({worst, inv.jet_error, inv.graph_error});
    inv_ok += inv.invariant && inv.jet_error < 1e-8 && inv.graph_error < 1e-8;

    const Jet plain = jet_compose(random_jet(rng, n, d, 2), CoordinateChange::linear(a, d));
    const auto non = check_symmetry_invariance(plain, h);
    non_ok += !non.invariant && !non.violation.empty();
  }
  return {inv_ok == 20 && non_ok == 20,
          fmt("%d/20 invariant pairs confirmed (worst error %.1e), %d/20 non-invariant pairs rejected with a witness",
              inv_ok, worst, non_ok)};
}

// 9 ---------------------------------------------------------------------------

Outcome integrator_contract() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const std::vector<std::pair<const char*, SymplecticMapSpec>> systems{
      {"free", {free_particle(), 1.0, 10}},      {"harmonic", {harmonic(), 2.0, 100}},
      {"cubic", {cubic_oscillator(), 1.0, 200}}, {"cusp", {cusp_family(), 1.0, 200}},
      {"coupled", {coupled_pair(), 1.5, 150}}};
  double worst = 0.0;
  for (const auto& [name, spec] : systems) {
    const int n = spec.system.n();
    const Matrix j = canonical_symplectic(n);
    for (int t = 0; t < 100; ++t) {
      Vector z(2 * n), mu(spec.system.nparams());
      for (int i = 0; i < z.size(); ++i) z[i] = u(rng);
      for (int i = 0; i < mu.size(); ++i) mu[i] = u(rng);
      const auto r = time_map(spec, mu, z);
      worst = std::max(worst, max_abs(r.dz.transpose() * j * r.dz - j));
    }
  }
  // free particle: q + T p, p unchanged
  const SymplecticMapSpec fp{free_particle(), 1.0, 10};
  double exact = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Vector z = vec({u(rng), u(rng)});
    const Vector w = time_map(fp, Vector(0), z).z;
    exact = std::max({exact, std::abs(w[0] - (z[0] + z[1])), std::abs(w[1] - z[1])});
  }
  return {worst < 1e-8 && exact < 1e-14,
          fmt("max |D^T J D - J| %.1e over 5 systems x 100 points; free particle max error %.1e", worst, exact)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "splitting reconstruction", 30, splitting_reconstruction},
      {2, "homotopy constructions", 60, homotopy_suites},
      {3, "structure independence", 60, structure_independence},
      {4, "stably but not right equivalent pair", 0, remark_pair},
      {5, "contact equivalence corpus", 0, contact_corpus},
      {6, "BVP fold agreement", 120, bvp_folds},
      {7, "BVP cusp", 300, bvp_cusp},
      {8, "symmetry invariance", 0, symmetry},
      {9, "integrator contract", 0, integrator_contract},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1fs", secs);
    if (c.budget_s > 0) {
      timing += fmt(" of %.0fs", c.budget_s);
      if (secs > c.budget_s) o.pass = false;
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s (%s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", timing.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
