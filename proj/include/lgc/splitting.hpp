#pragma once

// Splitting lemma: a critical jet becomes reduced(x_bar) + sum(+-x_under^2) after
// an explicit coordinate change, optionally fibred over parameters.

#include <cmath>
#include <utility>
#include <vector>

#include "lgc/jets.hpp"
#include "lgc/linalg.hpp"

namespace lgc {

struct SplitOptions {
  RankTolerance rank{};
  /// |gradient| above this at the origin means the jet is not critical.
  double gradient_tol = 1e-10;
  /// Extra chop applied to intermediate jets (0 keeps only the canonical chop).
  double chop = 0.0;
};

struct Signature {
  int plus = 0;
  int minus = 0;
  friend bool operator==(const Signature&, const Signature&) = default;
};

struct MorseSplit {
  Jet reduced;  // in `corank` variables, vanishing 2-jet
  Signature signature;
  CoordinateChange change;  // new coordinates (x_bar, x_under) -> input coordinates
  double constant = 0.0;

  int corank() const { return reduced.nvars(); }
};

struct FamilySplit {
  Jet reduced_family;  // in (mu, x_bar)
  Signature signature;
  CoordinateChange change_family;  // (mu, x_bar, x_under) -> (mu, x); identity on mu
  Jet chi;                         // linear in mu
  double constant = 0.0;
  int nparams = 0;

  int corank() const { return reduced_family.nvars() - nparams; }
};

namespace detail {

// Result of the shared reduction: g = input o change has the form
//   g = R(mu, x_bar) + sum_j eps_j y_j^2,  y_j = variable l + c + j.
struct SplitCore {
  Jet g;
  CoordinateChange change;
  Signature signature;
  int corank = 0;
  std::vector<double> eps;
};

inline bool touches(const MultiIndex& alpha, int first_under) {
  for (std::size_t v = first_under; v < alpha.size(); ++v)
    if (alpha[v] > 0) return true;
  return false;
}

inline SplitCore split_core(const Jet& input, int l, const SplitOptions& opt) {
  const int total = input.nvars();
  const int n = total - l;
  const int d = input.degree();
  require(n >= 0, ErrorCode::InvalidInput, "more parameters than variables");

  // x-Hessian at (0, 0) and its spectrum
  const Matrix hess = input.hessian_at_zero();
  const Matrix hxx = hess.bottomRightCorner(n, n);
  const SymmetricSpectrum spec = decide_spectrum(hxx, opt.rank);

  std::vector<int> kernel, pos, neg;
  for (int i = 0; i < n; ++i) {
    if (spec.is_zero[i]) kernel.push_back(i);
    else if (spec.eigenvalues[i] > 0) pos.push_back(i);
    else neg.push_back(i);
  }
  // positive eigenvalues in descending order keep the layout stable
  std::reverse(pos.begin(), pos.end());

  SplitCore core;
  core.corank = static_cast<int>(kernel.size());
  core.signature = {static_cast<int>(pos.size()), static_cast<int>(neg.size())};

  Matrix lin = Matrix::Identity(total, total);
  int col = l;
  for (int i : kernel) lin.block(l, col++, n, 1) = spec.eigenvectors.col(i);
  for (int i : pos) {
    lin.block(l, col++, n, 1) = spec.eigenvectors.col(i) / std::sqrt(spec.eigenvalues[i] / 2.0);
    core.eps.push_back(1.0);
  }
  for (int i : neg) {
    lin.block(l, col++, n, 1) = spec.eigenvectors.col(i) / std::sqrt(-spec.eigenvalues[i] / 2.0);
    core.eps.push_back(-1.0);
  }
  lin.block(l, 0, n, l).setZero();

  CoordinateChange change = CoordinateChange::linear(lin, d);
  Jet g = jet_compose(input, change);
  const int first_under = l + core.corank;

  // Pin the pure-x quadratic part to its canonical form.
  if (d >= 2) {
    const auto& b = g.basis();
    auto c = g.mutable_coefficients();
    for (std::size_t i = b.degree_begin(2); i < b.degree_begin(3); ++i) {
      const auto& a = b.exponents(i);
      bool pure_x = true;
      for (int v = 0; v < l; ++v)
        if (a[v] > 0) pure_x = false;
      if (!pure_x) continue;
      c[i] = 0.0;
      for (int j = first_under; j < total; ++j)
        if (a[j] == 2) c[i] = core.eps[j - first_under];
    }
  }
  if (opt.chop > 0) g.chop(opt.chop);

  // Degree-by-degree completion of squares. At degree m, a monomial c*y_j*q is
  // removed by y_j -> y_j - c q / (2 eps_j); all side effects land in degree > m
  // (for m = 2 only pure-mu terms appear).
  for (int m = 2; m <= d; ++m) {
    if (core.eps.empty()) break;
    std::vector<Jet> shift;
    for (int v = 0; v < total; ++v) shift.push_back(Jet::variable(total, d, v));
    bool any = false;
    const auto& b = g.basis();
    for (std::size_t i = b.degree_begin(m); i < b.degree_begin(m + 1); ++i) {
      if (g[i] == 0.0) continue;
      MultiIndex a = b.exponents(i);
      if (!touches(a, first_under)) continue;
      int j = first_under;
      while (a[j] == 0) ++j;
      if (m == 2) {
        // only mu * y terms need work at degree 2 (the pure-x part was pinned)
        bool mu_y = false;
        for (int v = 0; v < l; ++v)
          if (a[v] > 0) mu_y = true;
        if (!mu_y) continue;
      }
      --a[j];
      const double eps = core.eps[j - first_under];
      shift[j].add_term(a, -g[i] / (2.0 * eps));
      any = true;
    }
    if (!any) continue;
    for (auto& s : shift) s.canonicalize();
    CoordinateChange step(std::move(shift));
    g = jet_compose(g, step);
    if (opt.chop > 0) g.chop(opt.chop);
    change = compose_changes(change, step);
  }

  core.g = std::move(g);
  core.change = std::move(change);
  return core;
}

}  // namespace detail

/// Splits a critical jet into a fully reduced part and a diagonal +-1 quadratic
/// form. Variables of the change are ordered (kernel, positive, negative).
inline MorseSplit split(const Jet& phi, const SplitOptions& opt = {}) {
  const double grad = phi.gradient_at_zero().size() ? phi.gradient_at_zero().cwiseAbs().maxCoeff() : 0.0;
  require(grad <= opt.gradient_tol, ErrorCode::NotCritical, "gradient at the origin is nonzero");
  Jet centered = phi;
  const double constant = phi.constant_term();
  centered.mutable_coefficients()[0] = 0.0;
  if (phi.degree() >= 1)
    for (int i = 0; i < phi.nvars(); ++i) centered.mutable_coefficients()[1 + i] = 0.0;

  auto core = detail::split_core(centered, 0, opt);
  std::vector<int> keep;
  for (int i = 0; i < core.corank; ++i) keep.push_back(i);
  MorseSplit out;
  out.reduced = jet_restrict(core.g, keep);
  out.signature = core.signature;
  out.change = std::move(core.change);
  out.constant = constant;
  return out;
}

/// Fibred splitting of a family Phi(mu, x) with the first l variables as parameters.
inline FamilySplit split_family(const Jet& Phi, int l, const SplitOptions& opt = {}) {
  require(l >= 0 && l <= Phi.nvars(), ErrorCode::InvalidInput, "invalid parameter count");
  const int total = Phi.nvars();
  const int d = Phi.degree();
  const Vector grad = Phi.gradient_at_zero();
  for (int v = l; v < total; ++v)
    require(std::abs(grad[v]) <= opt.gradient_tol, ErrorCode::NotCritical,
            "x-gradient at the origin is nonzero for mu = 0");

  FamilySplit out;
  out.nparams = l;
  out.constant = Phi.constant_term();
  out.chi = Jet(l, d);
  Jet centered = Phi;
  centered.mutable_coefficients()[0] = 0.0;
  if (d >= 1) {
    for (int v = 0; v < l; ++v) {
      MultiIndex e(l, 0);
      e[v] = 1;
      out.chi.set_coeff(e, grad[v]);
      centered.mutable_coefficients()[1 + v] = 0.0;
    }
    for (int v = l; v < total; ++v) centered.mutable_coefficients()[1 + v] = 0.0;
  }
  out.chi.canonicalize();

  auto core = detail::split_core(centered, l, opt);
  for (int v = 0; v < l; ++v)
    require(core.change[v] == Jet::variable(total, d, v), ErrorCode::FibrednessViolation,
            "parameter block was not preserved");
  std::vector<int> keep;
  for (int i = 0; i < l + core.corank; ++i) keep.push_back(i);
  out.reduced_family = jet_restrict(core.g, keep);
  out.signature = core.signature;
  out.change_family = std::move(core.change);
  return out;
}

/// reduced(x_bar) + sum(+-x_under^2) + constant in the split variables.
inline Jet split_normal_form(const MorseSplit& s) {
  const int c = s.corank();
  const int n = c + s.signature.plus + s.signature.minus;
  const int d = s.change.degree();
  std::vector<int> map;
  for (int i = 0; i < c; ++i) map.push_back(i);
  Jet out = jet_embed(s.reduced, n, map).with_degree(d);
  MultiIndex e(n, 0);
  for (int j = c; j < n; ++j) {
    e[j] = 2;
    out.add_term(e, j < c + s.signature.plus ? 1.0 : -1.0);
    e[j] = 0;
  }
  out.add_term(e, s.constant);
  return out.canonicalize();
}

/// reduced_family(mu, x_bar) + sum(+-x_under^2) + chi(mu) + constant.
inline Jet split_normal_form(const FamilySplit& s) {
  const int l = s.nparams;
  const int c = s.corank();
  const int n = l + c + s.signature.plus + s.signature.minus;
  const int d = s.change_family.degree();
  std::vector<int> map;
  for (int i = 0; i < l + c; ++i) map.push_back(i);
  Jet out = jet_embed(s.reduced_family, n, map).with_degree(d);
  std::vector<int> mu_map;
  for (int i = 0; i < l; ++i) mu_map.push_back(i);
  out += jet_embed(s.chi, n, mu_map).with_degree(d);
  MultiIndex e(n, 0);
  for (int j = l + c; j < n; ++j) {
    e[j] = 2;
    out.add_term(e, j < l + c + s.signature.plus ? 1.0 : -1.0);
    e[j] = 0;
  }
  out.add_term(e, s.constant);
  return out.canonicalize();
}

}  // namespace lgc
