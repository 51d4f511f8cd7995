#pragma once

// Boundary value problems for Hamiltonian time maps: implicit midpoint flow,
// boundary conditions as Lagrangians of the product, solving, continuation
// with fold/cusp detection, and classification of singular solutions.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lgc/classify.hpp"
#include "lgc/contact.hpp"
#include "lgc/jets.hpp"
#include "lgc/linalg.hpp"

namespace lgc {

struct HamiltonianTerm {
  std::vector<int> q_exps;
  std::vector<int> p_exps;
  std::vector<int> mu_exps;
  double coef = 0.0;
};

/// H(q, p; mu) as a finite polynomial, with vector field q' = H_p, p' = -H_q.
class HamiltonianSystem {
 public:
  HamiltonianSystem() = default;

  HamiltonianSystem(int n, int nparams, std::vector<HamiltonianTerm> terms)
      : n_(n), l_(nparams), terms_(std::move(terms)) {
    require(n_ >= 1 && l_ >= 0, ErrorCode::InvalidInput, "need n >= 1 degrees of freedom and l >= 0 parameters");
    int d = 2;
    std::vector<std::pair<MultiIndex, double>> mono;
    for (const auto& t : terms_) {
      require(static_cast<int>(t.q_exps.size()) == n_ && static_cast<int>(t.p_exps.size()) == n_,
              ErrorCode::DimensionMismatch, "term exponents must have length n");
      require(static_cast<int>(t.mu_exps.size()) == l_, ErrorCode::DimensionMismatch,
              "term mu exponents must have length nparams");
      require(std::isfinite(t.coef), ErrorCode::InvalidInput, "term coefficient is not finite");
      MultiIndex a;
      a.insert(a.end(), t.q_exps.begin(), t.q_exps.end());
      a.insert(a.end(), t.p_exps.begin(), t.p_exps.end());
      a.insert(a.end(), t.mu_exps.begin(), t.mu_exps.end());
      int deg = 0;
      for (int e : a) {
        require(e >= 0, ErrorCode::InvalidInput, "negative exponent");
        deg += e;
      }
      d = std::max(d, deg);
      mono.emplace_back(std::move(a), t.coef);
    }
    h_ = Jet::from_terms(2 * n_ + l_, d, mono);
    for (int v = 0; v < 2 * n_ + l_; ++v) {
      d1_.push_back(jet_derivative(h_, v));
      std::vector<Jet> row;
      for (int w = 0; w < 2 * n_ + l_; ++w) row.push_back(jet_derivative(d1_.back(), w));
      d2_.push_back(std::move(row));
    }
  }

  int n() const { return n_; }
  int nparams() const { return l_; }
  const std::vector<HamiltonianTerm>& terms() const { return terms_; }
  const Jet& jet() const { return h_; }

  double H(const Vector& z, const Vector& mu) const {
    std::vector<double> m;
    monomials(z, mu, m);
    return dot(h_, m);
  }

  /// f = (H_p, -H_q), its z-Jacobian (2n x 2n) and mu-Jacobian (2n x l).
  void field(const Vector& z, const Vector& mu, Vector& f, Matrix* df = nullptr, Matrix* dfmu = nullptr) const {
    std::vector<double> m;
    monomials(z, mu, m);
    f.resize(2 * n_);
    for (int i = 0; i < n_; ++i) {
      f[i] = dot(d1_[n_ + i], m);
      f[n_ + i] = -dot(d1_[i], m);
    }
    if (df) {
      df->resize(2 * n_, 2 * n_);
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < 2 * n_; ++j) {
          (*df)(i, j) = dot(d2_[n_ + i][j], m);
          (*df)(n_ + i, j) = -dot(d2_[i][j], m);
        }
    }
    if (dfmu) {
      dfmu->resize(2 * n_, l_);
      for (int i = 0; i < n_; ++i)
        for (int k = 0; k < l_; ++k) {
          (*dfmu)(i, k) = dot(d2_[n_ + i][2 * n_ + k], m);
          (*dfmu)(n_ + i, k) = -dot(d2_[i][2 * n_ + k], m);
        }
    }
  }

 private:
  void monomials(const Vector& z, const Vector& mu, std::vector<double>& out) const {
    std::vector<double> v(2 * n_ + l_);
    for (int i = 0; i < 2 * n_; ++i) v[i] = z[i];
    for (int k = 0; k < l_; ++k) v[2 * n_ + k] = mu[k];
    h_.basis().evaluate_monomials(v, out);
  }
  // derivative jets live on a prefix of h's monomial basis
  static double dot(const Jet& f, const std::vector<double>& m) {
    const auto& c = f.coefficients();
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * m[i];
    return s;
  }

  int n_ = 0;
  int l_ = 0;
  std::vector<HamiltonianTerm> terms_;
  Jet h_;
  std::vector<Jet> d1_;
  std::vector<std::vector<Jet>> d2_;
};

enum class Scheme { ImplicitMidpoint };

struct SymplecticMapSpec {
  HamiltonianSystem system;
  double total_time = 1.0;
  int steps = 100;
  Scheme scheme = Scheme::ImplicitMidpoint;

  void validate() const {
    require(total_time > 0 && std::isfinite(total_time), ErrorCode::InvalidInput, "total time must be positive");
    require(steps >= 1, ErrorCode::InvalidInput, "steps must be >= 1");
  }
};

struct TimeMapResult {
  Vector z;
  Matrix dz;   // d phi / d z0
  Matrix dmu;  // d phi / d mu
};

/// N implicit-midpoint steps of size T/N, with the exact derivative of the
/// discrete map when `tangent` is set.
inline TimeMapResult time_map(const SymplecticMapSpec& spec, const Vector& mu, const Vector& z0,
                              bool tangent = true) {
  spec.validate();
  const auto& sys = spec.system;
  const int n2 = 2 * sys.n();
  require(z0.size() == n2 && mu.size() == sys.nparams(), ErrorCode::DimensionMismatch,
          "point or parameter has the wrong size");
  const double h = spec.total_time / spec.steps;
  TimeMapResult out;
  out.z = z0;
  if (tangent) {
    out.dz = Matrix::Identity(n2, n2);
    out.dmu = Matrix::Zero(n2, sys.nparams());
  }
  const Matrix id = Matrix::Identity(n2, n2);
  Vector f, y, m, g;
  Matrix df, dfmu;
  for (int k = 0; k < spec.steps; ++k) {
    const Vector& z = out.z;
    sys.field(z, mu, f);
    y = z + h * f;
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
      m = 0.5 * (z + y);
      sys.field(m, mu, f, &df);
      g = y - z - h * f;
      const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
      const Vector step = (id - 0.5 * h * df).partialPivLu().solve(g);
      y -= step;
      if (!y.allFinite()) break;
      // the test uses the residual before the final correction, so the
      // accepted point is one Newton step past 1e-13
      if (g.cwiseAbs().maxCoeff() <= 1e-13 * scale) {
        converged = true;
        break;
      }
    }
    if (!converged) throw StageDivergence(k);
    if (tangent) {
      m = 0.5 * (z + y);
      sys.field(m, mu, f, &df, &dfmu);
      const auto lu = (id - 0.5 * h * df).partialPivLu();
      const Matrix rhs = id + 0.5 * h * df;
      out.dz = lu.solve(rhs * out.dz);
      out.dmu = lu.solve(rhs * out.dmu + h * dfmu);
    }
    out.z = y;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary conditions

struct Dirichlet {
  Vector q_start;
  Vector q_end;
};
struct Periodic {};
/// X = {p = S_q(q, Q), P = -S_Q(q, Q)} for a potential S on the product base.
struct GraphicalLagrangian {
  Jet potential;
};

using BoundaryCondition = std::variant<Dirichlet, Periodic, GraphicalLagrangian>;

inline const char* boundary_kind(const BoundaryCondition& bc) {
  if (std::holds_alternative<Dirichlet>(bc)) return "dirichlet";
  if (std::holds_alternative<Periodic>(bc)) return "periodic";
  return "graphical";
}

/// Number of unknowns of the shooting formulation.
inline int unknown_count(const SymplecticMapSpec& spec, const BoundaryCondition& bc) {
  return std::holds_alternative<Dirichlet>(bc) ? spec.system.n() : 2 * spec.system.n();
}

struct ResidualEval {
  Vector z0;   // start point (q, p)
  Vector r;    // residual
  Matrix ry;   // d r / d unknowns
  Matrix rmu;  // d r / d mu
};

namespace detail {

inline void check_bc(const SymplecticMapSpec& spec, const BoundaryCondition& bc) {
  const int n = spec.system.n();
  if (const auto* d = std::get_if<Dirichlet>(&bc)) {
    require(d->q_start.size() == n && d->q_end.size() == n, ErrorCode::DimensionMismatch,
            "Dirichlet data must have n components");
  } else if (const auto* g = std::get_if<GraphicalLagrangian>(&bc)) {
    require(g->potential.nvars() == 2 * n, ErrorCode::DimensionMismatch, "boundary potential must be in (q, Q)");
  }
}

inline Vector eval_all(const std::vector<Jet>& js, const Vector& x) {
  Vector out(static_cast<int>(js.size()));
  for (std::size_t i = 0; i < js.size(); ++i) out[i] = js[i].evaluate(x);
  return out;
}

inline Matrix eval_all(const std::vector<std::vector<Jet>>& js, const Vector& x) {
  const int r = static_cast<int>(js.size());
  Matrix out(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) out(i, j) = js[i][j].evaluate(x);
  return out;
}

}  // namespace detail

/// Residual of the boundary value problem in its unknowns y:
/// Dirichlet y = p with r = Q(q*, p) - Q*; Periodic y = z with r = phi(z) - z;
/// graphical y = z with r = (p - S_q, P + S_Q) at (q, Q(z)).
inline ResidualEval evaluate_residual(const SymplecticMapSpec& spec, const BoundaryCondition& bc, const Vector& mu,
                                      const Vector& y) {
  detail::check_bc(spec, bc);
  const int n = spec.system.n();
  require(y.size() == unknown_count(spec, bc), ErrorCode::DimensionMismatch, "unknown vector has the wrong size");
  ResidualEval e;
  if (const auto* d = std::get_if<Dirichlet>(&bc)) {
    e.z0.resize(2 * n);
    e.z0 << d->q_start, y;
    const auto tm = time_map(spec, mu, e.z0);
    e.r = tm.z.head(n) - d->q_end;
    e.ry = tm.dz.block(0, n, n, n);
    e.rmu = tm.dmu.topRows(n);
  } else if (std::holds_alternative<Periodic>(bc)) {
    e.z0 = y;
    const auto tm = time_map(spec, mu, e.z0);
    e.r = tm.z - y;
    e.ry = tm.dz - Matrix::Identity(2 * n, 2 * n);
    e.rmu = tm.dmu;
  } else {
    const auto& s = std::get<GraphicalLagrangian>(bc).potential;
    e.z0 = y;
    const auto tm = time_map(spec, mu, e.z0);
    Vector base(2 * n);
    base << y.head(n), tm.z.head(n);
    const auto grad = jet_gradient(s);
    std::vector<std::vector<Jet>> hess;
    for (const auto& g : grad) hess.push_back(jet_gradient(g));
    const Vector ds = detail::eval_all(grad, base);
    const Matrix hs = detail::eval_all(hess, base);
    e.r.resize(2 * n);
    e.r << y.tail(n) - ds.head(n), tm.z.tail(n) + ds.tail(n);
    Matrix dq0 = Matrix::Zero(n, 2 * n), dp0 = Matrix::Zero(n, 2 * n);
    dq0.leftCols(n).setIdentity();
    dp0.rightCols(n).setIdentity();
    const Matrix dQ = tm.dz.topRows(n), dP = tm.dz.bottomRows(n);
    e.ry.resize(2 * n, 2 * n);
    e.ry << dp0 - hs.topLeftCorner(n, n) * dq0 - hs.topRightCorner(n, n) * dQ,
        dP + hs.bottomLeftCorner(n, n) * dq0 + hs.bottomRightCorner(n, n) * dQ;
    const Matrix dQm = tm.dmu.topRows(n), dPm = tm.dmu.bottomRows(n);
    e.rmu.resize(2 * n, spec.system.nparams());
    e.rmu << -hs.topRightCorner(n, n) * dQm, dPm + hs.bottomRightCorner(n, n) * dQm;
  }
  return e;
}

/// Unknowns of the shooting formulation for a start point z.
inline Vector unknowns_of(const SymplecticMapSpec& spec, const BoundaryCondition& bc, const Vector& z) {
  const int n = spec.system.n();
  if (std::holds_alternative<Dirichlet>(bc)) return z.tail(n);
  return z;
}

struct BvpSolution {
  Vector y;  // unknowns
  Vector z;  // start point (q, p)
  double residual = 0.0;
  double det = 0.0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  bool singular = false;

  double condition() const { return sigma_min > 0 ? sigma_max / sigma_min : INFINITY; }
};

struct SolveReport {
  std::vector<BvpSolution> solutions;
  std::vector<std::string> notes;

  /// Some converged solution has a degenerate Jacobian (continuum or bifurcation).
  bool non_isolated() const {
    return std::any_of(solutions.begin(), solutions.end(), [](const BvpSolution& s) { return s.singular; });
  }
};

namespace detail {

inline bool degenerate(double smin, double smax) { return smin < 1e-6 * std::max(1.0, smax); }

inline BvpSolution describe(const ResidualEval& e, const Vector& y) {
  BvpSolution s;
  s.y = y;
  s.z = e.z0;
  s.residual = e.r.cwiseAbs().maxCoeff();
  s.det = e.ry.determinant();
  Eigen::JacobiSVD<Matrix> svd(e.ry);
  const auto& sv = svd.singularValues();
  s.sigma_max = sv[0];
  s.sigma_min = sv[sv.size() - 1];
  s.singular = degenerate(s.sigma_min, s.sigma_max);
  return s;
}

// Damped Newton on r(y) = 0 at fixed mu; minimum-norm steps cope with singular Jacobians.
inline std::optional<Vector> newton_fixed_mu(const SymplecticMapSpec& spec, const BoundaryCondition& bc,
                                             const Vector& mu, Vector y, std::string* why = nullptr) {
  try {
    ResidualEval e = evaluate_residual(spec, bc, mu, y);
    for (int it = 0; it < 60; ++it) {
      const double r0 = e.r.norm();
      if (e.r.cwiseAbs().maxCoeff() <= 1e-12) return y;
      const Vector step = e.ry.completeOrthogonalDecomposition().solve(e.r);
      double lambda = 1.0;
      bool accepted = false;
      for (int k = 0; k < 30; ++k) {
        const Vector trial = y - lambda * step;
        try {
          ResidualEval et = evaluate_residual(spec, bc, mu, trial);
          if (et.r.allFinite() && et.r.norm() < r0) {
            y = trial;
            e = std::move(et);
            accepted = true;
            break;
          }
        } catch (const Error&) {
        }
        lambda *= 0.5;
      }
      if (!accepted) break;
    }
    if (e.r.cwiseAbs().maxCoeff() <= 1e-10) return y;
    if (why) *why = "Newton stalled at residual " + std::to_string(e.r.cwiseAbs().maxCoeff());
  } catch (const Error& err) {
    if (why) *why = err.what();
  }
  return std::nullopt;
}

}  // namespace detail

/// Damped Newton from each seed (unknown vectors); converged solutions are
/// deduplicated at distance 1e-8 and reported with residual and conditioning.
inline SolveReport solve_bvp(const SymplecticMapSpec& spec, const BoundaryCondition& bc, const Vector& mu,
                             const std::vector<Vector>& seeds) {
  detail::check_bc(spec, bc);
  SolveReport rep;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    require(seeds[k].allFinite(), ErrorCode::InvalidInput, "seed is not finite");
    std::string why;
    auto y = detail::newton_fixed_mu(spec, bc, mu, seeds[k], &why);
    if (!y) {
      rep.notes.push_back("seed " + std::to_string(k) + " dropped: " + why);
      continue;
    }
    const bool dup = std::any_of(rep.solutions.begin(), rep.solutions.end(),
                                 [&](const BvpSolution& s) { return (s.y - *y).norm() < 1e-8; });
    if (dup) continue;
    rep.solutions.push_back(detail::describe(evaluate_residual(spec, bc, mu, *y), *y));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Product contact problem

/// Linear symplectic identification of the product (w = (q, p, Q, P), dq^dp - dQ^dP)
/// with (x, xi) and sum d xi ^ d x, centred at w*, in which X is graphical over x.
inline AffineSymplectic product_frame(const BoundaryCondition& bc, int n, const Vector& wstar) {
  const int N = 4 * n;
  Matrix m = Matrix::Zero(N, N);
  auto q = [](int i) { return i; };
  auto p = [n](int i) { return n + i; };
  auto Q = [n](int i) { return 2 * n + i; };
  auto P = [n](int i) { return 3 * n + i; };
  for (int i = 0; i < n; ++i) {
    if (std::holds_alternative<Dirichlet>(bc)) {
      // x = (p, P), xi = (q, -Q)
      m(i, p(i)) = 1;
      m(n + i, P(i)) = 1;
      m(2 * n + i, q(i)) = 1;
      m(3 * n + i, Q(i)) = -1;
    } else if (std::holds_alternative<Periodic>(bc)) {
      // x = ((q + Q) / 2, (p + P) / 2), xi = (P - p, q - Q)
      m(i, q(i)) = 0.5;
      m(i, Q(i)) = 0.5;
      m(n + i, p(i)) = 0.5;
      m(n + i, P(i)) = 0.5;
      m(2 * n + i, P(i)) = 1;
      m(2 * n + i, p(i)) = -1;
      m(3 * n + i, q(i)) = 1;
      m(3 * n + i, Q(i)) = -1;
    } else {
      // x = (q, Q), xi = (-p, P)
      m(i, q(i)) = 1;
      m(n + i, Q(i)) = 1;
      m(2 * n + i, p(i)) = -1;
      m(3 * n + i, P(i)) = 1;
    }
  }
  return {m, -m * wstar};
}

/// Contact problem (X = boundary condition, Lambda = graph of the time map) at a
/// solution z*, expressed in the product frame.
inline ContactProblem product_contact_problem(const SymplecticMapSpec& spec, const BoundaryCondition& bc,
                                              const Vector& mu, const Vector& zstar) {
  detail::check_bc(spec, bc);
  const int n = spec.system.n();
  require(zstar.size() == 2 * n, ErrorCode::DimensionMismatch, "solution point has the wrong size");
  double res = 0.0;
  if (const auto* d = std::get_if<Dirichlet>(&bc)) res = (zstar.head(n) - d->q_start).cwiseAbs().maxCoeff();
  const ResidualEval e = evaluate_residual(spec, bc, mu, unknowns_of(spec, bc, zstar));
  res = std::max(res, e.r.cwiseAbs().maxCoeff());
  require(res < 1e-10, ErrorCode::ResidualTooLarge,
          "z* does not solve the boundary value problem (residual " + std::to_string(res) + ")");

  const Vector image = time_map(spec, mu, zstar, false).z;
  Vector wstar(4 * n);
  wstar << zstar, image;
  const AffineSymplectic frame = product_frame(bc, n, wstar);

  LagrangianSpec X;
  if (const auto* g = std::get_if<GraphicalLagrangian>(&bc)) {
    // xi = -grad S(x* + x) + grad S(x*): potential -(S(x* + x) - S(x*) - grad S(x*) x)
    const Jet& s = g->potential;
    const int m = 2 * n;
    Vector xs(m);
    xs << zstar.head(n), image.head(n);
    std::vector<Jet> shift;
    for (int i = 0; i < m; ++i) shift.push_back(Jet::variable(m, s.degree(), i) + Jet::constant(m, s.degree(), xs[i]));
    Jet psi = jet_substitute(s, shift, m, s.degree()) * -1.0;
    psi.mutable_coefficients()[0] = 0.0;
    for (int i = 0; i < m; ++i) psi.mutable_coefficients()[1 + i] = 0.0;
    X = LagrangianSpec::graph(psi.canonicalize());
  } else {
    X = LagrangianSpec::zero_section(2 * n);
  }

  ImplicitSampler lam;
  lam.n = 2 * n;
  lam.point = [spec, mu, zstar, frame](const Vector& u) {
    const Vector z = zstar + u;
    Vector w(z.size() * 2);
    w << z, time_map(spec, mu, z, false).z;
    return frame.apply(w);
  };
  lam.tangent = [spec, mu, zstar, frame](const Vector& u) {
    const auto tm = time_map(spec, mu, zstar + u);
    const int m = static_cast<int>(u.size());
    Matrix t(2 * m, m);
    t << Matrix::Identity(m, m), tm.dz;
    return Matrix(frame.linear * t);
  };
  return ContactProblem(X, LagrangianSpec(std::move(lam)), Vector::Zero(4 * n));
}

/// Generating options for time-map problems: steps per degree sized for the
/// integrator's round-off (finer for the Hessian, coarser for degrees 3-4).
inline GeneratingOptions bvp_generating_options() {
  GeneratingOptions o;
  o.steps = {1e-3, 1e-3, 1e-3, 1e-2, 1e-2, 2e-2, 3e-2};
  o.best_conditioned = true;
  return o;
}

/// Class of the contact problem at a singular solution.
inline SingularityClass classify_singular_solution(const SymplecticMapSpec& spec, const BoundaryCondition& bc,
                                                   const Vector& mu, const Vector& zstar, int degree,
                                                   const GeneratingOptions& opt = bvp_generating_options()) {
  const ResidualEval e = evaluate_residual(spec, bc, mu, unknowns_of(spec, bc, zstar));
  const BvpSolution s = detail::describe(e, unknowns_of(spec, bc, zstar));
  require(s.singular, ErrorCode::NotSingular,
          "solution Jacobian is nondegenerate (sigma_min " + std::to_string(s.sigma_min) + ")");
  const ContactProblem p = product_contact_problem(spec, bc, mu, zstar);
  const GeneratingFunction g = generating_from_problem(p, degree, opt);
  return classify(g.jet, opt.classify);
}

// ---------------------------------------------------------------------------
// Continuation

struct ParamBox {
  Vector lo;
  Vector hi;

  std::vector<int> active() const {
    std::vector<int> a;
    for (int k = 0; k < lo.size(); ++k)
      if (hi[k] > lo[k]) a.push_back(k);
    return a;
  }
};

struct ContinuationOptions {
  double ds = 0.05;
  double ds_min = 1e-7;
  double ds_max = 0.25;
  int max_steps = 4000;
  double det_tol = 1e-10;
  double y_bound = 1e4;
  /// lines across the second parameter of a two-parameter box
  int lines = 41;
  bool classify = true;
  int classify_degree = 3;      // folds
  int cusp_degree = 4;          // cusps
  GeneratingOptions generating = bvp_generating_options();
};

struct BranchPoint {
  Vector mu;
  Vector z;
  double residual = 0.0;
  double det = 0.0;
};

struct SingularPoint {
  Vector mu;
  Vector z;
  std::optional<SingularityClass> cls;
  /// "classified", "indeterminate", "unclassified" (not attempted) or "failed"
  std::string status = "unclassified";
  /// max(1, |[r_y r_mu]|) / sigma_min(r_y)
  double condition = 0.0;
  std::string kind;  // "fold" or "cusp"
};

inline std::string label_of(const SingularPoint& s) { return s.cls ? to_string(*s.cls) : s.status; }

struct BifurcationDiagram {
  std::vector<std::vector<BranchPoint>> branches;
  std::vector<SingularPoint> singular_points;
  std::vector<std::string> notes;
};

namespace detail {

struct ArcPoint {
  Vector y;
  double mu = 0.0;
  ResidualEval e;
};

class Continuation {
 public:
  Continuation(const SymplecticMapSpec& spec, const BoundaryCondition& bc, Vector mu_base, int active,
               const ContinuationOptions& opt)
      : spec_(spec), bc_(bc), base_(std::move(mu_base)), k_(active), opt_(opt) {}

  Vector mu_at(double m) const {
    Vector mu = base_;
    mu[k_] = m;
    return mu;
  }

  ResidualEval eval(const Vector& y, double m) const { return evaluate_residual(spec_, bc_, mu_at(m), y); }

  // unit null vector of [r_y | r_mu]
  Vector tangent(const ResidualEval& e) const {
    const int ny = static_cast<int>(e.ry.cols());
    Matrix a(e.ry.rows(), ny + 1);
    a << e.ry, e.rmu.col(k_);
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
    return svd.matrixV().col(ny);
  }

  // Newton on r = 0 with (X - anchor) . dir = offset.
  std::optional<ArcPoint> correct(Vector y, double m, const Vector& anchor, const Vector& dir, double offset) const {
    const int ny = static_cast<int>(y.size());
    for (int it = 0; it < 12; ++it) {
      ResidualEval e;
      try {
        e = eval(y, m);
      } catch (const Error&) {
        return std::nullopt;
      }
      Vector X(ny + 1);
      X << y, m;
      const double c = (X - anchor).dot(dir) - offset;
      if (e.r.cwiseAbs().maxCoeff() <= 1e-12 && std::abs(c) <= 1e-12) return ArcPoint{y, m, std::move(e)};
      Matrix a(ny + 1, ny + 1);
      a << e.ry, e.rmu.col(k_), dir.transpose();
      Vector rhs(ny + 1);
      rhs << e.r, c;
      const Vector step = a.partialPivLu().solve(rhs);
      if (!step.allFinite()) return std::nullopt;
      y -= step.head(ny);
      m -= step[ny];
      if (!y.allFinite() || y.cwiseAbs().maxCoeff() > opt_.y_bound) return std::nullopt;
    }
    return std::nullopt;
  }

  BranchPoint record(const ArcPoint& a) const {
    return {mu_at(a.mu), a.e.z0, a.e.r.cwiseAbs().maxCoeff(), a.e.ry.determinant()};
  }

  // Bisection along the chord between two arc points for det(r_y) = 0.
  ArcPoint refine_fold(const ArcPoint& a, const ArcPoint& b) const {
    const int ny = static_cast<int>(a.y.size());
    Vector xa(ny + 1), xb(ny + 1);
    xa << a.y, a.mu;
    xb << b.y, b.mu;
    const Vector d = xb - xa;
    const double dd = d.squaredNorm();
    double s0 = 0.0, s1 = 1.0;
    double det0 = a.e.ry.determinant();
    ArcPoint best = std::abs(det0) < std::abs(b.e.ry.determinant()) ? a : b;
    for (int it = 0; it < 80; ++it) {
      const double s = 0.5 * (s0 + s1);
      const Vector guess = xa + s * d;
      auto c = correct(guess.head(ny), guess[ny], xa, d / std::sqrt(dd), s * std::sqrt(dd));
      if (!c) break;
      const double det = c->e.ry.determinant();
      if (std::abs(det) < std::abs(best.e.ry.determinant())) best = *c;
      if (std::abs(det) < opt_.det_tol) break;
      if ((det > 0) == (det0 > 0)) {
        s0 = s;
        det0 = det;
      } else {
        s1 = s;
      }
    }
    return best;
  }

  struct Traced {
    std::vector<ArcPoint> points;
    std::vector<ArcPoint> folds;
  };

  Traced trace(const ArcPoint& start, double direction, double lo, double hi, std::vector<std::string>& notes) const {
    Traced out;
    out.points.push_back(start);
    Vector t = tangent(start.e);
    if (t[t.size() - 1] * direction < 0) t = -t;
    double ds = opt_.ds;
    const int ny = static_cast<int>(start.y.size());
    for (int step = 0; step < opt_.max_steps; ++step) {
      const ArcPoint& cur = out.points.back();
      Vector xc(ny + 1);
      xc << cur.y, cur.mu;
      std::optional<ArcPoint> next;
      while (!next) {
        const Vector pred = xc + ds * t;
        next = correct(pred.head(ny), pred[ny], xc, t, ds);
        if (next) {
          // reject steps that jump to another branch
          Vector xn(ny + 1);
          xn << next->y, next->mu;
          if ((xn - xc).norm() > 2.0 * ds) next.reset();
        }
        if (!next) {
          ds *= 0.5;
          if (ds < opt_.ds_min) {
            notes.push_back("branch terminated: step-size underflow at mu = " + std::to_string(cur.mu));
            return out;
          }
        }
      }
      Vector tn = tangent(next->e);
      if (tn.dot(t) < 0) tn = -tn;
      t = tn;
      const double det_prev = cur.e.ry.determinant();
      const double det_next = next->e.ry.determinant();
      if ((det_prev > 0) != (det_next > 0) && det_prev != 0.0) out.folds.push_back(refine_fold(cur, *next));
      const bool leaving = next->mu < lo || next->mu > hi;
      if (leaving) {
        // land exactly on the boundary
        const double edge = next->mu < lo ? lo : hi;
        Vector dir = Vector::Zero(ny + 1);
        dir[ny] = 1.0;
        auto end = correct(cur.y, edge, xc, dir, edge - cur.mu);
        if (end) out.points.push_back(*end);
        return out;
      }
      out.points.push_back(*next);
      ds = std::min(ds * 1.5, opt_.ds_max);
    }
    notes.push_back("branch stopped after max_steps");
    return out;
  }

 private:
  const SymplecticMapSpec& spec_;
  const BoundaryCondition& bc_;
  Vector base_;
  int k_;
  const ContinuationOptions& opt_;
};

inline SingularPoint describe_singular(const SymplecticMapSpec& spec, const BoundaryCondition& bc, const Vector& mu,
                                       const Vector& z, const std::string& kind, int degree,
                                       const ContinuationOptions& opt, std::vector<std::string>& notes) {
  SingularPoint sp;
  sp.mu = mu;
  sp.z = z;
  sp.kind = kind;
  const ResidualEval e = evaluate_residual(spec, bc, mu, unknowns_of(spec, bc, z));
  Matrix aug(e.ry.rows(), e.ry.cols() + e.rmu.cols());
  aug << e.ry, e.rmu;
  const double smin = describe(e, unknowns_of(spec, bc, z)).sigma_min;
  sp.condition = std::max(1.0, aug.norm()) / smin;
  if (!opt.classify) return sp;
  std::ostringstream where;
  where << kind << " at mu = (" << mu.transpose() << ")";
  try {
    sp.cls = classify_singular_solution(spec, bc, mu, z, degree, opt.generating);
    sp.status = "classified";
  } catch (const Indeterminate& err) {
    sp.status = "indeterminate";
    notes.push_back(where.str() + " is indeterminate: " + err.what());
  } catch (const Error& err) {
    sp.status = "failed";
    notes.push_back(where.str() + " not classified: " + err.what());
  }
  return sp;
}

// One-parameter sweep: branches through the seeds at both ends of [lo, hi].
inline void sweep(const SymplecticMapSpec& spec, const BoundaryCondition& bc, const Vector& base, int k, double lo,
                  double hi, const std::vector<Vector>& seeds, const ContinuationOptions& opt,
                  std::vector<std::vector<ArcPoint>>& branches, std::vector<ArcPoint>& folds,
                  std::vector<std::string>& notes) {
  Continuation c(spec, bc, base, k, opt);
  for (double end : {lo, hi}) {
    const Vector mu = c.mu_at(end);
    const SolveReport starts = solve_bvp(spec, bc, mu, seeds);
    for (const auto& sol : starts.solutions) {
      bool seen = false;
      for (const auto& br : branches)
        for (const auto& pt : {br.front(), br.back()})
          if (std::abs(pt.mu - end) < 1e-9 && (pt.y - sol.y).norm() < 1e-6) seen = true;
      if (seen) continue;
      ArcPoint start{sol.y, end, c.eval(sol.y, end)};
      auto traced = c.trace(start, end == lo ? 1.0 : -1.0, lo, hi, notes);
      branches.push_back(std::move(traced.points));
      for (auto& f : traced.folds) {
        const bool dup = std::any_of(folds.begin(), folds.end(), [&](const ArcPoint& g) {
          return std::abs(g.mu - f.mu) < 1e-7 && (g.y - f.y).norm() < 1e-6;
        });
        if (!dup) folds.push_back(std::move(f));
      }
    }
  }
}

// Newton on (r, r_p, r_pp) in (p, mu_a, mu_b) for a scalar Dirichlet problem.
inline std::optional<std::pair<Vector, Vector>> refine_cusp(const SymplecticMapSpec& spec,
                                                           const BoundaryCondition& bc, const Vector& mu0,
                                                           int ka, int kb, double p0) {
  auto F = [&](const Vector& v) {
    Vector mu = mu0;
    mu[ka] = v[1];
    mu[kb] = v[2];
    const double h = 1e-4;
    auto rp = [&](double p) { return evaluate_residual(spec, bc, mu, Vector::Constant(1, p)).ry(0, 0); };
    const auto e = evaluate_residual(spec, bc, mu, Vector::Constant(1, v[0]));
    Vector out(3);
    out << e.r[0], e.ry(0, 0), (rp(v[0] + h) - rp(v[0] - h)) / (2 * h);
    return out;
  };
  Vector v(3);
  v << p0, mu0[ka], mu0[kb];
  try {
    for (int it = 0; it < 40; ++it) {
      const Vector f = F(v);
      if (f.cwiseAbs().maxCoeff() < 1e-9) {
        Vector mu = mu0;
        mu[ka] = v[1];
        mu[kb] = v[2];
        // r_pp carries finite-difference noise; finish r = 0 through mu_a, where r_mu is regular
        for (int k = 0; k < 3; ++k) {
          const auto e = evaluate_residual(spec, bc, mu, Vector::Constant(1, v[0]));
          if (std::abs(e.r[0]) < 1e-14) break;
          mu[ka] -= e.r[0] / e.rmu(0, ka);
        }
        return std::make_pair(mu, Vector::Constant(1, v[0]));
      }
      Matrix j(3, 3);
      for (int c = 0; c < 3; ++c) {
        Vector e = Vector::Zero(3);
        e[c] = 1e-5;
        j.col(c) = (F(v + e) - F(v - e)) / 2e-5;
      }
      v -= j.fullPivLu().solve(f);
      if (!v.allFinite()) return std::nullopt;
    }
  } catch (const Error&) {
  }
  return std::nullopt;
}

}  // namespace detail

/// Pseudo-arclength continuation over a one- or two-parameter box. Folds are
/// sign changes of det(r_y) refined by bisection; in two parameters, cusps are
/// located where fold pairs on adjacent lines annihilate and refined by Newton.
inline BifurcationDiagram continue_branches(const SymplecticMapSpec& spec, const BoundaryCondition& bc,
                                            const ParamBox& box, const std::vector<Vector>& seeds,
                                            const ContinuationOptions& opt = {}) {
  detail::check_bc(spec, bc);
  require(box.lo.size() == spec.system.nparams() && box.hi.size() == box.lo.size(), ErrorCode::DimensionMismatch,
          "parameter box has the wrong size");
  const auto act = box.active();
  require(act.size() == 1 || act.size() == 2, ErrorCode::InvalidInput, "continuation needs 1 or 2 active parameters");
  BifurcationDiagram diag;
  const int ka = act[0];

  auto emit = [&](detail::Continuation& c, const std::vector<std::vector<detail::ArcPoint>>& branches) {
    for (const auto& br : branches) {
      std::vector<BranchPoint> pts;
      for (const auto& a : br) pts.push_back(c.record(a));
      diag.branches.push_back(std::move(pts));
    }
  };

  if (act.size() == 1) {
    std::vector<std::vector<detail::ArcPoint>> branches;
    std::vector<detail::ArcPoint> folds;
    detail::sweep(spec, bc, box.lo, ka, box.lo[ka], box.hi[ka], seeds, opt, branches, folds, diag.notes);
    detail::Continuation c(spec, bc, box.lo, ka, opt);
    emit(c, branches);
    std::sort(folds.begin(), folds.end(), [](const auto& a, const auto& b) { return a.mu < b.mu; });
    for (const auto& f : folds)
      diag.singular_points.push_back(
          detail::describe_singular(spec, bc, c.mu_at(f.mu), f.e.z0, "fold", opt.classify_degree, opt, diag.notes));
    return diag;
  }

  const int kb = act[1];
  std::vector<std::pair<double, std::vector<detail::ArcPoint>>> line_folds;
  for (int j = 0; j < opt.lines; ++j) {
    Vector base = box.lo;
    base[kb] = box.lo[kb] + (box.hi[kb] - box.lo[kb]) * j / std::max(1, opt.lines - 1);
    std::vector<std::vector<detail::ArcPoint>> branches;
    std::vector<detail::ArcPoint> folds;
    detail::sweep(spec, bc, base, ka, box.lo[ka], box.hi[ka], seeds, opt, branches, folds, diag.notes);
    detail::Continuation c(spec, bc, base, ka, opt);
    emit(c, branches);
    std::sort(folds.begin(), folds.end(), [](const auto& a, const auto& b) { return a.mu < b.mu; });
    ContinuationOptions no_class = opt;
    no_class.classify = false;
    for (const auto& f : folds)
      diag.singular_points.push_back(
          detail::describe_singular(spec, bc, c.mu_at(f.mu), f.e.z0, "fold", opt.classify_degree, no_class,
                                    diag.notes));
    line_folds.emplace_back(base[kb], std::move(folds));
  }

  const bool scalar = std::holds_alternative<Dirichlet>(bc) && spec.system.n() == 1;
  for (std::size_t j = 0; j + 1 < line_folds.size(); ++j) {
    const auto& a = line_folds[j];
    const auto& b = line_folds[j + 1];
    if (a.second.size() == b.second.size()) continue;
    const auto& more = a.second.size() > b.second.size() ? a : b;
    if (!scalar) {
      diag.notes.push_back("fold count changes near mu = " + std::to_string(more.first) +
                           "; cusp refinement needs a scalar Dirichlet problem");
      continue;
    }
    // closest pair of folds on the richer line is the pair about to annihilate
    std::size_t best = 0;
    double gap = INFINITY;
    for (std::size_t i = 0; i + 1 < more.second.size(); ++i) {
      const double g = std::abs(more.second[i + 1].mu - more.second[i].mu);
      if (g < gap) {
        gap = g;
        best = i;
      }
    }
    if (more.second.size() < 2) continue;
    const auto& f0 = more.second[best];
    const auto& f1 = more.second[best + 1];
    Vector mu0 = box.lo;
    mu0[ka] = 0.5 * (f0.mu + f1.mu);
    mu0[kb] = 0.5 * (a.first + b.first);
    auto cusp = detail::refine_cusp(spec, bc, mu0, ka, kb, 0.5 * (f0.y[0] + f1.y[0]));
    if (!cusp) {
      diag.notes.push_back("cusp refinement did not converge near mu = " + std::to_string(mu0[kb]));
      continue;
    }
    Vector z(2);
    z << std::get<Dirichlet>(bc).q_start[0], cusp->second[0];
    diag.singular_points.push_back(
        detail::describe_singular(spec, bc, cusp->first, z, "cusp", opt.cusp_degree, opt, diag.notes));
  }
  return diag;
}

}  // namespace lgc
