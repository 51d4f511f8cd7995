#pragma once

// Lagrangian contact problems in (R^2n, sum d xi ^ d x), their generating
// functions and families, and (stable) contact equivalence.

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lgc/classify.hpp"
#include "lgc/jets.hpp"
#include "lgc/linalg.hpp"
#include "lgc/splitting.hpp"

namespace lgc {

/// w -> linear * w + offset, with linear symplectic for standard_symplectic.
struct AffineSymplectic {
  Matrix linear;
  Vector offset;

  static AffineSymplectic identity(int dim) { return {Matrix::Identity(dim, dim), Vector::Zero(dim)}; }

  int dim() const { return static_cast<int>(linear.rows()); }
  Vector apply(const Vector& w) const { return linear * w + offset; }

  /// this o inner
  AffineSymplectic after(const AffineSymplectic& inner) const {
    return {linear * inner.linear, linear * inner.offset + offset};
  }

  AffineSymplectic inverse() const {
    Matrix inv = linear.inverse();
    return {inv, -inv * offset};
  }

  double symplectic_defect() const {
    const int n = dim() / 2;
    const Matrix j = standard_symplectic(n);
    return max_abs(linear.transpose() * j * linear - j);
  }

  /// (x, xi) -> (x + S xi, xi); preserves the zero section pointwise.
  static AffineSymplectic fibre_shear(const Matrix& s) {
    const int n = static_cast<int>(s.rows());
    Matrix m = Matrix::Identity(2 * n, 2 * n);
    m.topRightCorner(n, n) = 0.5 * (s + s.transpose());
    return {m, Vector::Zero(2 * n)};
  }
};

enum class GraphBase { Position, Momentum };

/// Graph of d(potential): xi = grad(x) over Position, x = grad(xi) over Momentum.
struct PotentialGraph {
  Jet potential;
  GraphBase base = GraphBase::Position;
};

/// Parametrised patch u in R^n -> point of the Lagrangian; u = 0 should land near
/// the base point. `tangent` may be left empty (finite differences are used).
struct ImplicitSampler {
  int n = 0;
  std::function<Vector(const Vector&)> point;
  std::function<Matrix(const Vector&)> tangent;
};

class LagrangianSpec {
 public:
  using Representation = std::variant<PotentialGraph, ImplicitSampler>;

  LagrangianSpec() = default;

  explicit LagrangianSpec(PotentialGraph g) : rep_(std::move(g)) {
    const auto& pg = std::get<PotentialGraph>(rep_);
    n_ = pg.potential.nvars();
    grad_ = jet_gradient(pg.potential);
    for (const auto& g1 : grad_) hess_.push_back(jet_gradient(g1));
  }

  explicit LagrangianSpec(ImplicitSampler s) : rep_(std::move(s)) {
    const auto& is = std::get<ImplicitSampler>(rep_);
    require(is.n > 0 && static_cast<bool>(is.point), ErrorCode::InvalidInput, "sampler needs a dimension and a map");
    n_ = is.n;
  }

  static LagrangianSpec graph(const Jet& potential, GraphBase base = GraphBase::Position) {
    return LagrangianSpec(PotentialGraph{potential, base});
  }
  static LagrangianSpec zero_section(int n) { return graph(Jet(n, 2)); }

  int n() const { return n_; }
  int ambient_dim() const { return 2 * n_; }
  const Representation& representation() const { return rep_; }
  bool is_potential() const { return std::holds_alternative<PotentialGraph>(rep_); }

  Vector point(const Vector& u) const {
    if (const auto* pg = std::get_if<PotentialGraph>(&rep_)) {
      std::vector<double> mono;
      pg->potential.basis().evaluate_monomials(std::span<const double>(u.data(), u.size()), mono);
      Vector g(n_);
      for (int i = 0; i < n_; ++i) g[i] = eval_prefix(grad_[i], mono);
      Vector w(2 * n_);
      if (pg->base == GraphBase::Position) w << u, g;
      else w << g, u;
      return w;
    }
    return std::get<ImplicitSampler>(rep_).point(u);
  }

  /// Columns span the tangent plane at point(u).
  Matrix tangent(const Vector& u) const {
    if (const auto* pg = std::get_if<PotentialGraph>(&rep_)) {
      Matrix h(n_, n_);
      for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) h(i, j) = hess_[i][j].evaluate(u);
      Matrix t(2 * n_, n_);
      if (pg->base == GraphBase::Position) t << Matrix::Identity(n_, n_), h;
      else t << h, Matrix::Identity(n_, n_);
      return t;
    }
    const auto& s = std::get<ImplicitSampler>(rep_);
    if (s.tangent) return s.tangent(u);
    // fourth-order central differences
    const double h = 1e-3;
    Matrix t(2 * n_, n_);
    for (int j = 0; j < n_; ++j) {
      Vector e = Vector::Zero(n_);
      e[j] = h;
      t.col(j) = (-s.point(u + 2 * e) + 8 * s.point(u + e) - 8 * s.point(u - e) + s.point(u - 2 * e)) / (12 * h);
    }
    return t;
  }

  /// Image under an affine symplectic map.
  LagrangianSpec transformed(const AffineSymplectic& phi) const {
    const LagrangianSpec self = *this;
    ImplicitSampler s;
    s.n = n_;
    s.point = [self, phi](const Vector& u) { return phi.apply(self.point(u)); };
    s.tangent = [self, phi](const Vector& u) { return Matrix(phi.linear * self.tangent(u)); };
    return LagrangianSpec(std::move(s));
  }

  /// A x B in (x_A, x_B, xi_A, xi_B) ordering.
  static LagrangianSpec product(const LagrangianSpec& a, const LagrangianSpec& b) {
    const int na = a.n(), nb = b.n();
    ImplicitSampler s;
    s.n = na + nb;
    s.point = [a, b, na, nb](const Vector& u) {
      const Vector pa = a.point(u.head(na)), pb = b.point(u.tail(nb));
      Vector w(2 * (na + nb));
      w << pa.head(na), pb.head(nb), pa.tail(na), pb.tail(nb);
      return w;
    };
    s.tangent = [a, b, na, nb](const Vector& u) {
      const Matrix ta = a.tangent(u.head(na)), tb = b.tangent(u.tail(nb));
      Matrix t = Matrix::Zero(2 * (na + nb), na + nb);
      t.block(0, 0, na, na) = ta.topRows(na);
      t.block(na, na, nb, nb) = tb.topRows(nb);
      t.block(na + nb, 0, na, na) = ta.bottomRows(na);
      t.block(2 * na + nb, na, nb, nb) = tb.bottomRows(nb);
      return t;
    };
    return LagrangianSpec(std::move(s));
  }

  /// Largest |omega(v_i, v_j)| over an orthonormal basis of the tangent plane at u.
  double isotropy_defect(const Vector& u) const {
    const Matrix t = tangent(u);
    Eigen::HouseholderQR<Matrix> qr(t);
    const Matrix q = qr.householderQ() * Matrix::Identity(t.rows(), t.cols());
    return max_abs(q.transpose() * standard_symplectic(n_) * q);
  }

 private:
  // gradient jets have one degree less; their basis is a prefix of the potential's
  static double eval_prefix(const Jet& f, const std::vector<double>& mono) {
    const auto& c = f.coefficients();
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * mono[i];
    return s;
  }

  Representation rep_;
  int n_ = 0;
  std::vector<Jet> grad_;
  std::vector<std::vector<Jet>> hess_;
};

namespace detail {

// Gauss-Newton for point(u) = target from u = 0.
inline std::optional<Vector> locate_on(const LagrangianSpec& spec, const Vector& target, double tol) {
  if (const auto* pg = std::get_if<PotentialGraph>(&spec.representation())) {
    const int n = spec.n();
    Vector u = pg->base == GraphBase::Position ? Vector(target.head(n)) : Vector(target.tail(n));
    if ((spec.point(u) - target).cwiseAbs().maxCoeff() <= tol) return u;
    return std::nullopt;
  }
  Vector u = Vector::Zero(spec.n());
  for (int it = 0; it < 60; ++it) {
    const Vector r = spec.point(u) - target;
    if (r.cwiseAbs().maxCoeff() <= tol) return u;
    const Matrix t = spec.tangent(u);
    const Vector step = t.colPivHouseholderQr().solve(r);
    u -= step;
    if (!u.allFinite()) break;
  }
  if ((spec.point(u) - target).cwiseAbs().maxCoeff() <= tol) return u;
  return std::nullopt;
}

// Orthonormal unitary frame U with U (e_i, 0) spanning the given Lagrangian plane.
inline Matrix unitary_frame(const Matrix& tangent) {
  const int n = static_cast<int>(tangent.cols());
  Eigen::HouseholderQR<Matrix> qr(tangent);
  Matrix q = qr.householderQ() * Matrix::Identity(2 * n, n);
  // Gram-Schmidt orientation (positive diagonal of R), so a plane already equal
  // to the zero section gives the identity frame
  const Matrix r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  const Matrix a = q.topRows(n), b = q.bottomRows(n);
  Matrix u(2 * n, 2 * n);
  u << a, -b, b, a;
  return u;
}

}  // namespace detail

/// (X, Lambda, z) with an affine Darboux frame sending z to 0 and T_z X to the zero section.
class ContactProblem {
 public:
  ContactProblem() = default;

  ContactProblem(LagrangianSpec X, LagrangianSpec Lambda, Vector z,
                 std::optional<AffineSymplectic> frame = std::nullopt)
      : x_(std::move(X)), lambda_(std::move(Lambda)), z_(std::move(z)) {
    require(x_.n() == lambda_.n() && z_.size() == x_.ambient_dim(), ErrorCode::DimensionMismatch,
            "X, Lambda and z must live in the same ambient space");
    auto ux = detail::locate_on(x_, z_, 1e-10);
    require(ux.has_value(), ErrorCode::NoIntersection, "z does not lie on X");
    auto ul = detail::locate_on(lambda_, z_, 1e-10);
    require(ul.has_value(), ErrorCode::NoIntersection, "z does not lie on Lambda");
    ux_ = *ux;
    ul_ = *ul;
    const Matrix tx = x_.tangent(ux_);
    require(smallest_singular_ratio(tx) > 1e-8, ErrorCode::InvalidInput, "X is not immersed at z");
    require(x_.isotropy_defect(ux_) < 1e-8, ErrorCode::InvalidInput, "tangent plane of X at z is not Lagrangian");
    // a degenerate patch of Lambda is left to generating_from_problem to reject
    if (smallest_singular_ratio(lambda_.tangent(ul_)) > 1e-8)
      require(lambda_.isotropy_defect(ul_) < 1e-8, ErrorCode::InvalidInput,
              "tangent plane of Lambda at z is not Lagrangian");

    const int n = x_.n();
    if (frame) {
      frame_ = *frame;
      require(frame_.dim() == 2 * n, ErrorCode::DimensionMismatch, "frame has the wrong size");
      require(frame_.symplectic_defect() < 1e-10 * std::max(1.0, max_abs(frame_.linear) * max_abs(frame_.linear)),
              ErrorCode::InvalidInput, "frame is not symplectic");
      require(frame_.apply(z_).cwiseAbs().maxCoeff() < 1e-10, ErrorCode::InvalidInput, "frame does not send z to 0");
      Eigen::HouseholderQR<Matrix> qr(frame_.linear * tx);
      const Matrix q = qr.householderQ() * Matrix::Identity(2 * n, n);
      require(max_abs(q.bottomRows(n)) < 1e-8, ErrorCode::InvalidInput,
              "frame does not send T_z X to the zero section");
    } else {
      const Matrix m = detail::unitary_frame(tx).transpose();
      frame_ = {m, -m * z_};
    }
  }

  const LagrangianSpec& X() const { return x_; }
  const LagrangianSpec& Lambda() const { return lambda_; }
  const Vector& z() const { return z_; }
  const AffineSymplectic& darboux_frame() const { return frame_; }
  int n() const { return x_.n(); }
  const Vector& param_X() const { return ux_; }
  const Vector& param_Lambda() const { return ul_; }

  /// Same problem in frame `phi o frame`; phi must fix 0 and the zero section's tangent.
  ContactProblem reframed(const AffineSymplectic& phi) const {
    return ContactProblem(x_, lambda_, z_, phi.after(frame_));
  }

  /// Image of the whole problem under an affine symplectic map (frame recomputed).
  ContactProblem transformed(const AffineSymplectic& phi) const {
    return ContactProblem(x_.transformed(phi), lambda_.transformed(phi), phi.apply(z_));
  }

  /// Adds m fresh dimensions: X x zero section and Lambda x graph(d(y^T Q y)).
  ContactProblem stabilized(const Matrix& q) const {
    const int m = static_cast<int>(q.rows());
    const int n = this->n();
    Jet quad(m, 2);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        MultiIndex e(m, 0);
        ++e[i];
        ++e[j];
        quad.add_term(e, q(i, j));
      }
    Vector z2 = Vector::Zero(2 * (n + m));
    z2.head(n) = z_.head(n);
    z2.segment(n + m, n) = z_.tail(n);
    return ContactProblem(LagrangianSpec::product(x_, LagrangianSpec::zero_section(m)),
                          LagrangianSpec::product(lambda_, LagrangianSpec::graph(quad.canonicalize())), z2);
  }

 private:
  LagrangianSpec x_, lambda_;
  Vector z_;
  AffineSymplectic frame_;
  Vector ux_, ul_;
};

enum class IntersectionKind { Isolated, NonIsolated, Unresolved };

inline const char* to_string(IntersectionKind k) {
  switch (k) {
    case IntersectionKind::Isolated: return "Isolated";
    case IntersectionKind::NonIsolated: return "NonIsolated";
    case IntersectionKind::Unresolved: return "Unresolved";
  }
  return "?";
}

struct GeneratingFunction {
  Jet jet;
  IntersectionKind kind = IntersectionKind::Unresolved;
  AffineSymplectic frame;   // frame actually used (after any fibre shear)
  int frames_tried = 0;
  double closedness_defect = 0.0;
};

namespace detail {

inline IntersectionKind intersection_kind(const Jet& f, const ClassifyOptions& opt) {
  if (f.is_zero(1e-8)) return IntersectionKind::NonIsolated;
  try {
    std::string why;
    return try_classify(f, opt, why) ? IntersectionKind::Isolated : IntersectionKind::Unresolved;
  } catch (const Error&) {
    return IntersectionKind::Unresolved;
  }
}

}  // namespace detail

/// phi^Lambda - phi^X for two graphs over the same base, constant removed.
inline GeneratingFunction generating_from_potentials(const Jet& phi_lambda, const Jet& phi_x,
                                                     const ClassifyOptions& opt = {}) {
  require(phi_lambda.nvars() == phi_x.nvars(), ErrorCode::VarCountMismatch, "potentials differ in arity");
  require(phi_lambda.degree() == phi_x.degree(), ErrorCode::DegreeMismatch, "potentials differ in degree");
  Jet f = phi_lambda - phi_x;
  const Vector g = f.gradient_at_zero();
  require(g.size() == 0 || g.cwiseAbs().maxCoeff() <= opt.split.gradient_tol, ErrorCode::NoIntersection,
          "the graphs do not meet over the base point");
  f.mutable_coefficients()[0] = 0.0;
  f.canonicalize();
  GeneratingFunction out;
  out.kind = detail::intersection_kind(f, opt);
  out.jet = std::move(f);
  out.frame = AffineSymplectic::identity(2 * out.jet.nvars());
  return out;
}

/// Coefficient thresholds matched to the accuracy of fitted jets (about 1e-8
/// through degree 4): smaller coefficients are zero, larger than 1e-4 nonzero.
inline ClassifyOptions fitted_classify_options() {
  ClassifyOptions o;
  o.zero_tol = 1e-6;
  o.ambiguous_tol = 1e-4;
  o.split.gradient_tol = 1e-8;
  return o;
}

struct GeneratingOptions {
  /// finite-difference base step per total degree (last entry reused)
  std::vector<double> steps{1e-3, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 3e-2};
  double newton_tol = 1e-13;
  int newton_max_iter = 50;
  double graphical_ratio = 1e-6;
  double closedness_tol = 1e-6;
  double closedness_radius = 0.05;
  /// coefficients below this are dropped from the fitted jet
  double chop = 1e-10;
  int random_frames = 8;
  unsigned seed = 7;
  /// try shears in order of decreasing graphicality margin instead of list order
  bool best_conditioned = false;
  ClassifyOptions classify = fitted_classify_options();
};

namespace detail {

struct GraphFailure : Error {
  explicit GraphFailure(const std::string& what) : Error(ErrorCode::NotGraphicalAfterRetry, what) {}
};

// (t, weight) for the 32-point Gauss-Legendre rule on [0, 1], t ascending.
inline const std::vector<std::pair<double, double>>& radial_rule() {
  static const std::vector<std::pair<double, double>> rule = [] {
    using Rule = boost::math::quadrature::gauss<double, 32>;
    std::vector<std::pair<double, double>> r;
    const auto& a = Rule::abscissa();
    const auto& w = Rule::weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0.0) {
        r.emplace_back(0.5, 0.5 * w[i]);
      } else {
        r.emplace_back(0.5 * (1 - a[i]), 0.5 * w[i]);
        r.emplace_back(0.5 * (1 + a[i]), 0.5 * w[i]);
      }
    }
    std::sort(r.begin(), r.end());
    return r;
  }();
  return rule;
}

// A Lagrangian seen as xi = g(x) through an affine frame, solved by Newton on
// the patch parameter with warm starts.
class FramedGraph {
 public:
  FramedGraph(const LagrangianSpec& spec, const AffineSymplectic& frame, Vector u0, const GeneratingOptions& opt)
      : spec_(&spec), frame_(frame), u0_(std::move(u0)), opt_(&opt) {}

  const Vector& base_param() const { return u0_; }

  /// xi at base point x; u is the warm start and is updated.
  Vector solve(const Vector& x, Vector& u) const {
    const int n = spec_->n();
    for (int it = 0; it <= opt_->newton_max_iter; ++it) {
      const Vector w = frame_.apply(spec_->point(u));
      const Vector r = w.head(n) - x;
      if (r.cwiseAbs().maxCoeff() <= opt_->newton_tol * std::max(1.0, x.cwiseAbs().maxCoeff()))
        return w.tail(n);
      const Matrix jac = (frame_.linear * spec_->tangent(u)).topRows(n);
      Eigen::FullPivLU<Matrix> lu(jac);
      if (!lu.isInvertible()) break;
      const Vector step = lu.solve(r);
      u -= step;
      if (!u.allFinite()) break;
      if (step.cwiseAbs().maxCoeff() < 1e-16 * std::max(1.0, u.cwiseAbs().maxCoeff())) {
        const Vector w2 = frame_.apply(spec_->point(u));
        if ((w2.head(n) - x).cwiseAbs().maxCoeff() <= 1e-11) return w2.tail(n);
        break;
      }
    }
    throw GraphFailure("Newton projection onto the base failed; the Lagrangian is not graphical here");
  }

  /// Tangent plane at the base point, in frame coordinates.
  Matrix base_tangent() const { return frame_.linear * spec_->tangent(u0_); }

 private:
  const LagrangianSpec* spec_;
  AffineSymplectic frame_;
  Vector u0_;
  const GeneratingOptions* opt_;
};

// The closed 1-form g = xi_Lambda - xi_X and its radial primitive.
class PrimitiveOracle {
 public:
  PrimitiveOracle(FramedGraph lambda, FramedGraph x) : lambda_(std::move(lambda)), x_(std::move(x)) {}

  Vector form(const Vector& x) const {
    Vector ul = lambda_.base_param(), ux = x_.base_param();
    // walk from the base point so Newton stays on the branch through z
    const auto& rule = radial_rule();
    for (const auto& node : rule) {
      lambda_.solve(node.first * x, ul);
      x_.solve(node.first * x, ux);
    }
    return lambda_.solve(x, ul) - x_.solve(x, ux);
  }

  double primitive(const Vector& x) const {
    Vector ul = lambda_.base_param(), ux = x_.base_param();
    double s = 0.0;
    for (const auto& [t, w] : radial_rule()) {
      const Vector tx = t * x;
      s += w * (lambda_.solve(tx, ul) - x_.solve(tx, ux)).dot(x);
    }
    return s;
  }

 private:
  FramedGraph lambda_, x_;
};

// smallest singular value of the base block of an orthonormal tangent basis
inline double graphical_margin(const FramedGraph& g, int n) {
  const Matrix t = g.base_tangent();
  if (smallest_singular_ratio(t) < 1e-10) return 0.0;
  Eigen::HouseholderQR<Matrix> qr(t);
  const Matrix q = qr.householderQ() * Matrix::Identity(2 * n, n);
  Eigen::JacobiSVD<Matrix> svd(q.topRows(n));
  return svd.singularValues()[n - 1];
}

inline bool graphical_at_base(const FramedGraph& g, double ratio, int n) { return graphical_margin(g, n) >= ratio; }

inline double closedness_defect(const PrimitiveOracle& oracle, int n, double radius) {
  std::vector<Vector> centers{Vector::Zero(n)};
  for (int i = 0; i < n; ++i) {
    Vector e = Vector::Zero(n);
    e[i] = radius;
    centers.push_back(e);
    centers.push_back(-e);
  }
  const double h = 1e-4;
  double worst = 0.0;
  for (const auto& c : centers) {
    Matrix dg(n, n);
    for (int j = 0; j < n; ++j) {
      Vector e = Vector::Zero(n);
      e[j] = h;
      dg.col(j) = (oracle.form(c + e) - oracle.form(c - e)) / (2 * h);
    }
    worst = std::max(worst, max_abs(dg - dg.transpose()) / std::max(1.0, max_abs(dg)));
  }
  return worst;
}

inline std::vector<Matrix> candidate_shears(int n, const GeneratingOptions& opt) {
  std::vector<Matrix> out{Matrix::Zero(n, n)};
  for (double c : {1.0, 0.5, 2.0}) {
    out.push_back(c * Matrix::Identity(n, n));
    out.push_back(-c * Matrix::Identity(n, n));
  }
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int k = 0; k < opt.random_frames; ++k) {
    Matrix s(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) s(i, j) = s(j, i) = uni(rng);
    out.push_back(s);
  }
  return out;
}

inline Jet fit_primitive(const std::function<double(std::span<const double>)>& f, int nvars, int degree,
                         const GeneratingOptions& opt) {
  Jet j = jet_from_oracle(f, nvars, degree, opt.steps);
  j.mutable_coefficients()[0] = 0.0;
  if (opt.chop > 0) j.chop(opt.chop);
  return j.canonicalize();
}

}  // namespace detail

namespace detail {

struct FrameChoice {
  AffineSymplectic frame;
  int tried = 0;
  double defect = 0.0;
};

// Walks the candidate fibre shears from `start`; a frame is accepted when Lambda
// is graphical at the base point and the closedness probe succeeds there.
inline FrameChoice select_frame(const ContactProblem& p, const GeneratingOptions& opt, int start,
                                std::string& last) {
  const int n = p.n();
  auto shears = candidate_shears(n, opt);
  if (opt.best_conditioned) {
    std::vector<std::pair<double, Matrix>> ranked;
    for (const auto& s : shears) {
      FramedGraph lam(p.Lambda(), AffineSymplectic::fibre_shear(s).after(p.darboux_frame()), p.param_Lambda(), opt);
      ranked.emplace_back(graphical_margin(lam, n), s);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; k < shears.size(); ++k) shears[k] = ranked[k].second;
  }
  for (int k = start; k < static_cast<int>(shears.size()); ++k) {
    const AffineSymplectic frame = AffineSymplectic::fibre_shear(shears[k]).after(p.darboux_frame());
    FramedGraph lam(p.Lambda(), frame, p.param_Lambda(), opt);
    FramedGraph xx(p.X(), frame, p.param_X(), opt);
    if (!graphical_at_base(lam, opt.graphical_ratio, n)) {
      last = "Lambda is not graphical at the base point";
      continue;
    }
    try {
      const double defect = closedness_defect(PrimitiveOracle(lam, xx), n, opt.closedness_radius);
      if (defect > opt.closedness_tol)
        throw Error(ErrorCode::ClosednessViolation,
                    "xi_Lambda - xi_X is not closed (asymmetry " + std::to_string(defect) + ")");
      return {frame, k + 1, defect};
    } catch (const GraphFailure& e) {
      last = e.what();
    }
  }
  throw Error(ErrorCode::NotGraphicalAfterRetry, "no tried frame renders Lambda graphical: " + last);
}

}  // namespace detail

/// Generating function of a contact problem from sampled geometry: Lambda is
/// read as xi = g(x) in the Darboux frame (retrying fibre shears when it is not
/// graphical), g is checked to be closed, integrated along rays and fitted.
inline GeneratingFunction generating_from_problem(const ContactProblem& p, int degree,
                                                  const GeneratingOptions& opt = {}) {
  const int n = p.n();
  std::string last;
  int start = 0;
  while (true) {
    const detail::FrameChoice choice = detail::select_frame(p, opt, start, last);
    detail::PrimitiveOracle oracle(detail::FramedGraph(p.Lambda(), choice.frame, p.param_Lambda(), opt),
                                   detail::FramedGraph(p.X(), choice.frame, p.param_X(), opt));
    try {
      auto f = [&oracle, n](std::span<const double> x) {
        return oracle.primitive(Eigen::Map<const Vector>(x.data(), n));
      };
      GeneratingFunction out;
      out.jet = detail::fit_primitive(f, n, degree, opt);
      out.kind = detail::intersection_kind(out.jet, opt.classify);
      out.frame = choice.frame;
      out.frames_tried = choice.tried;
      out.closedness_defect = choice.defect;
      return out;
    } catch (const detail::GraphFailure& e) {
      last = e.what();
      start = choice.tried;
    }
  }
}

/// Stable contact equivalence through the generating functions' classes.
inline EquivalenceVerdict contact_equivalent(const ContactProblem& a, const ContactProblem& b, int degree = 4,
                                             const GeneratingOptions& opt = {}) {
  const auto ga = generating_from_problem(a, degree, opt);
  const auto gb = generating_from_problem(b, degree, opt);
  return stably_right_equivalent(ga.jet, gb.jet, opt.classify);
}

// ---------------------------------------------------------------------------
// Families

class GeneratingFamily {
 public:
  GeneratingFamily() = default;
  GeneratingFamily(Jet family, int nparams) : family_(std::move(family)), l_(nparams) {
    require(l_ >= 0 && l_ <= family_.nvars(), ErrorCode::InvalidInput, "invalid parameter count");
    require(std::abs(family_.constant_term()) <= 1e-9, ErrorCode::NonZeroConstant, "family(0, 0) must vanish");
    const Vector g = family_.gradient_at_zero();
    for (int v = l_; v < family_.nvars(); ++v)
      require(std::abs(g[v]) <= 1e-8, ErrorCode::NotCritical, "x-gradient of the family at (0, 0) is nonzero");
  }

  const Jet& family() const { return family_; }
  int nparams() const { return l_; }
  int nvars() const { return family_.nvars() - l_; }

  /// x -> family(mu, x) as a jet in x (exact re-expansion of the polynomial).
  Jet slice(const Vector& mu) const {
    const int n = nvars();
    const int d = family_.degree();
    std::vector<Jet> args;
    for (int i = 0; i < l_; ++i) args.push_back(Jet::constant(n, d, mu[i]));
    for (int i = 0; i < n; ++i) args.push_back(Jet::variable(n, d, i));
    return jet_substitute(family_, args, n, d);
  }

 private:
  Jet family_;
  int l_ = 0;
};

/// mu -> (X_mu, Lambda_mu) near the base point z of the mu = 0 problem.
struct ContactFamily {
  int nparams = 0;
  std::function<LagrangianSpec(const Vector&)> X;
  std::function<LagrangianSpec(const Vector&)> Lambda;
  Vector z;
  std::optional<AffineSymplectic> frame;
};

/// Generating family rho(mu, x): for each mu, the radial primitive of
/// xi_{Lambda_mu} - xi_{X_mu} in the fixed frame of the mu = 0 problem.
inline GeneratingFamily generating_family_from_problem(const ContactFamily& fam, int degree,
                                                       const GeneratingOptions& opt = {}) {
  const int l = fam.nparams;
  const Vector zero_mu = Vector::Zero(l);
  const ContactProblem base(fam.X(zero_mu), fam.Lambda(zero_mu), fam.z, fam.frame);
  const int n = base.n();
  std::string last;
  const AffineSymplectic frame = detail::select_frame(base, opt, 0, last).frame;

  auto f = [&](std::span<const double> v) {
    const Vector mu = Eigen::Map<const Vector>(v.data(), l);
    const Vector x = Eigen::Map<const Vector>(v.data() + l, n);
    const LagrangianSpec lam = fam.Lambda(mu), xs = fam.X(mu);
    // follow the base parameters from mu = 0 to mu at x = 0
    Vector ul = base.param_Lambda(), ux = base.param_X();
    detail::FramedGraph gl(lam, frame, ul, opt), gx(xs, frame, ux, opt);
    gl.solve(Vector::Zero(n), ul);
    gx.solve(Vector::Zero(n), ux);
    detail::PrimitiveOracle oracle(detail::FramedGraph(lam, frame, ul, opt), detail::FramedGraph(xs, frame, ux, opt));
    return oracle.primitive(x);
  };
  return GeneratingFamily(detail::fit_primitive(f, l + n, degree, opt), l);
}

namespace detail {

struct VersalRecognition {
  SingularityClass center;
  int corank = 0;
  int effective_rank = 0;
  bool versal = false;
  std::string note;
};

// Organizing centre and effective parameter rank of a Morse-reduced family.
inline VersalRecognition recognize_versal(const GeneratingFamily& F, const ClassifyOptions& opt) {
  VersalRecognition r;
  const int l = F.nparams();
  const FamilySplit fs = split_family(F.family(), l, opt.split);
  r.corank = fs.corank();
  const Jet center = F.slice(Vector::Zero(l));
  r.center = classify(center, opt);
  if (r.center.family == Family::Morse) {
    r.versal = true;
    return r;
  }
  if (r.center.family != Family::A || r.corank != 1) {
    r.note = "organizing centre " + to_string(r.center) + " is outside the versal catalogue";
    return r;
  }
  const int k = r.center.k;
  // d/dmu_i of the reduced family at mu = 0, coefficients of x^1 .. x^{k-1}
  Matrix m = Matrix::Zero(k - 1, l);
  for (int i = 0; i < l; ++i)
    for (int j = 1; j < k; ++j) {
      MultiIndex e(l + 1, 0);
      e[i] = 1;
      e[l] = j;
      if (1 + j <= fs.reduced_family.degree()) m(j - 1, i) = fs.reduced_family.coeff(e);
    }
  if (m.size() > 0) {
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& s = svd.singularValues();
    const double scale = std::max(1.0, s.size() ? s[0] : 0.0);
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] > 1e-6 * scale) ++r.effective_rank;
  }
  r.versal = r.effective_rank == k - 1;
  if (!r.versal)
    r.note = "effective parameter rank " + std::to_string(r.effective_rank) + " below codimension " +
             std::to_string(k - 1);
  return r;
}

}  // namespace detail

/// Stable equivalence of unfoldings, decided within the versal A_k catalogue.
inline EquivalenceVerdict unfolding_equivalent(const GeneratingFamily& F, const GeneratingFamily& G,
                                               const ClassifyOptions& opt = {}) {
  EquivalenceVerdict v;
  detail::VersalRecognition rf, rg;
  try {
    rf = detail::recognize_versal(F, opt);
    rg = detail::recognize_versal(G, opt);
  } catch (const Error& e) {
    v.detail = e.what();
    return v;
  }
  v.witness_class = std::make_pair(rf.center, rg.center);
  if (!(rf.center == rg.center)) {
    // equivalent unfoldings have equivalent organizing centres
    v.reason = VerdictReason::ClassMismatch;
    v.detail = "organizing centres differ";
    return v;
  }
  if (!rf.versal || !rg.versal) {
    v.detail = !rf.versal ? rf.note : rg.note;
    return v;
  }
  v.equivalent = true;
  v.reason = VerdictReason::Equal;
  return v;
}

}  // namespace lgc
