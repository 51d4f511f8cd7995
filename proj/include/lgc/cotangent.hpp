#pragma once

// Changes of cotangent-bundle structure, the homotopy construction of right
// equivalences, graphicality in a changed structure, and cotangent lifts.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgc/jets.hpp"
#include "lgc/linalg.hpp"
#include "lgc/parallel.hpp"
#include "lgc/splitting.hpp"

namespace lgc {

enum class BlockProfile { Full, ZeroH22 };

inline const char* to_string(BlockProfile p) { return p == BlockProfile::Full ? "Full" : "ZeroH22"; }

/// H(x, xi) = sum_ij h_ij(x, xi) xi_i xi_j with symmetric h; jets in (x, xi).
class StructureChange {
 public:
  StructureChange() = default;

  StructureChange(std::vector<std::vector<Jet>> h, BlockProfile profile = BlockProfile::Full, int upper_block = 0)
      : h_(std::move(h)), profile_(profile), upper_(upper_block) {
    const int n = static_cast<int>(h_.size());
    for (int i = 0; i < n; ++i) {
      require(static_cast<int>(h_[i].size()) == n, ErrorCode::DimensionMismatch, "h matrix must be square");
      for (int j = 0; j < n; ++j) {
        require(h_[i][j].nvars() == 2 * n, ErrorCode::DimensionMismatch, "h entries must be jets in (x, xi)");
        require(h_[i][j].degree() == h_[0][0].degree(), ErrorCode::DegreeMismatch, "h entries differ in degree");
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < i; ++j)
        require(h_[i][j] == h_[j][i], ErrorCode::InvalidInput, "h matrix is not symmetric");
    if (profile_ == BlockProfile::ZeroH22) {
      require(upper_ >= 0 && upper_ <= n, ErrorCode::InvalidInput, "upper block size out of range");
      for (int i = upper_; i < n; ++i)
        for (int j = upper_; j < n; ++j)
          require(h_[i][j].is_zero(), ErrorCode::InvalidInput, "lower-right block must vanish for ZeroH22");
    }
  }

  static StructureChange zero(int n, int degree) {
    return StructureChange(std::vector<std::vector<Jet>>(n, std::vector<Jet>(n, Jet(2 * n, degree))));
  }

  /// Constant coefficients h_ij = c_ij.
  static StructureChange constant(const Matrix& c, int degree, BlockProfile profile = BlockProfile::Full,
                                  int upper_block = 0) {
    const int n = static_cast<int>(c.rows());
    std::vector<std::vector<Jet>> h(n, std::vector<Jet>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) h[i][j] = Jet::constant(2 * n, degree, c(i, j));
    return StructureChange(std::move(h), profile, upper_block);
  }

  int n() const { return static_cast<int>(h_.size()); }
  int degree() const { return h_.empty() ? 0 : h_[0][0].degree(); }
  const Jet& h(int i, int j) const { return h_[i][j]; }
  const std::vector<std::vector<Jet>>& matrix() const { return h_; }
  BlockProfile profile() const { return profile_; }
  int upper_block() const { return upper_; }

  Matrix at_origin() const {
    Matrix m(n(), n());
    for (int i = 0; i < n(); ++i)
      for (int j = 0; j < n(); ++j) m(i, j) = h_[i][j].constant_term();
    return m;
  }

  /// The function H as a single jet in (x, xi), truncated at degree() + 2.
  Jet hamiltonian() const {
    const int n2 = 2 * n();
    const int d = degree() + 2;
    Jet out(n2, d);
    for (int i = 0; i < n(); ++i)
      for (int j = 0; j < n(); ++j)
        out += h_[i][j].with_degree(d) * Jet::variable(n2, d, n() + i) * Jet::variable(n2, d, n() + j);
    return out;
  }

 private:
  std::vector<std::vector<Jet>> h_;
  BlockProfile profile_ = BlockProfile::Full;
  int upper_ = 0;
};

namespace detail {

// h_ij(x, grad phi(x)) as jets in x at phi's degree.
inline std::vector<std::vector<Jet>> h_along_graph(const Jet& phi, const StructureChange& H) {
  const int n = phi.nvars();
  const int d = phi.degree();
  std::vector<Jet> args;
  for (int i = 0; i < n; ++i) args.push_back(Jet::variable(n, d, i));
  for (const auto& g : jet_gradient(phi)) args.push_back(g.with_degree(d));
  std::vector<std::vector<Jet>> out(n, std::vector<Jet>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) out[i][j] = out[j][i] = jet_substitute(H.h(i, j), args, n, d);
  return out;
}

}  // namespace detail

/// Jet of x -> phi(x) + H(x, grad phi(x)); constant term preserved.
inline Jet transition_generating(const Jet& phi, const StructureChange& H) {
  require(phi.nvars() == H.n(), ErrorCode::DimensionMismatch, "structure change dimension differs from phi");
  const int n = phi.nvars();
  const int d = phi.degree();
  const auto hbar = detail::h_along_graph(phi, H);
  std::vector<Jet> grad;
  for (const auto& g : jet_gradient(phi)) grad.push_back(g.with_degree(d));
  Jet out = phi;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out += hbar[i][j] * grad[i] * grad[j];
  return out;
}

struct GraphicalityReport {
  bool graphical = false;
  Matrix b;        // quadratic block in split coordinates
  Matrix h22;      // lower block of H(0, grad phi(0)) in split coordinates
  Matrix b_prime;  // b + 4 b h22 b
  int corank = 0;
  bool used_input_coordinates = false;
};

/// Whether the Lagrangian graph(d phi) stays graphical after the structure change H,
/// decided by invertibility of B' = B + 4 B H22 B.
inline GraphicalityReport graphical_in_structure(const Jet& phi, const StructureChange& H,
                                                 const SplitOptions& opt = {}) {
  require(phi.nvars() == H.n(), ErrorCode::DimensionMismatch, "structure change dimension differs from phi");
  const int n = phi.nvars();
  const Matrix hess = phi.hessian_at_zero();
  const SymmetricSpectrum spec = decide_spectrum(hess, opt.rank);
  const int c = n - spec.rank();

  Matrix h0(n, n);
  {
    const auto hbar = detail::h_along_graph(phi, H);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) h0(i, j) = hbar[i][j].constant_term();
  }

  GraphicalityReport rep;
  rep.corank = c;
  // Already split: Hessian is block diag(0, 2B) with invertible B.
  const bool split_form = hess.topRows(c).isZero(0.0) && hess.leftCols(c).isZero(0.0);
  if (split_form) {
    rep.used_input_coordinates = true;
    rep.b = 0.5 * hess.bottomRightCorner(n - c, n - c);
    rep.h22 = h0.bottomRightCorner(n - c, n - c);
  } else {
    const MorseSplit s = split(phi, opt);
    const Matrix l = s.change.linear_part();
    const Matrix linv = l.inverse();
    const Matrix hy = linv * h0 * linv.transpose();
    rep.b = Matrix::Zero(n - c, n - c);
    for (int i = 0; i < s.signature.plus; ++i) rep.b(i, i) = 1.0;
    for (int i = s.signature.plus; i < n - c; ++i) rep.b(i, i) = -1.0;
    rep.h22 = hy.bottomRightCorner(n - c, n - c);
  }
  rep.b_prime = rep.b + 4.0 * rep.b * rep.h22 * rep.b;
  if (n - c == 0) {
    rep.graphical = true;
  } else {
    const SymmetricSpectrum bp = decide_spectrum(rep.b_prime, opt.rank);
    rep.graphical = bp.rank() == n - c;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Homotopy flow

struct SampleGrid {
  double radius = 0.1;
  /// Points per axis; 0 picks a size that keeps the grid near a few hundred points.
  int points_per_axis = 0;
  double dt = 1e-3;
  unsigned threads = 0;

  std::vector<Vector> points(int n) const {
    int m = points_per_axis;
    if (m <= 0) m = n <= 1 ? 21 : n == 2 ? 11 : n == 3 ? 7 : 5;
    std::vector<Vector> out;
    std::vector<int> idx(n, 0);
    while (true) {
      Vector x(n);
      for (int i = 0; i < n; ++i) x[i] = m == 1 ? 0.0 : -radius + 2.0 * radius * idx[i] / (m - 1);
      out.push_back(x);
      int i = 0;
      for (; i < n; ++i) {
        if (++idx[i] < m) break;
        idx[i] = 0;
      }
      if (i == n) break;
    }
    return out;
  }
};

enum class HomotopyCase { VanishingTwoJet, SplitWithZeroH22 };

struct HomotopyResult {
  HomotopyCase hypothesis = HomotopyCase::VanishingTwoJet;
  std::vector<Vector> grid;
  std::vector<Vector> image;  // f_1 at each grid point
  double residual = 0.0;      // max |psi_1(f_1(x)) - phi(x)|
  double origin_error = 0.0;  // |f_1(0)|
};

namespace detail {

// Pointwise evaluation of phi, its derivatives, and h along the graph.
class FlowField {
 public:
  FlowField(const Jet& phi, const StructureChange& H) : n_(phi.nvars()), phi_(phi) {
    const int d = phi.degree();
    for (int i = 0; i < n_; ++i) {
      grad_.push_back(jet_derivative(phi, i).with_degree(d));
      for (int j = 0; j < n_; ++j) hess_.push_back(jet_derivative(jet_derivative(phi, i), j).with_degree(d));
    }
    const int dh = H.degree();
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        h_.push_back(H.h(i, j));
        for (int v = 0; v < 2 * n_; ++v) dh_.push_back(jet_derivative(H.h(i, j), v).with_degree(dh));
      }
  }

  struct State {
    Vector grad;
    Matrix hess;
    Matrix hbar;
    std::vector<Matrix> dhbar;  // dhbar[l](i, j) = d hbar_ij / d x_l
  };

  State eval(const Vector& x) const {
    State s;
    std::vector<double> mono, monoh;
    phi_.basis().evaluate_monomials(std::span<const double>(x.data(), n_), mono);
    s.grad.resize(n_);
    s.hess.resize(n_, n_);
    for (int i = 0; i < n_; ++i) {
      s.grad[i] = grad_[i].evaluate_monomials(mono);
      for (int j = 0; j < n_; ++j) s.hess(i, j) = hess_[i * n_ + j].evaluate_monomials(mono);
    }
    std::vector<double> z(2 * n_);
    for (int i = 0; i < n_; ++i) z[i] = x[i], z[n_ + i] = s.grad[i];
    s.hbar.resize(n_, n_);
    s.dhbar.assign(n_, Matrix(n_, n_));
    if (h_.empty()) return s;
    h_[0].basis().evaluate_monomials(z, monoh);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        const std::size_t k = i * n_ + j;
        s.hbar(i, j) = h_[k].evaluate_monomials(monoh);
        for (int l = 0; l < n_; ++l) {
          // chain rule through xi = grad phi(x)
          double v = dh_[k * 2 * n_ + l].evaluate_monomials(monoh);
          for (int m = 0; m < n_; ++m) v += dh_[k * 2 * n_ + n_ + m].evaluate_monomials(monoh) * s.hess(m, l);
          s.dhbar[l](i, j) = v;
        }
      }
    return s;
  }

  double phi(const Vector& x) const { return phi_.evaluate(x); }

  double psi(const Vector& x, double t) const {
    const State s = eval(x);
    return phi_.evaluate(x) + t * s.grad.dot(s.hbar * s.grad);
  }

  Vector velocity(const Vector& x, double t) const {
    const State s = eval(x);
    Matrix b = Matrix::Identity(n_, n_);
    for (int l = 0; l < n_; ++l)
      for (int j = 0; j < n_; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n_; ++i) acc += s.dhbar[l](i, j) * s.grad[i] + 2.0 * s.hbar(i, j) * s.hess(i, l);
        b(l, j) += t * acc;
      }
    // B(t, 0) = I, so det B stays positive on the connected region around the
    // origin where the flow is defined; reaching det <= 0 means the sample left it.
    Eigen::PartialPivLU<Matrix> lu(b.transpose());
    const double det = lu.determinant();
    if (!(det > 1e-8))
      throw Error(ErrorCode::SingularFlow, "B(t, x) is singular on the sample grid; shrink the neighbourhood");
    return -lu.solve(s.hbar * s.grad);
  }

 private:
  int n_;
  Jet phi_;
  std::vector<Jet> grad_, hess_, h_, dh_;
};

inline HomotopyCase check_homotopy_hypotheses(const Jet& phi, const StructureChange& H) {
  const int n = phi.nvars();
  require(std::abs(phi.constant_term()) <= 1e-12, ErrorCode::HypothesisViolation, "phi(0) must vanish");
  require(phi.gradient_at_zero().cwiseAbs().maxCoeff() <= 1e-12, ErrorCode::HypothesisViolation,
          "phi must be critical at the origin");
  if (phi.hessian_at_zero().cwiseAbs().maxCoeff() <= 1e-12) return HomotopyCase::VanishingTwoJet;

  // split form g(x_bar) + x_under^T Q x_under with a matching zero lower block of H
  require(H.profile() == BlockProfile::ZeroH22, ErrorCode::HypothesisViolation,
          "phi has a nonzero 2-jet; H must have the ZeroH22 profile");
  const int k = H.upper_block();
  const auto& b = phi.basis();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (phi[i] == 0.0) continue;
    const auto& a = b.exponents(i);
    int upper = 0, lower = 0;
    for (int v = 0; v < n; ++v) (v < k ? upper : lower) += a[v];
    require(lower == 0 || (upper == 0 && lower == 2), ErrorCode::HypothesisViolation,
            "phi is not of the form g(x_bar) + x_under^T Q x_under for the block split of H");
    require(lower != 0 || upper >= 3, ErrorCode::HypothesisViolation, "the x_bar part must have vanishing 2-jet");
  }
  const Matrix q = phi.hessian_at_zero().bottomRightCorner(n - k, n - k);
  require(n - k == 0 || smallest_singular_ratio(q) > 1e-8, ErrorCode::HypothesisViolation,
          "quadratic block must be nondegenerate");
  return HomotopyCase::SplitWithZeroH22;
}

}  // namespace detail

/// Integrates the homotopy flow f_t with psi_t o f_t = phi (psi_t = phi + t H(x, grad phi))
/// over the sample grid by fixed-step RK4 and reports the residual of psi_1 o f_1 = phi.
inline HomotopyResult homotopy_equivalence(const Jet& phi, const StructureChange& H, const SampleGrid& grid = {}) {
  require(phi.nvars() == H.n(), ErrorCode::DimensionMismatch, "structure change dimension differs from phi");
  require(grid.dt > 0 && grid.radius > 0, ErrorCode::InvalidInput, "invalid sample grid");
  HomotopyResult out;
  out.hypothesis = detail::check_homotopy_hypotheses(phi, H);
  const detail::FlowField field(phi, H);
  out.grid = grid.points(phi.nvars());
  out.image.resize(out.grid.size());
  const int steps = static_cast<int>(std::lround(1.0 / grid.dt));
  const double h = 1.0 / steps;

  auto integrate = [&](const Vector& x0) {
    Vector x = x0;
    for (int s = 0; s < steps; ++s) {
      const double t = s * h;
      const Vector k1 = field.velocity(x, t);
      const Vector k2 = field.velocity(x + 0.5 * h * k1, t + 0.5 * h);
      const Vector k3 = field.velocity(x + 0.5 * h * k2, t + 0.5 * h);
      const Vector k4 = field.velocity(x + h * k3, t + h);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!x.allFinite()) throw Error(ErrorCode::SingularFlow, "homotopy flow left the finite range");
    }
    return x;
  };

  std::vector<double> res(out.grid.size());
  parallel_for(
      out.grid.size(),
      [&](std::size_t i) {
        out.image[i] = integrate(out.grid[i]);
        res[i] = std::abs(field.psi(out.image[i], 1.0) - field.phi(out.grid[i]));
      },
      grid.threads);
  for (double r : res) out.residual = std::max(out.residual, r);
  out.origin_error = integrate(Vector::Zero(phi.nvars())).norm();
  return out;
}

// ---------------------------------------------------------------------------
// Cotangent lifts

/// Lift of a base change h: (x, xi) -> (h^{-1}(x), Dh(h^{-1}(x))^T xi).
class CotangentLift {
 public:
  explicit CotangentLift(CoordinateChange h) : h_(std::move(h)), inverse_jet_(jet_inverse(h_)) {
    const int n = h_.nvars();
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) dh_.push_back(jet_derivative(h_[i], k));
  }

  const CoordinateChange& base_change() const { return h_; }
  int n() const { return h_.nvars(); }

  Matrix base_jacobian(const Vector& y) const {
    const int n = h_.nvars();
    Matrix j(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) j(i, k) = dh_[i * n + k].evaluate(y);
    return j;
  }

  /// h^{-1}(x) for the polynomial map h, by Newton from the jet inverse.
  Vector base_inverse(const Vector& x) const {
    Vector y = inverse_jet_.evaluate(x);
    for (int it = 0; it < 50; ++it) {
      const Vector r = h_.evaluate(y) - x;
      if (r.norm() <= 1e-15 * std::max(1.0, x.norm())) break;
      y -= base_jacobian(y).partialPivLu().solve(r);
    }
    return y;
  }

  std::pair<Vector, Vector> apply(const Vector& x, const Vector& xi) const {
    const Vector y = base_inverse(x);
    return {y, base_jacobian(y).transpose() * xi};
  }

  /// Jacobian of the lifted map at (x, xi), in (x, xi) ordering.
  Matrix jacobian(const Vector& x, const Vector& xi) const {
    const int n = h_.nvars();
    const Vector y = base_inverse(x);
    const Matrix dh = base_jacobian(y);
    const Matrix dy = dh.inverse();
    // d(eta_k)/dy_m = sum_i d^2 h_i / dy_k dy_m xi_i
    Matrix deta_dy(n, n);
    for (int k = 0; k < n; ++k)
      for (int m = 0; m < n; ++m) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += jet_derivative(dh_[i * n + k], m).evaluate(y) * xi[i];
        deta_dy(k, m) = acc;
      }
    Matrix j = Matrix::Zero(2 * n, 2 * n);
    j.topLeftCorner(n, n) = dy;
    j.bottomLeftCorner(n, n) = deta_dy * dy;
    j.bottomRightCorner(n, n) = dh.transpose();
    return j;
  }

 private:
  CoordinateChange h_;
  CoordinateChange inverse_jet_;
  std::vector<Jet> dh_;
};

inline CotangentLift cotangent_lift(const CoordinateChange& h) { return CotangentLift(h); }

struct SymmetryReport {
  bool invariant = false;
  double jet_error = 0.0;
  double graph_error = 0.0;
  std::string violation;
};

/// Checks phi o h = phi on jets and, if so, that the lift of h keeps sampled
/// points of graph(d phi) on the graph.
inline SymmetryReport check_symmetry_invariance(const Jet& phi, const CoordinateChange& h, double radius = 0.1,
                                                int samples_per_axis = 5) {
  SymmetryReport rep;
  if (phi.nvars() != h.nvars()) {
    rep.violation = "dimension mismatch";
    return rep;
  }
  const Jet pulled = jet_compose(phi, h);
  const Jet ref = phi.with_degree(pulled.degree());
  const auto& b = ref.basis();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double e = std::abs(pulled[i] - ref[i]);
    if (e > rep.jet_error) {
      rep.jet_error = e;
      if (e >= 1e-10) {
        rep.violation = "coefficient of monomial #" + std::to_string(i) + " differs by " + std::to_string(e);
      }
    }
  }
  if (rep.jet_error >= 1e-10) return rep;

  const CotangentLift lift(h);
  const auto grad = jet_gradient(phi);
  auto gradient_at = [&](const Vector& x) {
    Vector g(phi.nvars());
    for (int i = 0; i < phi.nvars(); ++i) g[i] = grad[i].evaluate(x);
    return g;
  };
  SampleGrid grid;
  grid.radius = radius;
  grid.points_per_axis = samples_per_axis;
  for (const auto& x : grid.points(phi.nvars())) {
    const auto [y, eta] = lift.apply(x, gradient_at(x));
    const double e = (eta - gradient_at(y)).cwiseAbs().maxCoeff();
    if (e > rep.graph_error) rep.graph_error = e;
  }
  rep.invariant = rep.graph_error < 1e-8;
  if (!rep.invariant) rep.violation = "lifted graph point leaves graph(d phi) by " + std::to_string(rep.graph_error);
  return rep;
}

}  // namespace lgc
