#pragma once

// Truncated multivariate Taylor polynomials.
//
// Monomials are stored densely in graded-lex order: total degree ascending,
// and within one degree, exponent vectors in descending lexicographic order
// (1, x, y, x^2, xy, y^2, x^3, ...).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgc/error.hpp"
#include "lgc/linalg.hpp"

namespace lgc {

using MultiIndex = std::vector<int>;

inline constexpr double kCanonicalChop = 1e-12;

inline int total_degree(const MultiIndex& alpha) {
  int s = 0;
  for (int a : alpha) s += a;
  return s;
}

/// Enumeration of all monomials in n variables up to degree d, shared by every
/// jet with the same shape.
class MonomialBasis {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  static std::shared_ptr<const MonomialBasis> get(int nvars, int degree) {
    require(nvars >= 0 && degree >= 0, ErrorCode::InvalidInput, "negative jet shape");
    static std::mutex mutex;
    static std::map<std::pair<int, int>, std::shared_ptr<const MonomialBasis>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto& slot = cache[{nvars, degree}];
    if (!slot) slot = std::shared_ptr<const MonomialBasis>(new MonomialBasis(nvars, degree));
    return slot;
  }

  int nvars() const { return n_; }
  int degree() const { return d_; }
  std::size_t size() const { return exps_.size(); }
  const MultiIndex& exponents(std::size_t i) const { return exps_[i]; }
  int degree_of(std::size_t i) const { return deg_[i]; }

  /// First index of monomials of total degree m (m may equal degree()+1 for the end).
  std::size_t degree_begin(int m) const { return begin_[std::clamp(m, 0, d_ + 1)]; }

  /// Index of alpha, or npos if its total degree exceeds the truncation.
  std::size_t index(const MultiIndex& alpha) const {
    if (static_cast<int>(alpha.size()) != n_) return npos;
    int m = 0;
    for (int a : alpha) {
      if (a < 0) return npos;
      m += a;
    }
    if (m > d_) return npos;
    return begin_[m] + rank_within_degree(alpha, m);
  }

  /// Values of every monomial at x, in basis order.
  void evaluate_monomials(std::span<const double> x, std::vector<double>& out) const {
    out.resize(exps_.size());
    if (out.empty()) return;
    out[0] = 1.0;
    for (std::size_t i = 1; i < exps_.size(); ++i) out[i] = out[parent_[i]] * x[parent_var_[i]];
  }

  /// Index of alpha - e_v for the first v with alpha_v > 0 (npos for the constant).
  std::size_t parent(std::size_t i) const { return parent_[i]; }
  int parent_var(std::size_t i) const { return parent_var_[i]; }

  /// For monomial i: pairs (j, k) with exps(i) + exps(j) = exps(k) within the truncation.
  const std::vector<std::pair<std::uint32_t, std::uint32_t>>& products(std::size_t i) const {
    std::call_once(products_once_, [this] { build_products(); });
    return products_[i];
  }

 private:
  MonomialBasis(int nvars, int degree) : n_(nvars), d_(degree) {
    binom_.assign(d_ + n_ + 2, std::vector<std::size_t>(d_ + n_ + 2, 0));
    for (std::size_t a = 0; a < binom_.size(); ++a) {
      binom_[a][0] = 1;
      for (std::size_t b = 1; b <= a; ++b) binom_[a][b] = binom_[a - 1][b - 1] + binom_[a - 1][b];
    }
    begin_.assign(d_ + 2, 0);
    for (int m = 0; m <= d_; ++m) {
      begin_[m] = exps_.size();
      MultiIndex alpha(n_, 0);
      enumerate(alpha, 0, m);
    }
    begin_[d_ + 1] = exps_.size();
    deg_.resize(exps_.size());
    parent_.assign(exps_.size(), npos);
    parent_var_.assign(exps_.size(), -1);
    for (std::size_t i = 0; i < exps_.size(); ++i) {
      deg_[i] = total_degree(exps_[i]);
      for (int v = 0; v < n_; ++v) {
        if (exps_[i][v] > 0) {
          MultiIndex p = exps_[i];
          --p[v];
          parent_[i] = index(p);
          parent_var_[i] = v;
          break;
        }
      }
    }
  }

  void enumerate(MultiIndex& alpha, int pos, int remaining) {
    if (n_ == 0) {
      if (remaining == 0) exps_.push_back(alpha);
      return;
    }
    if (pos == n_ - 1) {
      alpha[pos] = remaining;
      exps_.push_back(alpha);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      alpha[pos] = e;
      enumerate(alpha, pos + 1, remaining - e);
    }
    alpha[pos] = 0;
  }

  // Number of compositions of m into k non-negative parts.
  std::size_t compositions(int m, int k) const {
    if (k == 0) return m == 0 ? 1 : 0;
    return binom_[m + k - 1][k - 1];
  }

  std::size_t rank_within_degree(const MultiIndex& alpha, int m) const {
    std::size_t r = 0;
    int rem = m;
    for (int v = 0; v + 1 < n_; ++v) {
      for (int e = rem; e > alpha[v]; --e) r += compositions(rem - e, n_ - v - 1);
      rem -= alpha[v];
    }
    return r;
  }

  void build_products() const {
    products_.resize(exps_.size());
    MultiIndex sum(n_);
    for (std::size_t i = 0; i < exps_.size(); ++i) {
      const std::size_t end = begin_[d_ - deg_[i] + 1];
      products_[i].reserve(end);
      for (std::size_t j = 0; j < end; ++j) {
        for (int v = 0; v < n_; ++v) sum[v] = exps_[i][v] + exps_[j][v];
        products_[i].emplace_back(static_cast<std::uint32_t>(j),
                                  static_cast<std::uint32_t>(index(sum)));
      }
    }
  }

  int n_;
  int d_;
  std::vector<MultiIndex> exps_;
  std::vector<int> deg_;
  std::vector<std::size_t> begin_;
  std::vector<std::size_t> parent_;
  std::vector<int> parent_var_;
  std::vector<std::vector<std::size_t>> binom_;
  mutable std::once_flag products_once_;
  mutable std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> products_;
};

/// A polynomial in nvars variables truncated at total degree `degree`.
class Jet {
 public:
  Jet() : Jet(0, 0) {}
  Jet(int nvars, int degree)
      : basis_(MonomialBasis::get(nvars, degree)), c_(basis_->size(), 0.0) {}

  static Jet constant(int nvars, int degree, double value) {
    Jet j(nvars, degree);
    j.c_[0] = value;
    j.canonicalize();
    return j;
  }

  static Jet variable(int nvars, int degree, int var) {
    require(var >= 0 && var < nvars, ErrorCode::InvalidInput, "variable index out of range");
    Jet j(nvars, degree);
    if (degree >= 1) j.c_[1 + var] = 1.0;
    return j;
  }

  static Jet from_terms(int nvars, int degree,
                        const std::vector<std::pair<MultiIndex, double>>& terms) {
    Jet j(nvars, degree);
    for (const auto& [alpha, c] : terms) j.add_term(alpha, c);
    j.canonicalize();
    return j;
  }

  int nvars() const { return basis_->nvars(); }
  int degree() const { return basis_->degree(); }
  const MonomialBasis& basis() const { return *basis_; }
  const std::shared_ptr<const MonomialBasis>& basis_ptr() const { return basis_; }
  std::span<const double> coefficients() const { return c_; }
  std::span<double> mutable_coefficients() { return c_; }
  double operator[](std::size_t i) const { return c_[i]; }

  double coeff(const MultiIndex& alpha) const {
    require(static_cast<int>(alpha.size()) == nvars(), ErrorCode::VarCountMismatch,
            "multi-index length differs from jet arity");
    const auto i = basis_->index(alpha);
    return i == MonomialBasis::npos ? 0.0 : c_[i];
  }

  /// Adds c * x^alpha; terms beyond the truncation are dropped.
  void add_term(const MultiIndex& alpha, double c) {
    require(static_cast<int>(alpha.size()) == nvars(), ErrorCode::VarCountMismatch,
            "multi-index length differs from jet arity");
    const auto i = basis_->index(alpha);
    if (i != MonomialBasis::npos) c_[i] += c;
  }

  void set_coeff(const MultiIndex& alpha, double c) {
    require(static_cast<int>(alpha.size()) == nvars(), ErrorCode::VarCountMismatch,
            "multi-index length differs from jet arity");
    const auto i = basis_->index(alpha);
    if (i != MonomialBasis::npos) c_[i] = c;
  }

  /// Nonzero terms in graded-lex order.
  std::vector<std::pair<MultiIndex, double>> terms() const {
    std::vector<std::pair<MultiIndex, double>> out;
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (c_[i] != 0.0) out.emplace_back(basis_->exponents(i), c_[i]);
    return out;
  }

  std::size_t term_count() const {
    return static_cast<std::size_t>(std::count_if(c_.begin(), c_.end(), [](double c) { return c != 0.0; }));
  }

  bool is_zero(double tol = 0.0) const {
    return std::all_of(c_.begin(), c_.end(), [tol](double c) { return std::abs(c) <= tol; });
  }

  double max_abs_coeff() const {
    double m = 0.0;
    for (double c : c_) m = std::max(m, std::abs(c));
    return m;
  }

  /// Lowest total degree carrying a nonzero coefficient, or -1 for the zero jet.
  int order(double tol = 0.0) const {
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (std::abs(c_[i]) > tol) return basis_->degree_of(i);
    return -1;
  }

  double constant_term() const { return c_[0]; }

  Vector gradient_at_zero() const {
    Vector g = Vector::Zero(nvars());
    if (degree() >= 1)
      for (int i = 0; i < nvars(); ++i) g[i] = c_[1 + i];
    return g;
  }

  Matrix hessian_at_zero() const {
    const int n = nvars();
    Matrix h = Matrix::Zero(n, n);
    if (degree() < 2) return h;
    for (std::size_t k = basis_->degree_begin(2); k < basis_->degree_begin(3); ++k) {
      const auto& a = basis_->exponents(k);
      int first = -1, second = -1;
      for (int v = 0; v < n; ++v) {
        if (a[v] == 2) first = second = v;
        if (a[v] == 1) (first < 0 ? first : second) = v;
      }
      if (first == second) {
        h(first, first) = 2.0 * c_[k];
      } else {
        h(first, second) = h(second, first) = c_[k];
      }
    }
    return h;
  }

  /// Same polynomial viewed at another truncation degree (drops or zero-extends).
  Jet with_degree(int degree) const {
    if (degree == this->degree()) return *this;
    Jet out(nvars(), degree);
    const std::size_t count = std::min(out.c_.size(), c_.size());
    std::copy_n(c_.begin(), count, out.c_.begin());
    return out;
  }

  /// Drops all terms of total degree above m, keeping the truncation degree.
  Jet truncated_above(int m) const {
    Jet out = *this;
    for (std::size_t i = basis_->degree_begin(m + 1); i < c_.size(); ++i) out.c_[i] = 0.0;
    return out;
  }

  Jet homogeneous_part(int m) const {
    Jet out(nvars(), degree());
    for (std::size_t i = basis_->degree_begin(m); i < basis_->degree_begin(m + 1); ++i) out.c_[i] = c_[i];
    return out;
  }

  double evaluate(std::span<const double> x) const {
    require(static_cast<int>(x.size()) == nvars(), ErrorCode::VarCountMismatch,
            "point dimension differs from jet arity");
    // monomial values via the parent chain
    std::vector<double> mono(c_.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) {
      mono[i] = i == 0 ? 1.0 : mono[basis_->parent(i)] * x[basis_->parent_var(i)];
      sum += c_[i] * mono[i];
    }
    return sum;
  }
  double evaluate(const Vector& x) const { return evaluate(std::span<const double>(x.data(), x.size())); }

  /// Value from precomputed monomial values of this jet's basis.
  double evaluate_monomials(const std::vector<double>& mono) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) sum += c_[i] * mono[i];
    return sum;
  }

  /// Zeroes coefficients with |c| < tol.
  Jet& chop(double tol) {
    for (double& c : c_)
      if (std::abs(c) < tol) c = 0.0;
    return *this;
  }
  Jet chopped(double tol) const {
    Jet out = *this;
    out.chop(tol);
    return out;
  }
  Jet& canonicalize() { return chop(kCanonicalChop); }

  Jet& operator+=(const Jet& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return canonicalize();
  }
  Jet& operator-=(const Jet& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return canonicalize();
  }
  Jet& operator*=(double s) {
    for (double& c : c_) c *= s;
    return canonicalize();
  }
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator-(Jet a) { return a *= -1.0; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    require(a.nvars() == b.nvars(), ErrorCode::VarCountMismatch, "jet product arity mismatch");
    const int d = std::min(a.degree(), b.degree());
    const Jet x = a.with_degree(d);
    const Jet y = b.with_degree(d);
    Jet out(a.nvars(), d);
    const auto& basis = *out.basis_;
    for (std::size_t i = 0; i < x.c_.size(); ++i) {
      const double ci = x.c_[i];
      if (ci == 0.0) continue;
      for (const auto& [j, k] : basis.products(i)) out.c_[k] += ci * y.c_[j];
    }
    return out.canonicalize();
  }

  friend bool operator==(const Jet& a, const Jet& b) {
    return a.nvars() == b.nvars() && a.degree() == b.degree() && a.c_ == b.c_;
  }

  std::string to_string(int precision = 6) const;

 private:
  void check_same_shape(const Jet& o) const {
    require(nvars() == o.nvars(), ErrorCode::VarCountMismatch, "jet arity mismatch");
    require(degree() == o.degree(), ErrorCode::DegreeMismatch, "jet truncation degree mismatch");
  }

  std::shared_ptr<const MonomialBasis> basis_;
  std::vector<double> c_;
};

inline Jet jet_mul(const Jet& a, const Jet& b) { return a * b; }

/// Largest coefficient-wise difference between two jets of the same arity
/// (compared at the smaller truncation degree).
inline double max_coeff_diff(const Jet& a, const Jet& b) {
  require(a.nvars() == b.nvars(), ErrorCode::VarCountMismatch, "jet arity mismatch");
  const int d = std::min(a.degree(), b.degree());
  const Jet x = a.with_degree(d), y = b.with_degree(d);
  double m = 0.0;
  for (std::size_t i = 0; i < x.coefficients().size(); ++i)
    m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline std::string Jet::to_string(int precision) const {
  static const char* names = "xyzuvw";
  std::string out;
  char buf[64];
  for (const auto& [alpha, c] : terms()) {
    std::snprintf(buf, sizeof buf, "%+.*g", precision, c);
    out += out.empty() ? std::string(buf) : " " + std::string(buf);
    for (int v = 0; v < nvars(); ++v) {
      if (alpha[v] == 0) continue;
      std::string name = nvars() <= 6 ? std::string(1, names[v]) : "x" + std::to_string(v + 1);
      out += "*" + name;
      if (alpha[v] > 1) out += "^" + std::to_string(alpha[v]);
    }
  }
  return out.empty() ? "0" : out;
}

namespace detail {

// f(g_1, ..., g_n) with arbitrary constant terms in g, truncated at degree d.
inline Jet substitute_impl(const Jet& f, std::span<const Jet> g, int m, int d) {
  const auto& fb = f.basis();
  std::vector<Jet> gd;
  gd.reserve(g.size());
  for (const auto& gi : g) gd.push_back(gi.with_degree(d));
  Jet out(m, d);
  // only monomials dividing some term of f are needed
  std::vector<char> needed(fb.size(), 0);
  for (std::size_t i = 0; i < fb.size(); ++i)
    if (f[i] != 0.0) needed[i] = 1;
  for (std::size_t i = fb.size(); i-- > 1;)
    if (needed[i]) needed[fb.parent(i)] = 1;
  std::vector<Jet> powers(fb.size());
  for (std::size_t i = 0; i < fb.size(); ++i) {
    if (!needed[i]) continue;
    if (i == 0) {
      powers[0] = Jet::constant(m, d, 1.0);
    } else {
      powers[i] = powers[fb.parent(i)] * gd[fb.parent_var(i)];
    }
    if (f[i] != 0.0) {
      auto oc = out.mutable_coefficients();
      const auto pc = powers[i].coefficients();
      for (std::size_t k = 0; k < oc.size(); ++k) oc[k] += f[i] * pc[k];
    }
  }
  return out.canonicalize();
}

}  // namespace detail

/// Taylor expansion of f o g truncated at min(f.degree, g.degree); g must fix the origin.
inline Jet jet_compose(const Jet& f, std::span<const Jet> g) {
  require(static_cast<int>(g.size()) == f.nvars(), ErrorCode::VarCountMismatch,
          "composition arity mismatch");
  if (g.empty()) return f;  // constant in zero variables
  const int m = g[0].nvars();
  int d = f.degree();
  for (const auto& gi : g) {
    require(gi.nvars() == m, ErrorCode::VarCountMismatch, "inner jets differ in arity");
    require(gi.constant_term() == 0.0, ErrorCode::NonZeroConstant,
            "inner jet has a nonzero constant term");
    d = std::min(d, gi.degree());
  }
  return detail::substitute_impl(f, g, m, d);
}
inline Jet jet_compose(const Jet& f, const std::vector<Jet>& g) {
  return jet_compose(f, std::span<const Jet>(g));
}

/// Polynomial substitution f(g) with no constraint on constant terms. Exact as
/// a polynomial identity only when f is a polynomial of degree <= f.degree.
inline Jet jet_substitute(const Jet& f, std::span<const Jet> g, int nvars_out, int degree_out) {
  require(static_cast<int>(g.size()) == f.nvars(), ErrorCode::VarCountMismatch,
          "substitution arity mismatch");
  for (const auto& gi : g)
    require(gi.nvars() == nvars_out, ErrorCode::VarCountMismatch, "inner jets differ in arity");
  return detail::substitute_impl(f, g, nvars_out, degree_out);
}

/// Partial derivative in variable `var`, truncated at degree - 1.
inline Jet jet_derivative(const Jet& f, int var) {
  require(var >= 0 && var < f.nvars(), ErrorCode::InvalidInput, "variable index out of range");
  const int d = std::max(f.degree() - 1, 0);
  Jet out(f.nvars(), d);
  const auto& b = f.basis();
  MultiIndex beta;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (f[i] == 0.0 || b.exponents(i)[var] == 0) continue;
    beta = b.exponents(i);
    const int e = beta[var]--;
    out.add_term(beta, f[i] * e);
  }
  return out.canonicalize();
}

inline std::vector<Jet> jet_gradient(const Jet& f) {
  std::vector<Jet> g;
  g.reserve(f.nvars());
  for (int i = 0; i < f.nvars(); ++i) g.push_back(jet_derivative(f, i));
  return g;
}

/// Re-expresses f in a larger variable set: variable i of f becomes variable
/// var_map[i] of the result.
inline Jet jet_embed(const Jet& f, int nvars_out, std::span<const int> var_map) {
  require(static_cast<int>(var_map.size()) == f.nvars(), ErrorCode::VarCountMismatch,
          "embedding map arity mismatch");
  Jet out(nvars_out, f.degree());
  MultiIndex beta(nvars_out);
  for (const auto& [alpha, c] : f.terms()) {
    std::fill(beta.begin(), beta.end(), 0);
    for (int i = 0; i < f.nvars(); ++i) beta[var_map[i]] += alpha[i];
    out.add_term(beta, c);
  }
  return out.canonicalize();
}

/// Keeps only the variables in `keep` (in that order), setting the others to zero.
inline Jet jet_restrict(const Jet& f, std::span<const int> keep) {
  Jet out(static_cast<int>(keep.size()), f.degree());
  std::vector<int> pos(f.nvars(), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) pos[keep[k]] = static_cast<int>(k);
  MultiIndex beta(keep.size());
  for (const auto& [alpha, c] : f.terms()) {
    bool ok = true;
    std::fill(beta.begin(), beta.end(), 0);
    for (int v = 0; v < f.nvars() && ok; ++v) {
      if (alpha[v] == 0) continue;
      if (pos[v] < 0) ok = false;
      else beta[pos[v]] = alpha[v];
    }
    if (ok) out.add_term(beta, c);
  }
  return out.canonicalize();
}

/// Invertible jet map fixing the origin; components[i] is the i-th output coordinate.
class CoordinateChange {
 public:
  CoordinateChange() = default;

  explicit CoordinateChange(std::vector<Jet> components, double rank_tol = 1e-8)
      : components_(std::move(components)) {
    const int n = static_cast<int>(components_.size());
    for (const auto& c : components_) {
      require(c.nvars() == n, ErrorCode::VarCountMismatch, "coordinate change must be square");
      require(c.degree() == components_[0].degree(), ErrorCode::DegreeMismatch,
              "coordinate change components differ in degree");
      require(c.constant_term() == 0.0, ErrorCode::NonZeroConstant,
              "coordinate change must fix the origin");
    }
    linear_ = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) linear_.row(i) = components_[i].gradient_at_zero().transpose();
    if (n > 0) {
      Eigen::JacobiSVD<Matrix> svd(linear_);
      const auto& s = svd.singularValues();
      require(s[0] > 0.0 && s[n - 1] >= rank_tol * std::max(1.0, s[0]), ErrorCode::SingularLinearPart,
              "linear part of coordinate change is singular");
    }
  }

  static CoordinateChange identity(int n, int degree) {
    std::vector<Jet> c;
    for (int i = 0; i < n; ++i) c.push_back(Jet::variable(n, degree, i));
    return CoordinateChange(std::move(c));
  }

  static CoordinateChange linear(const Matrix& a, int degree) {
    const int n = static_cast<int>(a.rows());
    require(a.cols() == n, ErrorCode::DimensionMismatch, "linear change must be square");
    std::vector<Jet> c;
    for (int i = 0; i < n; ++i) {
      Jet j(n, degree);
      if (degree >= 1)
        for (int k = 0; k < n; ++k) j.mutable_coefficients()[1 + k] = a(i, k);
      c.push_back(j.canonicalize());
    }
    return CoordinateChange(std::move(c));
  }

  int nvars() const { return static_cast<int>(components_.size()); }
  int degree() const { return components_.empty() ? 0 : components_[0].degree(); }
  const std::vector<Jet>& components() const { return components_; }
  const Jet& operator[](int i) const { return components_[i]; }
  const Matrix& linear_part() const { return linear_; }

  Vector evaluate(const Vector& x) const {
    Vector y(nvars());
    for (int i = 0; i < nvars(); ++i) y[i] = components_[i].evaluate(x);
    return y;
  }

  /// Jacobian of the truncated polynomial map at x.
  Matrix jacobian(const Vector& x) const {
    const int n = nvars();
    Matrix j(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) j(i, k) = jet_derivative(components_[i], k).evaluate(x);
    return j;
  }

 private:
  std::vector<Jet> components_;
  Matrix linear_;
};

inline Jet jet_compose(const Jet& f, const CoordinateChange& h) { return jet_compose(f, h.components()); }

/// (outer o inner)(x) = outer(inner(x)).
inline CoordinateChange compose_changes(const CoordinateChange& outer, const CoordinateChange& inner) {
  require(outer.nvars() == inner.nvars(), ErrorCode::VarCountMismatch, "change arity mismatch");
  std::vector<Jet> c;
  for (const auto& o : outer.components()) c.push_back(jet_compose(o, inner.components()));
  return CoordinateChange(std::move(c));
}

/// Compositional inverse up to the truncation degree, by fixed-point iteration
/// x <- A^{-1}(y - N(x)) where h = A x + N(x).
inline CoordinateChange jet_inverse(const CoordinateChange& h) {
  const int n = h.nvars();
  const int d = h.degree();
  if (n == 0) return h;
  const Matrix ainv = h.linear_part().inverse();
  std::vector<Jet> nonlinear;
  for (const auto& c : h.components()) {
    Jet nl = c;
    for (int k = 0; k < n && d >= 1; ++k) nl.mutable_coefficients()[1 + k] = 0.0;
    nonlinear.push_back(nl);
  }
  std::vector<Jet> x = CoordinateChange::linear(ainv, d).components();
  for (int iter = 1; iter < d; ++iter) {
    std::vector<Jet> rhs;
    for (int i = 0; i < n; ++i) rhs.push_back(Jet::variable(n, d, i) - jet_compose(nonlinear[i], x));
    std::vector<Jet> next;
    for (int i = 0; i < n; ++i) {
      Jet s(n, d);
      for (int k = 0; k < n; ++k)
        if (ainv(i, k) != 0.0) s += ainv(i, k) * rhs[k];
      next.push_back(s);
    }
    x = std::move(next);
  }
  return CoordinateChange(std::move(x));
}

// ---------------------------------------------------------------------------
// Finite-difference jets

namespace detail {

/// Fornberg weights for the derivative of order `order` at 0 on the given nodes.
inline std::vector<double> fornberg_weights(const std::vector<double>& nodes, int order) {
  const int n = static_cast<int>(nodes.size()) - 1;
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(order + 1, 0.0));
  double c1 = 1.0, c4 = nodes[0];
  c[0][0] = 1.0;
  for (int i = 1; i <= n; ++i) {
    const int mn = std::min(i, order);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i];
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n + 1);
  for (int i = 0; i <= n; ++i) w[i] = c[i][order];
  return w;
}

/// Central stencil for the k-th derivative: offsets -p..p with p = floor((k+1)/2), at least 1 for k>0.
struct Stencil {
  int half = 0;
  std::vector<double> weights;  // index offset + half
};

inline const Stencil& central_stencil(int order) {
  static std::mutex mutex;
  static std::map<int, Stencil> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;
  Stencil s;
  s.half = order == 0 ? 0 : (order + 1) / 2;
  std::vector<double> nodes;
  for (int j = -s.half; j <= s.half; ++j) nodes.push_back(j);
  s.weights = order == 0 ? std::vector<double>{1.0} : fornberg_weights(nodes, order);
  return cache.emplace(order, std::move(s)).first->second;
}

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

class CachedOracle {
 public:
  CachedOracle(const std::function<double(std::span<const double>)>& f, int n) : f_(f), n_(n) {}

  double operator()(double h, const std::vector<int>& offsets) {
    auto key = std::make_pair(h, offsets);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<double> x(n_);
    for (int i = 0; i < n_; ++i) x[i] = h * offsets[i];
    const double v = f_(x);
    cache_.emplace(std::move(key), v);
    return v;
  }

 private:
  const std::function<double(std::span<const double>)>& f_;
  int n_;
  std::map<std::pair<double, std::vector<int>>, double> cache_;
};

inline double mixed_partial(CachedOracle& oracle, const MultiIndex& alpha, double h) {
  const int n = static_cast<int>(alpha.size());
  std::vector<const Stencil*> st(n);
  for (int i = 0; i < n; ++i) st[i] = &central_stencil(alpha[i]);
  std::vector<int> off(n);
  for (int i = 0; i < n; ++i) off[i] = -st[i]->half;
  double sum = 0.0;
  while (true) {
    double w = 1.0;
    for (int i = 0; i < n; ++i) w *= st[i]->weights[off[i] + st[i]->half];
    if (w != 0.0) sum += w * oracle(h, off);
    int i = 0;
    for (; i < n; ++i) {
      if (off[i] < st[i]->half) {
        ++off[i];
        break;
      }
      off[i] = -st[i]->half;
    }
    if (i == n) break;
  }
  return sum / std::pow(h, total_degree(alpha));
}

}  // namespace detail

using Evaluator = std::function<double(std::span<const double>)>;

/// Taylor jet of a sampled function from central differences, with one
/// Richardson step (h, h/2). steps[m] is the base step for coefficients of
/// total degree m (the last entry is reused for higher degrees).
inline Jet jet_from_oracle(const Evaluator& evaluator, int nvars, int degree,
                           const std::vector<double>& steps) {
  require(!steps.empty(), ErrorCode::InvalidInput, "at least one step is required");
  for (double s : steps) require(s > 0.0, ErrorCode::InvalidInput, "step must be positive");
  detail::CachedOracle oracle(evaluator, nvars);
  Jet out(nvars, degree);
  const auto& b = out.basis();
  auto coeffs = out.mutable_coefficients();
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto& alpha = b.exponents(i);
    const int m = b.degree_of(i);
    const double h = steps[std::min<std::size_t>(m, steps.size() - 1)];
    double d;
    if (m == 0) {
      d = oracle(h, std::vector<int>(nvars, 0));
    } else {
      const double coarse = detail::mixed_partial(oracle, alpha, h);
      const double fine = detail::mixed_partial(oracle, alpha, 0.5 * h);
      d = (4.0 * fine - coarse) / 3.0;
    }
    double denom = 1.0;
    for (int a : alpha) denom *= detail::factorial(a);
    coeffs[i] = d / denom;
  }
  return out.canonicalize();
}

inline Jet jet_from_oracle(const Evaluator& evaluator, int nvars, int degree, double step) {
  return jet_from_oracle(evaluator, nvars, degree, std::vector<double>{step});
}

}  // namespace lgc
