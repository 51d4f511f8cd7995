#pragma once

// Recognition of simple (ADE) singularity classes of critical jets and the
// equivalence decisions built on them.

#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "lgc/jets.hpp"
#include "lgc/splitting.hpp"

namespace lgc {

enum class Family { Morse, A, D, E };

struct SingularityClass {
  Family family = Family::Morse;
  int k = 0;
  int sign = 0;  // +1, -1, or 0 when not recorded

  int corank() const {
    switch (family) {
      case Family::Morse: return 0;
      case Family::A: return 1;
      default: return 2;
    }
  }
  int milnor() const { return family == Family::Morse ? 1 : k; }

  friend bool operator==(const SingularityClass&, const SingularityClass&) = default;
};

inline SingularityClass morse_class() { return {Family::Morse, 1, 0}; }

inline std::string to_string(const SingularityClass& c) {
  std::string s;
  switch (c.family) {
    case Family::Morse: return "Morse";
    case Family::A: s = "A"; break;
    case Family::D: s = "D"; break;
    case Family::E: s = "E"; break;
  }
  s += std::to_string(c.k);
  if (c.sign > 0) s += "+";
  if (c.sign < 0) s += "-";
  return s;
}

inline SingularityClass parse_class(const std::string& label) {
  if (label == "Morse") return morse_class();
  auto bad = [&] { return Error(ErrorCode::ParseError, "invalid class label '" + label + "'"); };
  if (label.size() < 2) throw bad();
  SingularityClass c;
  switch (label[0]) {
    case 'A': c.family = Family::A; break;
    case 'D': c.family = Family::D; break;
    case 'E': c.family = Family::E; break;
    default: throw bad();
  }
  std::size_t pos = 1;
  while (pos < label.size() && std::isdigit(static_cast<unsigned char>(label[pos]))) ++pos;
  if (pos == 1 || pos - 1 > 2) throw bad();
  c.k = std::stoi(label.substr(1, pos - 1));
  if (pos < label.size()) {
    if (pos + 1 != label.size()) throw bad();
    if (label[pos] == '+') c.sign = 1;
    else if (label[pos] == '-') c.sign = -1;
    else throw bad();
  }
  const bool valid = (c.family == Family::A && c.k >= 2) || (c.family == Family::D && c.k >= 4) ||
                     (c.family == Family::E && c.k >= 6 && c.k <= 8);
  if (!valid) throw bad();
  if (c.sign != 0 && c.family == Family::A && c.k % 2 == 0) throw bad();
  if (c.sign != 0 && c.family == Family::E && c.k != 6) throw bad();
  return c;
}

/// Classification could not decide: the germ is not simple, or the jet degree
/// or numerical resolution is insufficient.
class Indeterminate : public Error {
 public:
  explicit Indeterminate(const std::string& why) : Error(ErrorCode::Indeterminate, why) {}
};

struct ClassifyOptions {
  SplitOptions split{};
  /// A reduced coefficient is zero below zero_tol and nonzero above ambiguous_tol.
  double zero_tol = 1e-9;
  double ambiguous_tol = 1e-7;
  /// Binary-cubic discriminant on max-normalized coefficients.
  double disc_zero = 1e-9;
  double disc_ambiguous = 1e-6;
  /// Hessian covariant below this (normalized) means the cubic is a perfect cube.
  double cube_tol = 1e-6;
  int max_rounds = 10;
};

namespace detail {

// Returns +1 / -1 for a decidedly nonzero value, 0 for zero; throws in the band.
inline int decide_sign(double c, double zero_tol, double ambiguous_tol, const char* what) {
  const double a = std::abs(c);
  if (a < zero_tol) return 0;
  if (a < ambiguous_tol) throw Indeterminate(std::string("coefficient of ") + what + " is within the ambiguity band");
  return c > 0 ? 1 : -1;
}

inline SingularityClass classify_corank1(const Jet& r, const ClassifyOptions& opt) {
  for (int m = 3; m <= r.degree(); ++m) {
    const double c = r.coeff({m});
    const int s = decide_sign(c, opt.zero_tol, opt.ambiguous_tol, "x^m");
    if (s == 0) continue;
    if (m - 1 > 6) throw Indeterminate("A_k with k > 6 is not supported");
    return {Family::A, m - 1, m % 2 == 0 ? s : 0};
  }
  throw Indeterminate("reduced corank-1 jet vanishes to its truncation degree");
}

// Applies the linear map (x, y) = M (X, Y) to a two-variable jet.
inline Jet linear_substitute(const Jet& f, const Matrix& m) {
  return jet_compose(f, CoordinateChange::linear(m, f.degree()));
}

inline void pin_cubic(Jet& f, double a, double b, double c, double d) {
  f.set_coeff({3, 0}, a);
  f.set_coeff({2, 1}, b);
  f.set_coeff({1, 2}, c);
  f.set_coeff({0, 3}, d);
}

inline SingularityClass classify_d_series(Jet f, const ClassifyOptions& opt) {
  // f has cubic part exactly x^2 y
  const int d = f.degree();
  int rounds = 0;
  for (int m = 4; m <= d; ++m) {
    if (++rounds > opt.max_rounds) throw Indeterminate("normal-form reduction stalled");
    std::vector<Jet> sub = {Jet::variable(2, d, 0), Jet::variable(2, d, 1)};
    bool any = false;
    for (int a = m; a >= 1; --a) {
      const int b = m - a;
      const double c = f.coeff({a, b});
      if (c == 0.0) continue;
      if (a >= 2) {
        sub[1].add_term({a - 2, b}, -c);
      } else {
        sub[0].add_term({0, b - 1}, -c / 2.0);
      }
      any = true;
    }
    if (any) {
      for (auto& s : sub) s.canonicalize();
      f = jet_compose(f, sub);
      if (opt.split.chop > 0) f.chop(opt.split.chop);
    }
    const int s = decide_sign(f.coeff({0, m}), opt.zero_tol, opt.ambiguous_tol, "y^m");
    if (s != 0) {
      if (m + 1 > 6) throw Indeterminate("D_k with k > 6 is not supported");
      return {Family::D, m + 1, s};
    }
  }
  throw Indeterminate("D-series reduction needs a higher jet degree");
}

inline SingularityClass classify_e_series(Jet f, const ClassifyOptions& opt) {
  // f has cubic part exactly x^3
  const int d = f.degree();
  int rounds = 0;
  for (int m = 4; m <= std::min(d, 5); ++m) {
    if (++rounds > opt.max_rounds) throw Indeterminate("normal-form reduction stalled");
    std::vector<Jet> sub = {Jet::variable(2, d, 0), Jet::variable(2, d, 1)};
    bool any = false;
    for (int a = m; a >= 2; --a) {
      const double c = f.coeff({a, m - a});
      if (c == 0.0) continue;
      sub[0].add_term({a - 2, m - a}, -c / 3.0);
      any = true;
    }
    if (any) {
      for (auto& s : sub) s.canonicalize();
      f = jet_compose(f, sub);
      if (opt.split.chop > 0) f.chop(opt.split.chop);
    }
    if (m == 4) {
      const int s = decide_sign(f.coeff({0, 4}), opt.zero_tol, opt.ambiguous_tol, "y^4");
      if (s != 0) return {Family::E, 6, s};
      if (decide_sign(f.coeff({1, 3}), opt.zero_tol, opt.ambiguous_tol, "x y^3") != 0)
        return {Family::E, 7, 0};
    } else {
      if (decide_sign(f.coeff({0, 5}), opt.zero_tol, opt.ambiguous_tol, "y^5") != 0)
        return {Family::E, 8, 0};
      throw Indeterminate("cube with vanishing y^4, x y^3, y^5 terms is not simple");
    }
  }
  throw Indeterminate("E-series reduction needs a higher jet degree");
}

inline SingularityClass classify_corank2(const Jet& r, const ClassifyOptions& opt) {
  if (r.degree() < 3) throw Indeterminate("jet degree too low for a corank-2 germ");
  double a = r.coeff({3, 0}), b = r.coeff({2, 1}), c = r.coeff({1, 2}), d = r.coeff({0, 3});
  const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
  if (scale < opt.zero_tol) throw Indeterminate("cubic part of the reduced jet vanishes");
  if (scale < opt.ambiguous_tol) throw Indeterminate("cubic part is within the ambiguity band");
  a /= scale, b /= scale, c /= scale, d /= scale;
  const double disc = b * b * c * c - 4 * a * c * c * c - 4 * b * b * b * d - 27 * a * a * d * d + 18 * a * b * c * d;
  if (std::abs(disc) >= opt.disc_ambiguous) return {Family::D, 4, disc > 0 ? -1 : 1};
  if (std::abs(disc) >= opt.disc_zero) throw Indeterminate("cubic discriminant is within the ambiguity band");

  // Hessian covariant; proportional to the square of the repeated factor
  const double ha = b * b - 3 * a * c, hb = b * c - 9 * a * d, hc = c * c - 3 * b * d;
  const bool cube = std::max({std::abs(ha), std::abs(hb), std::abs(hc)}) < opt.cube_tol;

  if (!cube) {
    Matrix q(2, 2);
    q << ha, hb / 2, hb / 2, hc;
    Eigen::SelfAdjointEigenSolver<Matrix> es(q);
    const int top = std::abs(es.eigenvalues()[0]) > std::abs(es.eigenvalues()[1]) ? 0 : 1;
    const Vector u = es.eigenvectors().col(top);  // repeated factor is u . (x, y)
    Matrix rot(2, 2);
    rot << u[0], -u[1], u[1], u[0];  // (x, y) = X u + Y v
    Jet f = linear_substitute(r, rot);
    const double p = f.coeff({3, 0}), s = f.coeff({2, 1});
    if (std::abs(s) < 1e-12) throw Indeterminate("degenerate repeated-root cubic");
    // X^2 (p X + s Y): shear Y -> Y - (p/s) X, then scale both axes by s^(-1/3)
    const double t = 1.0 / std::cbrt(s);
    Matrix fix(2, 2);
    fix << t, 0, -p / s * t, t;
    f = linear_substitute(f, fix);
    pin_cubic(f, 0, 1, 0, 0);
    f.canonicalize();
    return classify_d_series(f, opt);
  }

  // perfect cube (alpha x + beta y)^3: rotate so the cube lies along X
  Vector u(2);
  const double ca = std::cbrt(a), cd = std::cbrt(d);
  if (std::abs(a) >= std::abs(d)) {
    u << ca, b / (3 * ca * ca);
  } else {
    u << c / (3 * cd * cd), cd;
  }
  const double len = u.norm();
  u /= len;
  Matrix rot(2, 2);
  rot << u[0], -u[1], u[1], u[0];
  Jet f = linear_substitute(r, rot);
  const double k = f.coeff({3, 0});
  Matrix fix(2, 2);
  fix << 1 / std::cbrt(k), 0, 0, 1;
  f = linear_substitute(f, fix);
  pin_cubic(f, 1, 0, 0, 0);
  f.canonicalize();
  return classify_e_series(f, opt);
}

}  // namespace detail

/// Stable right-equivalence class of a critical jet.
inline SingularityClass classify(const Jet& f, const ClassifyOptions& opt = {}) {
  const MorseSplit s = split(f, opt.split);
  switch (s.corank()) {
    case 0: return morse_class();
    case 1: return detail::classify_corank1(s.reduced, opt);
    case 2: return detail::classify_corank2(s.reduced, opt);
    default: throw Indeterminate("corank >= 3 is not supported");
  }
}

enum class VerdictReason { ClassMismatch, SignatureMismatch, VarCountMismatch, Equal, Indeterminate };

inline const char* to_string(VerdictReason r) {
  switch (r) {
    case VerdictReason::ClassMismatch: return "ClassMismatch";
    case VerdictReason::SignatureMismatch: return "SignatureMismatch";
    case VerdictReason::VarCountMismatch: return "VarCountMismatch";
    case VerdictReason::Equal: return "Equal";
    case VerdictReason::Indeterminate: return "Indeterminate";
  }
  return "?";
}

struct EquivalenceVerdict {
  bool equivalent = false;
  std::optional<std::pair<SingularityClass, SingularityClass>> witness_class;
  VerdictReason reason = VerdictReason::Indeterminate;
  std::string detail;
};

namespace detail {

inline std::optional<SingularityClass> try_classify(const Jet& f, const ClassifyOptions& opt, std::string& why) {
  try {
    return classify(f, opt);
  } catch (const Indeterminate& e) {
    why = e.what();
  } catch (const RankAmbiguity& e) {
    why = e.what();
  }
  return std::nullopt;
}

}  // namespace detail

inline EquivalenceVerdict stably_right_equivalent(const Jet& f, const Jet& g, const ClassifyOptions& opt = {}) {
  EquivalenceVerdict v;
  auto cf = detail::try_classify(f, opt, v.detail);
  auto cg = detail::try_classify(g, opt, v.detail);
  if (!cf || !cg) return v;
  v.witness_class = std::make_pair(*cf, *cg);
  v.equivalent = *cf == *cg;
  v.reason = v.equivalent ? VerdictReason::Equal : VerdictReason::ClassMismatch;
  return v;
}

inline EquivalenceVerdict right_equivalent_same_vars(const Jet& f, const Jet& g, const ClassifyOptions& opt = {}) {
  EquivalenceVerdict v;
  if (f.nvars() != g.nvars()) {
    v.reason = VerdictReason::VarCountMismatch;
    v.detail = "jets have different variable counts";
    return v;
  }
  v = stably_right_equivalent(f, g, opt);
  if (!v.equivalent) return v;
  const auto sf = split(f, opt.split).signature;
  const auto sg = split(g, opt.split).signature;
  if (!(sf == sg)) {
    v.equivalent = false;
    v.reason = VerdictReason::SignatureMismatch;
    v.detail = "Hessian signatures (" + std::to_string(sf.plus) + "," + std::to_string(sf.minus) + ") vs (" +
               std::to_string(sg.plus) + "," + std::to_string(sg.minus) + ")";
  }
  return v;
}

}  // namespace lgc
