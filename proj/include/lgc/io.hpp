#pragma once

// JSON for jets, structure changes, contact problems and generating families;
// TOML system specs and CSV/JSON diagram output for the BVP tools.

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "lgc/bvp.hpp"
#include "lgc/classify.hpp"
#include "lgc/contact.hpp"
#include "lgc/cotangent.hpp"
#include "lgc/jets.hpp"

namespace lgc {

using json = nlohmann::json;

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, path + ": " + what);
}

inline const json& field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) parse_fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) parse_fail(path + "." + key, "missing");
  return *it;
}

inline int int_field(const json& j, const char* key, const std::string& path) {
  const json& v = field(j, key, path);
  if (!v.is_number_integer()) parse_fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) parse_fail(path, "expected a number");
  return v.get<double>();
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from(const json& j, const std::string& path) {
  if (!j.is_array()) parse_fail(path, "expected an array of numbers");
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline json matrix_json(const Matrix& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    a.push_back(row);
  }
  return a;
}

inline Matrix matrix_from(const json& j, const std::string& path) {
  if (!j.is_array()) parse_fail(path, "expected an array of rows");
  const int r = static_cast<int>(j.size());
  Matrix m(r, r == 0 ? 0 : static_cast<int>(j[0].size()));
  for (int i = 0; i < r; ++i) {
    const Vector row = vector_from(j[i], path + "[" + std::to_string(i) + "]");
    if (row.size() != m.cols()) parse_fail(path, "rows differ in length");
    m.row(i) = row.transpose();
  }
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Jets

/// {"nvars", "degree", "terms": [{"exps", "coef"}]} with nonzero terms in graded-lex order.
inline json jet_to_json(const Jet& f) {
  json terms = json::array();
  const auto& b = f.basis();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (f[i] == 0.0) continue;
    require(std::isfinite(f[i]), ErrorCode::InvalidInput, "jet has a non-finite coefficient");
    terms.push_back({{"exps", b.exponents(i)}, {"coef", f[i]}});
  }
  return {{"nvars", f.nvars()}, {"degree", f.degree()}, {"terms", terms}};
}

inline Jet jet_from_json(const json& j, const std::string& path = "jet") {
  const int n = detail::int_field(j, "nvars", path);
  const int d = detail::int_field(j, "degree", path);
  if (n < 0) detail::parse_fail(path + ".nvars", "must be >= 0");
  if (d < 0) detail::parse_fail(path + ".degree", "must be >= 0");
  const json& terms = detail::field(j, "terms", path);
  if (!terms.is_array()) detail::parse_fail(path + ".terms", "expected an array");
  Jet f(n, d);
  auto c = f.mutable_coefficients();
  std::vector<bool> seen(c.size(), false);
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const std::string tp = path + ".terms[" + std::to_string(t) + "]";
    const json& e = detail::field(terms[t], "exps", tp);
    if (!e.is_array() || static_cast<int>(e.size()) != n) detail::parse_fail(tp + ".exps", "expected nvars integers");
    MultiIndex a;
    for (const auto& x : e) {
      if (!x.is_number_integer() || x.get<int>() < 0) detail::parse_fail(tp + ".exps", "exponents must be integers >= 0");
      a.push_back(x.get<int>());
    }
    const std::size_t idx = f.basis().index(a);
    if (idx == MonomialBasis::npos) detail::parse_fail(tp + ".exps", "total degree exceeds the jet degree");
    if (seen[idx]) detail::parse_fail(tp + ".exps", "duplicate monomial");
    seen[idx] = true;
    const double coef = detail::number(detail::field(terms[t], "coef", tp), tp + ".coef");
    c[idx] = coef;
  }
  return f;
}

inline json class_to_json(const SingularityClass& c) {
  return {{"class", to_string(c)}, {"corank", c.corank()}, {"milnor", c.milnor()}};
}

// ---------------------------------------------------------------------------
// Structure changes, contact problems, families

inline json structure_change_to_json(const StructureChange& H) {
  json m = json::array();
  for (int i = 0; i < H.n(); ++i) {
    json row = json::array();
    for (int k = 0; k < H.n(); ++k) row.push_back(jet_to_json(H.h(i, k)));
    m.push_back(row);
  }
  json out{{"h_matrix", m}, {"block_profile", to_string(H.profile())}};
  if (H.profile() == BlockProfile::ZeroH22) out["upper_block"] = H.upper_block();
  return out;
}

inline StructureChange structure_change_from_json(const json& j, const std::string& path = "structure") {
  const json& m = detail::field(j, "h_matrix", path);
  if (!m.is_array()) detail::parse_fail(path + ".h_matrix", "expected an array of rows");
  std::vector<std::vector<Jet>> h;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i].is_array() || m[i].size() != m.size()) detail::parse_fail(path + ".h_matrix", "matrix must be square");
    std::vector<Jet> row;
    for (std::size_t k = 0; k < m.size(); ++k)
      row.push_back(jet_from_json(m[i][k], path + ".h_matrix[" + std::to_string(i) + "][" + std::to_string(k) + "]"));
    h.push_back(std::move(row));
  }
  const json& p = detail::field(j, "block_profile", path);
  if (p == "Full") return StructureChange(h, BlockProfile::Full);
  if (p == "ZeroH22") return StructureChange(h, BlockProfile::ZeroH22, detail::int_field(j, "upper_block", path));
  detail::parse_fail(path + ".block_profile", "expected \"Full\" or \"ZeroH22\"");
}

inline json lagrangian_to_json(const LagrangianSpec& L) {
  const auto* pg = std::get_if<PotentialGraph>(&L.representation());
  require(pg != nullptr, ErrorCode::InvalidInput, "sampled Lagrangians have no serial form");
  return {{"representation", "potential"},
          {"base", pg->base == GraphBase::Position ? "position" : "momentum"},
          {"potential", jet_to_json(pg->potential)}};
}

inline LagrangianSpec lagrangian_from_json(const json& j, const std::string& path) {
  const json& rep = detail::field(j, "representation", path);
  if (rep != "potential") detail::parse_fail(path + ".representation", "only \"potential\" can be read");
  GraphBase base = GraphBase::Position;
  if (j.contains("base")) {
    if (j["base"] == "momentum") base = GraphBase::Momentum;
    else if (j["base"] != "position") detail::parse_fail(path + ".base", "expected \"position\" or \"momentum\"");
  }
  return LagrangianSpec::graph(jet_from_json(detail::field(j, "potential", path), path + ".potential"), base);
}

inline json contact_problem_to_json(const ContactProblem& p) {
  return {{"X", lagrangian_to_json(p.X())},
          {"Lambda", lagrangian_to_json(p.Lambda())},
          {"z", detail::vector_json(p.z())},
          {"frame", {{"matrix", detail::matrix_json(p.darboux_frame().linear)},
                     {"offset", detail::vector_json(p.darboux_frame().offset)}}}};
}

inline ContactProblem contact_problem_from_json(const json& j, const std::string& path = "problem") {
  auto X = lagrangian_from_json(detail::field(j, "X", path), path + ".X");
  auto L = lagrangian_from_json(detail::field(j, "Lambda", path), path + ".Lambda");
  const Vector z = detail::vector_from(detail::field(j, "z", path), path + ".z");
  std::optional<AffineSymplectic> frame;
  if (j.contains("frame")) {
    const json& f = j["frame"];
    frame = AffineSymplectic{detail::matrix_from(detail::field(f, "matrix", path + ".frame"), path + ".frame.matrix"),
                             detail::vector_from(detail::field(f, "offset", path + ".frame"), path + ".frame.offset")};
  }
  return ContactProblem(std::move(X), std::move(L), z, frame);
}

inline json generating_family_to_json(const GeneratingFamily& F) {
  return {{"nparams", F.nparams()}, {"family", jet_to_json(F.family())}};
}

inline GeneratingFamily generating_family_from_json(const json& j, const std::string& path = "family") {
  return GeneratingFamily(jet_from_json(detail::field(j, "family", path), path + ".family"),
                          detail::int_field(j, "nparams", path));
}

inline json read_json_file(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ParseError, file + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, file + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// TOML system spec

struct SystemSpec {
  SymplecticMapSpec map;
  BoundaryCondition boundary;
  ParamBox box;
  ContinuationOptions continuation;
  std::vector<Vector> seeds;
  Vector mu;  // parameter for `solve`
};

namespace detail {

inline double toml_number(const toml::node* n, const std::string& path) {
  if (!n) parse_fail(path, "missing");
  if (auto v = n->value<double>()) return *v;
  parse_fail(path, "expected a number");
}

inline Vector toml_vector(const toml::node* n, const std::string& path) {
  if (!n) parse_fail(path, "missing");
  const auto* a = n->as_array();
  if (!a) parse_fail(path, "expected an array of numbers");
  Vector v(static_cast<int>(a->size()));
  for (std::size_t i = 0; i < a->size(); ++i) v[static_cast<int>(i)] = toml_number(a->get(i), path + "[" + std::to_string(i) + "]");
  return v;
}

inline std::vector<int> toml_ints(const toml::node* n, const std::string& path) {
  if (!n) parse_fail(path, "missing");
  const auto* a = n->as_array();
  if (!a) parse_fail(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < a->size(); ++i) {
    auto v = a->get(i)->value<int64_t>();
    if (!v || *v < 0) parse_fail(path + "[" + std::to_string(i) + "]", "expected an integer >= 0");
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

inline const toml::table& toml_table(const toml::table& root, const char* key) {
  const auto* t = root[key].as_table();
  if (!t) parse_fail(key, "missing table");
  return *t;
}

}  // namespace detail

/// Parses a system spec; schema violations raise ParseError naming the field path.
inline SystemSpec parse_system_spec(const toml::table& root) {
  using detail::parse_fail;
  SystemSpec s;

  const auto& ham = detail::toml_table(root, "hamiltonian");
  const auto* coeffs = ham["coeffs"].as_array();
  if (!coeffs) parse_fail("hamiltonian.coeffs", "expected an array of terms");
  std::vector<HamiltonianTerm> terms;
  int n = -1, l = -1;
  for (std::size_t i = 0; i < coeffs->size(); ++i) {
    const std::string p = "hamiltonian.coeffs[" + std::to_string(i) + "]";
    const auto* t = coeffs->get(i)->as_table();
    if (!t) parse_fail(p, "expected a table");
    HamiltonianTerm term;
    term.q_exps = detail::toml_ints(t->get("q_exps"), p + ".q_exps");
    term.p_exps = detail::toml_ints(t->get("p_exps"), p + ".p_exps");
    term.mu_exps = t->contains("mu_exps") ? detail::toml_ints(t->get("mu_exps"), p + ".mu_exps") : std::vector<int>{};
    term.coef = detail::toml_number(t->get("coef"), p + ".coef");
    if (term.q_exps.size() != term.p_exps.size()) parse_fail(p, "q_exps and p_exps differ in length");
    if (n < 0) n = static_cast<int>(term.q_exps.size());
    if (l < 0) l = static_cast<int>(term.mu_exps.size());
    if (static_cast<int>(term.q_exps.size()) != n) parse_fail(p + ".q_exps", "length differs from earlier terms");
    if (static_cast<int>(term.mu_exps.size()) != l) parse_fail(p + ".mu_exps", "length differs from earlier terms");
    terms.push_back(std::move(term));
  }
  if (auto v = ham["nvars"].value<int64_t>()) {
    if (n >= 0 && n != *v) parse_fail("hamiltonian.nvars", "disagrees with the term exponents");
    n = static_cast<int>(*v);
  }
  if (auto v = ham["nparams"].value<int64_t>()) {
    if (l >= 0 && l != *v) parse_fail("hamiltonian.nparams", "disagrees with the term exponents");
    l = static_cast<int>(*v);
  }
  if (n < 1) parse_fail("hamiltonian", "cannot infer nvars; give terms or nvars >= 1");
  if (l < 0) l = 0;
  try {
    s.map.system = HamiltonianSystem(n, l, std::move(terms));
  } catch (const Error& e) {
    parse_fail("hamiltonian", e.what());
  }

  const auto& integ = detail::toml_table(root, "integrator");
  const std::string scheme = integ["scheme"].value_or(std::string("implicit_midpoint"));
  if (scheme != "implicit_midpoint") parse_fail("integrator.scheme", "only \"implicit_midpoint\" is supported");
  s.map.total_time = detail::toml_number(integ.get("time"), "integrator.time");
  if (!(s.map.total_time > 0)) parse_fail("integrator.time", "must be > 0");
  auto steps = integ["steps"].value<int64_t>();
  if (!steps || *steps < 1) parse_fail("integrator.steps", "expected an integer >= 1");
  s.map.steps = static_cast<int>(*steps);

  const auto& bnd = detail::toml_table(root, "boundary");
  const std::string kind = bnd["kind"].value_or(std::string());
  if (kind == "dirichlet") {
    Dirichlet d{detail::toml_vector(bnd.get("q_start"), "boundary.q_start"),
                detail::toml_vector(bnd.get("q_end"), "boundary.q_end")};
    if (d.q_start.size() != n) parse_fail("boundary.q_start", "expected nvars entries");
    if (d.q_end.size() != n) parse_fail("boundary.q_end", "expected nvars entries");
    s.boundary = d;
  } else if (kind == "periodic") {
    s.boundary = Periodic{};
  } else if (kind == "graphical") {
    const auto* pot = bnd["potential"].as_array();
    if (!pot) parse_fail("boundary.potential", "expected an array of {exps, coef} terms");
    std::vector<std::pair<MultiIndex, double>> pt;
    int d = 2;
    for (std::size_t i = 0; i < pot->size(); ++i) {
      const std::string p = "boundary.potential[" + std::to_string(i) + "]";
      const auto* t = pot->get(i)->as_table();
      if (!t) parse_fail(p, "expected a table");
      auto e = detail::toml_ints(t->get("exps"), p + ".exps");
      if (static_cast<int>(e.size()) != 2 * n) parse_fail(p + ".exps", "expected 2 * nvars exponents (q, Q)");
      int deg = 0;
      for (int x : e) deg += x;
      d = std::max(d, deg);
      pt.emplace_back(MultiIndex(e.begin(), e.end()), detail::toml_number(t->get("coef"), p + ".coef"));
    }
    s.boundary = GraphicalLagrangian{Jet::from_terms(2 * n, d, pt)};
  } else {
    parse_fail("boundary.kind", "expected \"dirichlet\", \"periodic\" or \"graphical\"");
  }

  s.box.lo = Vector::Zero(l);
  s.box.hi = Vector::Zero(l);
  s.mu = Vector::Zero(l);
  if (const auto* cont = root["continuation"].as_table()) {
    if (const auto* pb = (*cont)["param_box"].as_array()) {
      if (static_cast<int>(pb->size()) != l) parse_fail("continuation.param_box", "expected one [lo, hi] per parameter");
      for (int k = 0; k < l; ++k) {
        const std::string p = "continuation.param_box[" + std::to_string(k) + "]";
        const Vector r = detail::toml_vector(pb->get(k), p);
        if (r.size() != 2 || r[0] > r[1]) parse_fail(p, "expected [lo, hi] with lo <= hi");
        s.box.lo[k] = r[0];
        s.box.hi[k] = r[1];
      }
      s.mu = s.box.lo;
    }
    if (auto v = (*cont)["max_steps"].value<int64_t>()) {
      if (*v < 1) parse_fail("continuation.max_steps", "must be >= 1");
      s.continuation.max_steps = static_cast<int>(*v);
    }
    if (cont->contains("ds")) {
      s.continuation.ds = detail::toml_number(cont->get("ds"), "continuation.ds");
      if (!(s.continuation.ds > 0)) parse_fail("continuation.ds", "must be > 0");
      s.continuation.ds_max = std::max(s.continuation.ds_max, s.continuation.ds);
    }
    if (auto v = (*cont)["lines"].value<int64_t>()) s.continuation.lines = static_cast<int>(*v);
    if (cont->contains("mu")) {
      s.mu = detail::toml_vector(cont->get("mu"), "continuation.mu");
      if (s.mu.size() != l) parse_fail("continuation.mu", "expected nparams entries");
    }
    if (const auto* sd = (*cont)["seeds"].as_array()) {
      for (std::size_t i = 0; i < sd->size(); ++i) {
        const std::string p = "continuation.seeds[" + std::to_string(i) + "]";
        s.seeds.push_back(detail::toml_vector(sd->get(i), p));
        if (s.seeds.back().size() != unknown_count(s.map, s.boundary)) parse_fail(p, "wrong number of unknowns");
      }
    }
  }
  if (s.seeds.empty()) {
    // origin plus points along each unknown axis
    const int m = unknown_count(s.map, s.boundary);
    s.seeds.push_back(Vector::Zero(m));
    for (int i = 0; i < m; ++i)
      for (double a : {0.5, 1.0, 2.0, 4.0, 8.0})
        for (double sgn : {1.0, -1.0}) {
          Vector v = Vector::Zero(m);
          v[i] = sgn * a;
          s.seeds.push_back(v);
        }
  }
  return s;
}

inline SystemSpec read_system_spec(const std::string& file) {
  toml::table root;
  try {
    root = toml::parse_file(file);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << file << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw Error(ErrorCode::ParseError, msg.str());
  }
  return parse_system_spec(root);
}

// ---------------------------------------------------------------------------
// Diagram output

/// CSV with header branch_id,mu1..,z1..,residual,det_jacobian; rows in branch order then arc order.
inline void write_branches_csv(std::ostream& out, const BifurcationDiagram& d, int nparams, int dim) {
  out << "branch_id";
  for (int k = 0; k < nparams; ++k) out << ",mu" << k + 1;
  for (int k = 0; k < dim; ++k) out << ",z" << k + 1;
  out << ",residual,det_jacobian\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t b = 0; b < d.branches.size(); ++b)
    for (const auto& pt : d.branches[b]) {
      out << b;
      for (int k = 0; k < pt.mu.size(); ++k) out << "," << num(pt.mu[k]);
      for (int k = 0; k < pt.z.size(); ++k) out << "," << num(pt.z[k]);
      out << "," << num(pt.residual) << "," << num(pt.det) << "\n";
    }
}

inline json singular_points_json(const BifurcationDiagram& d) {
  json pts = json::array();
  for (const auto& s : d.singular_points) {
    json p{{"kind", s.kind},
           {"mu", detail::vector_json(s.mu)},
           {"z", detail::vector_json(s.z)},
           {"class", label_of(s)},
           {"status", s.status},
           {"condition", std::isfinite(s.condition) ? json(s.condition) : json(nullptr)}};
    pts.push_back(p);
  }
  return {{"singular_points", pts}, {"notes", d.notes}};
}

}  // namespace lgc
