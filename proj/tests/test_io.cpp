#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "lgc/io.hpp"
#include "test_util.hpp"

using namespace lgc;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no lgc::Error thrown";
  return ErrorCode::InvalidInput;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

SystemSpec parse(const std::string& text) { return parse_system_spec(toml::parse(text)); }

const char* kCubic = R"(
[hamiltonian]
coeffs = [
  { q_exps = [0], p_exps = [2], mu_exps = [0], coef = 0.5 },
  { q_exps = [4], p_exps = [0], mu_exps = [0], coef = 0.25 },
  { q_exps = [1], p_exps = [0], mu_exps = [1], coef = -1.0 },
]
[integrator]
scheme = "implicit_midpoint"
time = 1.0
steps = 200
[boundary]
kind = "dirichlet"
q_start = [0.0]
q_end = [0.5]
[continuation]
param_box = [[-1.0, 1.0]]
max_steps = 300
ds = 0.02
)";

}  // namespace

TEST(JetJson, RoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    Jet f = lgc::testing::random_jet(rng, 1 + t % 4, 1 + t % 6);
    auto c = f.mutable_coefficients();
    // awkward doubles: tiny, huge, not representable in short decimal
    if (c.size() > 2) c[1] = 1.0 / 3.0, c[2] = 1e-300 * u(rng);
    if (c.size() > 3) c[3] = 1.7976931348623157e308;
    const std::string text = jet_to_json(f).dump();
    const Jet g = jet_from_json(json::parse(text));
    ASSERT_EQ(g.nvars(), f.nvars());
    ASSERT_EQ(g.degree(), f.degree());
    for (std::size_t i = 0; i < f.basis().size(); ++i) EXPECT_TRUE(same_bits(f[i], g[i])) << i;
  }
}

TEST(JetJson, TermsAreInGradedLexOrder) {
  const Jet f = Jet::from_terms(2, 3, {{{0, 3}, 4.0}, {{1, 0}, 1.0}, {{2, 0}, 2.0}, {{1, 1}, 3.0}});
  const json j = jet_to_json(f);
  std::vector<MultiIndex> order;
  for (const auto& t : j["terms"]) order.push_back(t["exps"].get<MultiIndex>());
  EXPECT_EQ(order, (std::vector<MultiIndex>{{1, 0}, {2, 0}, {1, 1}, {0, 3}}));
}

TEST(JetJson, ZeroJetHasNoTerms) {
  const json j = jet_to_json(Jet(3, 4));
  EXPECT_TRUE(j["terms"].empty());
  EXPECT_EQ(jet_from_json(j).nvars(), 3);
}

TEST(JetJson, Rejections) {
  auto bad = [](const char* text) { return code_of([&] { jet_from_json(json::parse(text)); }); };
  EXPECT_EQ(bad(R"({"degree": 2, "terms": []})"), ErrorCode::ParseError);
  EXPECT_EQ(bad(R"({"nvars": 1, "degree": 2, "terms": [{"exps": [1, 1], "coef": 1}]})"), ErrorCode::ParseError);
  EXPECT_EQ(bad(R"({"nvars": 1, "degree": 2, "terms": [{"exps": [3], "coef": 1}]})"), ErrorCode::ParseError);
  EXPECT_EQ(bad(R"({"nvars": 1, "degree": 2, "terms": [{"exps": [-1], "coef": 1}]})"), ErrorCode::ParseError);
  EXPECT_EQ(bad(R"({"nvars": 1, "degree": 2, "terms": [{"exps": [1], "coef": "x"}]})"), ErrorCode::ParseError);
  EXPECT_EQ(bad(R"({"nvars": 1, "degree": 2, "terms": [{"exps": [1], "coef": 1}, {"exps": [1], "coef": 2}]})"),
            ErrorCode::ParseError);
  EXPECT_EQ(bad(R"([1, 2])"), ErrorCode::ParseError);
  const auto msg = message_of([] {
    jet_from_json(json::parse(R"({"nvars": 1, "degree": 2, "terms": [{"exps": [1]}, {"exps": [2]}]})"));
  });
  EXPECT_NE(msg.find("jet.terms[0].coef"), std::string::npos) << msg;
}

TEST(JetJson, NonFiniteCoefficientsCannotBeWritten) {
  Jet f(1, 2);
  f.mutable_coefficients()[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_EQ(code_of([&] { jet_to_json(f); }), ErrorCode::InvalidInput);
}

TEST(ClassJson, CarriesInvariants) {
  const json j = class_to_json(parse_class("D4-"));
  EXPECT_EQ(j["class"], "D4-");
  EXPECT_EQ(j["corank"], 2);
  EXPECT_EQ(j["milnor"], 4);
}

TEST(StructureChangeJson, RoundTrip) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<Jet>> h(2, std::vector<Jet>(2, Jet(4, 2)));
  h[0][0] = lgc::testing::random_jet(rng, 4, 2);
  h[0][1] = h[1][0] = lgc::testing::random_jet(rng, 4, 2);
  const StructureChange H(h, BlockProfile::ZeroH22, 1);
  const json j = structure_change_to_json(H);
  EXPECT_EQ(j["block_profile"], "ZeroH22");
  const StructureChange G = structure_change_from_json(json::parse(j.dump()));
  EXPECT_EQ(G.profile(), BlockProfile::ZeroH22);
  EXPECT_EQ(G.upper_block(), 1);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) EXPECT_EQ(G.h(i, k).terms(), H.h(i, k).terms());

  json broken = j;
  broken["block_profile"] = "Diagonal";
  EXPECT_EQ(code_of([&] { structure_change_from_json(broken); }), ErrorCode::ParseError);
  broken = j;
  broken["h_matrix"][0][1]["nvars"] = 3;
  EXPECT_EQ(code_of([&] { structure_change_from_json(broken); }), ErrorCode::ParseError);
}

TEST(ContactProblemJson, RoundTripKeepsFrameAndPotentials) {
  const Jet x = Jet::from_terms(1, 3, {{{2}, 0.5}});
  const Jet lam = Jet::from_terms(1, 3, {{{3}, 1.0}, {{2}, 0.5}});
  Matrix m(2, 2);
  m << 1.0, 0.0, -1.0, 1.0;  // shear taking T_0 X = span(1, 1) to the zero section
  const ContactProblem p(LagrangianSpec::graph(x), LagrangianSpec::graph(lam), Vector::Zero(2),
                         AffineSymplectic{m, Vector::Zero(2)});
  const json j = contact_problem_to_json(p);
  const ContactProblem q = contact_problem_from_json(json::parse(j.dump()));
  EXPECT_EQ(q.darboux_frame().linear, m);
  EXPECT_EQ(std::get<PotentialGraph>(q.Lambda().representation()).potential.terms(), lam.terms());
  EXPECT_EQ(contact_problem_to_json(q), j);
}

TEST(ContactProblemJson, SampledLagrangianHasNoSerialForm) {
  ImplicitSampler s{1, [](const Vector& u) {
                      Vector w(2);
                      w << u[0], u[0] * u[0];
                      return w;
                    }};
  const ContactProblem p(LagrangianSpec::zero_section(1), LagrangianSpec(s), Vector::Zero(2));
  EXPECT_EQ(code_of([&] { contact_problem_to_json(p); }), ErrorCode::InvalidInput);
}

TEST(GeneratingFamilyJson, RoundTrip) {
  const GeneratingFamily F(Jet::from_terms(2, 3, {{{0, 3}, 1.0}, {{1, 1}, -1.0}}), 1);
  const json j = generating_family_to_json(F);
  EXPECT_EQ(j["nparams"], 1);
  const GeneratingFamily G = generating_family_from_json(json::parse(j.dump()));
  EXPECT_EQ(G.nparams(), 1);
  EXPECT_EQ(G.family().terms(), F.family().terms());
}

TEST(SystemSpec, ParsesCubicOscillator) {
  const SystemSpec s = parse(kCubic);
  EXPECT_EQ(s.map.system.n(), 1);
  EXPECT_EQ(s.map.system.nparams(), 1);
  EXPECT_EQ(s.map.steps, 200);
  EXPECT_DOUBLE_EQ(s.map.total_time, 1.0);
  EXPECT_STREQ(boundary_kind(s.boundary), "dirichlet");
  EXPECT_DOUBLE_EQ(s.box.lo[0], -1.0);
  EXPECT_DOUBLE_EQ(s.box.hi[0], 1.0);
  EXPECT_EQ(s.continuation.max_steps, 300);
  EXPECT_DOUBLE_EQ(s.continuation.ds, 0.02);
  EXPECT_FALSE(s.seeds.empty());
  Vector z(2), mu(1);
  z << 0.3, -0.2;
  mu << 0.7;
  // H = p^2/2 + q^4/4 - mu q
  EXPECT_NEAR(s.map.system.H(z, mu), 0.02 + 0.0081 / 4 - 0.21, 1e-15);
}

TEST(SystemSpec, PeriodicAndGraphicalBoundaries) {
  const SystemSpec p = parse(R"(
[hamiltonian]
coeffs = [{ q_exps = [2], p_exps = [0], coef = 0.5 }, { q_exps = [0], p_exps = [2], coef = 0.5 }]
[integrator]
time = 1.0
steps = 10
[boundary]
kind = "periodic"
)");
  EXPECT_STREQ(boundary_kind(p.boundary), "periodic");
  EXPECT_EQ(p.map.system.nparams(), 0);

  const SystemSpec g = parse(R"(
[hamiltonian]
coeffs = [{ q_exps = [0], p_exps = [2], coef = 0.5 }]
[integrator]
time = 1.0
steps = 10
[boundary]
kind = "graphical"
potential = [{ exps = [1, 1], coef = -1.0 }, { exps = [2, 0], coef = 0.5 }]
)");
  const auto& gl = std::get<GraphicalLagrangian>(g.boundary);
  EXPECT_EQ(gl.potential.nvars(), 2);
  EXPECT_DOUBLE_EQ(gl.potential.coeff({1, 1}), -1.0);
}

TEST(SystemSpec, ErrorsNameTheField) {
  struct Case {
    std::string find, replace, path;
  };
  const std::vector<Case> cases{
      {"steps = 200", "steps = 0", "integrator.steps"},
      {"time = 1.0", "time = -1.0", "integrator.time"},
      {"scheme = \"implicit_midpoint\"", "scheme = \"rk4\"", "integrator.scheme"},
      {"kind = \"dirichlet\"", "kind = \"neumann\"", "boundary.kind"},
      {"q_end = [0.5]", "q_end = [0.5, 1.0]", "boundary.q_end"},
      {"q_end = [0.5]", "", "boundary.q_end"},
      {"[[-1.0, 1.0]]", "[[1.0, -1.0]]", "continuation.param_box[0]"},
      {"max_steps = 300", "max_steps = 0", "continuation.max_steps"},
      {"coef = 0.25", "coef = \"x\"", "hamiltonian.coeffs[1].coef"},
      {"mu_exps = [1]", "mu_exps = [1, 0]", "hamiltonian.coeffs[2].mu_exps"},
      {"[integrator]", "[integrator_]", "integrator"},
  };
  for (const auto& c : cases) {
    std::string text = kCubic;
    text.replace(text.find(c.find), c.find.size(), c.replace);
    const std::string msg = message_of([&] { parse(text); });
    EXPECT_NE(msg.find("ParseError: " + c.path), std::string::npos) << c.path << " -> " << msg;
  }
}

TEST(SystemSpec, MalformedFileReportsLocation) {
  const auto path = std::filesystem::temp_directory_path() / "lgc_io_malformed.toml";
  {
    std::ofstream f(path);
    f << "[hamiltonian\ncoeffs = [\n";
  }
  const std::string msg = message_of([&] { read_system_spec(path.string()); });
  EXPECT_NE(msg.find("ParseError"), std::string::npos);
  EXPECT_NE(msg.find(":1:"), std::string::npos) << msg;
  std::filesystem::remove(path);
  EXPECT_EQ(code_of([] { read_system_spec("/nonexistent/system.toml"); }), ErrorCode::ParseError);
}

TEST(DiagramOutput, CsvLayoutAndSidecar) {
  BifurcationDiagram d;
  Vector mu(2), z(2);
  mu << 0.5, -1.0;
  z << 0.0, 0.1;
  d.branches = {{{mu, z, 1e-14, 2.0}}, {{mu, z, 0.0, -0.5}, {mu, z, 0.0, 0.25}}};
  SingularPoint sp{mu, z};
  sp.kind = "fold";
  sp.cls = parse_class("A2");
  sp.status = "classified";
  sp.condition = 12.5;
  d.singular_points.push_back(sp);
  SingularPoint un{mu, z};
  un.kind = "fold";
  un.condition = INFINITY;
  d.singular_points.push_back(un);
  d.notes.push_back("something happened");

  std::ostringstream out;
  write_branches_csv(out, d, 2, 2);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "branch_id,mu1,mu2,z1,z2,residual,det_jacobian");
  std::getline(in, line);
  EXPECT_EQ(line, "0,0.5,-1,0,0.10000000000000001,1e-14,2");
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);

  const json j = singular_points_json(d);
  EXPECT_EQ(j["singular_points"][0]["class"], "A2");
  EXPECT_EQ(j["singular_points"][1]["class"], "unclassified");
  EXPECT_TRUE(j["singular_points"][1]["condition"].is_null());
  EXPECT_EQ(j["notes"][0], "something happened");
}
