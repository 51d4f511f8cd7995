#include <gtest/gtest.h>

#include <random>

#include "lgc/classify.hpp"
#include "lgc/splitting.hpp"
#include "test_util.hpp"

using namespace lgc;
using lgc::testing::poly;

namespace {

Jet reconstruct_lhs(const Jet& phi, const MorseSplit& s) { return jet_compose(phi, s.change); }

int count_sign(const Matrix& h, int sgn) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  int c = 0;
  for (int i = 0; i < h.rows(); ++i)
    if (sgn * es.eigenvalues()[i] > 1e-6) ++c;
  return c;
}

}  // namespace

TEST(Split, AlreadySplit) {
  Jet phi = poly(2, 4, {{{3, 0}, 1}, {{0, 2}, 1}});
  auto s = split(phi);
  EXPECT_EQ(s.corank(), 1);
  EXPECT_EQ(s.signature, (Signature{1, 0}));
  EXPECT_EQ(s.constant, 0.0);
  EXPECT_LT(max_coeff_diff(s.reduced, poly(1, 4, {{{3}, 1}})), 1e-12);
  EXPECT_LT(max_coeff_diff(reconstruct_lhs(phi, s), split_normal_form(s)), 1e-9);
}

TEST(Split, MorsePointWithCrossTerm) {
  Jet phi = poly(2, 4, {{{3, 0}, 1}, {{1, 1}, 1}, {{0, 2}, 1}});
  auto s = split(phi);
  EXPECT_EQ(s.corank(), 0);
  EXPECT_EQ(s.signature, (Signature{1, 1}));
  EXPECT_LT(max_coeff_diff(reconstruct_lhs(phi, s), split_normal_form(s)), 1e-9);
}

TEST(Split, ShearedCubicReducesToFold) {
  // (x+y)^3 + y^2
  Jet u = poly(2, 5, {{{1, 0}, 1}, {{0, 1}, 1}});
  Jet phi = u * u * u + poly(2, 5, {{{0, 2}, 1}});
  auto s = split(phi);
  EXPECT_EQ(s.corank(), 1);
  EXPECT_EQ(s.signature, (Signature{1, 0}));
  EXPECT_EQ(s.reduced.order(1e-12), 3);
  EXPECT_LT(max_coeff_diff(reconstruct_lhs(phi, s), split_normal_form(s)), 1e-9);
  EXPECT_EQ(classify(s.reduced), parse_class("A2"));
  // the change keeps x_bar fixed after the linear split: kappa only alters the under block
  EXPECT_TRUE(s.reduced.hessian_at_zero().isZero());
}

TEST(Split, Errors) {
  EXPECT_THROW(split(poly(2, 3, {{{1, 0}, 1}})), Error);
  try {
    split(poly(1, 3, {{{2}, 2.5e-7}}));  // eigenvalue 5e-7 -> dead band
    FAIL();
  } catch (const RankAmbiguity& e) {
    EXPECT_NEAR(e.eigenvalue(), 5e-7, 1e-12);
  }
}

TEST(Split, ConstantIsRecorded) {
  auto s = split(poly(1, 3, {{{0}, 2.5}, {{3}, 1}}));
  EXPECT_EQ(s.constant, 2.5);
  EXPECT_TRUE(s.reduced.constant_term() == 0.0);
}

TEST(Split, ReconstructionOnRandomJetsWithPrescribedRank) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + trial % 4;
    const int d = 3 + trial % 3;
    const int r = static_cast<int>(rng() % (n + 1));
    // normal quadratic of rank r plus higher-order terms, in scrambled coordinates
    Jet base = lgc::testing::random_jet(rng, n, d, 3);
    MultiIndex e(n, 0);
    int plus = 0;
    for (int i = 0; i < r; ++i) {
      e[i] = 2;
      const double sgn = coin(rng) ? 1.0 : -1.0;
      plus += sgn > 0;
      base.add_term(e, sgn * (0.5 + (rng() % 100) / 100.0));
      e[i] = 0;
    }
    auto h = lgc::testing::random_change(rng, n, d);
    Jet phi = jet_compose(base, h);
    auto s = split(phi);
    EXPECT_EQ(s.signature.plus + s.signature.minus, r);
    EXPECT_EQ(s.signature.plus, plus);
    EXPECT_EQ(s.corank() + r, n);
    EXPECT_EQ(s.signature.plus, count_sign(phi.hessian_at_zero(), 1));
    EXPECT_EQ(s.signature.minus, count_sign(phi.hessian_at_zero(), -1));
    EXPECT_LT(max_coeff_diff(reconstruct_lhs(phi, s), split_normal_form(s)), 1e-9) << trial;
    EXPECT_TRUE(s.reduced.hessian_at_zero().isZero());
    EXPECT_EQ(s.reduced.gradient_at_zero().size() ? s.reduced.gradient_at_zero().cwiseAbs().maxCoeff() : 0.0, 0.0);
  }
}

TEST(SplitFamily, FoldNormalForm) {
  // variables (mu, x, y)
  Jet phi = poly(3, 4, {{{0, 3, 0}, 1}, {{1, 1, 0}, 1}, {{0, 0, 2}, 1}});
  auto s = split_family(phi, 1);
  EXPECT_EQ(s.signature, (Signature{1, 0}));
  EXPECT_TRUE(s.chi.is_zero());
  EXPECT_LT(max_coeff_diff(s.reduced_family, poly(2, 4, {{{0, 3}, 1}, {{1, 1}, 1}})), 1e-12);
}

TEST(SplitFamily, AdditiveParameterGoesToChi) {
  Jet phi = poly(2, 4, {{{0, 3}, 1}, {{1, 0}, 1}});
  auto s = split_family(phi, 1);
  EXPECT_LT(max_coeff_diff(s.chi, poly(1, 4, {{{1}, 1}})), 1e-14);
  EXPECT_LT(max_coeff_diff(s.reduced_family, poly(2, 4, {{{0, 3}, 1}})), 1e-12);
}

TEST(SplitFamily, ShiftedCubicFamily) {
  // (x + mu)^3 - 3 mu^2 (x + mu) + y^2 in variables (mu, x, y)
  const int d = 5;
  Jet mu = Jet::variable(3, d, 0), x = Jet::variable(3, d, 1), y = Jet::variable(3, d, 2);
  Jet xm = x + mu;
  Jet phi = xm * xm * xm - 3.0 * (mu * mu * xm) + y * y;
  auto s = split_family(phi, 1);
  EXPECT_EQ(s.corank(), 1);
  EXPECT_EQ(s.signature, (Signature{1, 0}));
  EXPECT_LT(max_coeff_diff(jet_compose(phi, s.change_family), split_normal_form(s)), 1e-9);
  // mu = 0 slice
  Jet slice = jet_restrict(s.reduced_family, std::vector<int>{1});
  EXPECT_EQ(classify(slice), parse_class("A2"));
  EXPECT_NEAR(s.reduced_family.coeff({1, 0}), 0.0, 1e-14);
  EXPECT_NEAR(s.reduced_family.constant_term(), 0.0, 1e-14);
  // a(mu) x_bar: no linear x_bar term at mu = 0
  EXPECT_NEAR(s.reduced_family.coeff({0, 1}), 0.0, 1e-14);
}

TEST(SplitFamily, RandomFamiliesAreFibredAndReconstruct) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int l = 1 + trial % 2, n = 1 + trial % 3, d = 4;
    Jet f = lgc::testing::random_jet(rng, l + n, d, 2);
    // replace the pure-x quadratic part by a well-conditioned form of random rank
    MultiIndex e(l + n, 0);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        e[l + i]++, e[l + j]++;
        f.set_coeff(e, 0.0);
        e[l + i]--, e[l + j]--;
      }
    Jet quad(l + n, d);
    for (int i = 0; i < n; ++i) {
      if (rng() % 3 == 0) continue;
      e[l + i] = 2;
      quad.add_term(e, rng() % 2 ? 1.0 : -1.5);
      e[l + i] = 0;
    }
    std::vector<int> xs;
    for (int i = 0; i < n; ++i) xs.push_back(l + i);
    // rotate the x block by a random orthogonal matrix
    Matrix q = Eigen::HouseholderQR<Matrix>(Matrix::Random(n, n)).householderQ();
    Matrix full = Matrix::Identity(l + n, l + n);
    full.bottomRightCorner(n, n) = q;
    f += jet_compose(quad, CoordinateChange::linear(full, d));
    FamilySplit s;
    try {
      s = split_family(f, l);
    } catch (const RankAmbiguity&) {
      continue;
    }
    for (int v = 0; v < l; ++v) EXPECT_EQ(s.change_family[v], Jet::variable(l + n, d, v));
    EXPECT_LT(max_coeff_diff(jet_compose(f, s.change_family), split_normal_form(s)), 1e-9) << trial;
    // gauge: no linear mu terms left in the reduced family
    for (int v = 0; v < l; ++v) EXPECT_EQ(s.reduced_family[1 + v], 0.0);
  }
}

TEST(SplitFamily, NotCriticalAtZeroParameter) {
  EXPECT_THROW(split_family(poly(2, 3, {{{0, 1}, 1}}), 1), Error);
}
