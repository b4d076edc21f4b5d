#include <catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace fr;
using Catch::Approx;

namespace {
const auto hg4 = gen_half_graph(4);
const auto u4 = DiscreteMeasure::uniform(4, "x");
const auto v4 = DiscreteMeasure::uniform(4, "y");
}  // namespace

TEST_CASE("expectation examples") {
  CHECK(expectation(gen_constant(4, 0.7), {u4, v4}) == Approx(0.7));
  CHECK(expectation(gen_identity(4), {u4, v4}) == Approx(0.25));
  CHECK(expectation(hg4, {u4, v4}) == Approx(frt::brute_expectation(hg4, u4, v4)));
  CHECK(expectation(hg4, {u4, v4}) == Approx(0.375));
}

TEST_CASE("morley product examples") {
  CHECK(morley_product(DiscreteMeasure::dirac({"x", 4}, 1), DiscreteMeasure::dirac({"y", 4}, 3), hg4) == 1.0);
  CHECK(morley_product(DiscreteMeasure::dirac({"x", 4}, 3), DiscreteMeasure::dirac({"y", 4}, 1), hg4) == 0.0);
  CHECK(morley_product(u4, v4, hg4) == Approx(0.375));
  auto mu = DiscreteMeasure(Axis{"x", 4}, {1, 0, 0, 0});
  std::mt19937_64 eng(7);
  CHECK(morley_product(mu, frt::random_measure({"y", 4}, eng), gen_constant(4, 0.3)) == Approx(0.3));
}

TEST_CASE("oscillation examples") {
  IndexSet all{0, 1, 2, 3};
  const std::vector<IndexSet> full{all, all};
  CHECK(oscillation(gen_constant(4, 0.2), full) == 0.0);
  const std::vector<IndexSet> corner{{0, 1}, {2, 3}};
  CHECK(oscillation(hg4, corner) == 0.0);
  CHECK(oscillation(hg4, full) == 1.0);
  const std::vector<IndexSet> bad{{}, {1}};
  CHECK_THROWS_AS(oscillation(hg4, bad), Error);
}

TEST_CASE("localization examples") {
  const std::vector<double> one(4, 1.0);
  CHECK(localize(u4, one).weights() == u4.weights());
  const std::vector<double> ind{1, 1, 0, 0};
  auto l = localize(u4, ind);
  CHECK(l[0] == Approx(0.5));
  CHECK(l[2] == 0.0);
  const std::vector<double> t{1, 0.5, 0, 0};
  auto m = localize(u4, t);
  CHECK(m[0] == Approx(2.0 / 3));
  CHECK(m[1] == Approx(1.0 / 3));
  const std::vector<double> zero(4, 0.0);
  CHECK_THROWS_AS(localize(u4, zero), Error);
}

TEST_CASE("permutation invariance examples") {
  const std::size_t swap[] = {1, 0};
  auto sym = FuzzyPredicate::from_function(4, 4, [](auto i, auto j) { return (i + j) / 6.0; }, "x", "x");
  CHECK(permutation_invariance_check(sym, u4, 2, swap) == Approx(0.0).margin(1e-15));
  auto hg = FuzzyPredicate::from_function(4, 4, [](auto i, auto j) { return i < j ? 1.0 : 0.0; }, "x", "x");
  CHECK(permutation_invariance_check(hg, u4, 2, swap) == Approx(0.0).margin(1e-12));
  const std::size_t id[] = {0};
  FuzzyPredicate unary({{"x", 4}}, {0.1, 0.2, 0.3, 0.4});
  CHECK(permutation_invariance_check(unary, u4, 1, id) == 0.0);
}

TEST_CASE("property: expectation lies between the extreme entries") {
  std::mt19937_64 eng(11);
  for (int t = 0; t < 200; ++t) {
    auto phi = frt::random_matrix(5, 7, eng);
    auto mu = frt::random_measure(phi.axis(0), eng), nu = frt::random_measure(phi.axis(1), eng);
    const double e = expectation(phi, {mu, nu});
    CHECK(e >= phi.min_value() - 1e-12);
    CHECK(e <= phi.max_value() + 1e-12);
    CHECK(e == Approx(frt::brute_expectation(phi, mu, nu)).margin(1e-12));
  }
}

TEST_CASE("property: expectation is multilinear in each measure") {
  std::mt19937_64 eng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    auto phi = frt::random_matrix(4, 6, eng);
    auto mu = frt::random_measure(phi.axis(0), eng), mu2 = frt::random_measure(phi.axis(0), eng);
    auto nu = frt::random_measure(phi.axis(1), eng);
    const double a = u(eng);
    std::vector<double> mix(4);
    for (std::size_t i = 0; i < 4; ++i) mix[i] = a * mu[i] + (1 - a) * mu2[i];
    const DiscreteMeasure m(phi.axis(0), mix);
    const double lhs = expectation(phi, {m, nu});
    const double rhs = a * expectation(phi, {mu, nu}) + (1 - a) * expectation(phi, {mu2, nu});
    CHECK(std::abs(lhs - rhs) <= 1e-9);
  }
}

TEST_CASE("property: Morley product commutes with transposition") {
  std::mt19937_64 eng(13);
  for (int t = 0; t < 200; ++t) {
    auto phi = frt::random_matrix(5, 3, eng);
    auto mu = frt::random_measure(phi.axis(0), eng), nu = frt::random_measure(phi.axis(1), eng);
    CHECK(std::abs(morley_product(mu, nu, phi) - morley_product(nu, mu, transpose(phi))) <= 1e-12);
  }
}

TEST_CASE("property: localization composes multiplicatively") {
  std::mt19937_64 eng(14);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    auto mu = frt::random_measure({"x", 6}, eng);
    std::vector<double> t1(6), t2(6), prod(6);
    for (std::size_t i = 0; i < 6; ++i) {
      t1[i] = u(eng);
      t2[i] = u(eng);
      prod[i] = t1[i] * t2[i];
    }
    auto lhs = localize(localize(mu, t1), t2), rhs = localize(mu, prod);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(lhs[i] - rhs[i]) <= 1e-9);
  }
}

TEST_CASE("ternary expectation matches a triple sum") {
  std::mt19937_64 eng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Axis> axes{{"a", 2}, {"b", 3}, {"c", 4}};
  std::vector<double> v(24);
  for (auto& x : v) x = u(eng);
  FuzzyPredicate phi(axes, v);
  std::vector<DiscreteMeasure> mus;
  for (auto& a : axes) mus.push_back(frt::random_measure(a, eng));
  double s = 0.0;
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j)
      for (Index k = 0; k < 4; ++k) s += mus[0][i] * mus[1][j] * mus[2][k] * v[i * 12 + j * 4 + k];
  CHECK(expectation(phi, mus) == Approx(s).margin(1e-12));
}
