#include <catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace fr;

TEST_CASE("predicate rejects values outside the unit interval") {
  CHECK_THROWS_AS(FuzzyPredicate::matrix(1, 2, {0.5, 1.5}), Error);
  CHECK_THROWS_AS(FuzzyPredicate::matrix(1, 2, {0.5, -0.1}), Error);
  CHECK_THROWS_AS(FuzzyPredicate::matrix(2, 2, {0.5, 0.5, 0.5}), Error);
}

TEST_CASE("predicate flat and unflat are inverse") {
  FuzzyPredicate phi({{"a", 2}, {"b", 3}, {"c", 4}}, std::vector<double>(24, 0.5));
  for (std::size_t k = 0; k < phi.num_entries(); ++k) CHECK(phi.flat(phi.unflat(k)) == k);
  std::size_t count = 0;
  for_each_index(phi.axes(), [&](std::span<const Index> idx, std::size_t k) {
    CHECK(phi.flat(idx) == k);
    ++count;
  });
  CHECK(count == 24);
}

TEST_CASE("transpose swaps axes and entries") {
  auto phi = FuzzyPredicate::from_function(2, 3, [](auto i, auto j) { return (i + 2.0 * j) / 10.0; });
  auto t = transpose(phi);
  CHECK(t.axis(0) == phi.axis(1));
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(t(j, i) == phi(i, j));
}

TEST_CASE("measure validation") {
  CHECK_THROWS_AS(DiscreteMeasure(Axis{"x", 2}, {0.5, 0.6}), Error);
  CHECK_THROWS_AS(DiscreteMeasure(Axis{"x", 2}, {1.5, -0.5}), Error);
  CHECK_THROWS_AS(DiscreteMeasure(Axis{"x", 3}, {0.5, 0.5}), Error);
  auto mu = DiscreteMeasure::normalized(Axis{"x", 3}, {1, 0, 3});
  CHECK(mu[2] == Catch::Approx(0.75));
  CHECK(mu.support() == IndexSet{0, 2});
  auto d = DiscreteMeasure::dirac(Axis{"x", 4}, 2);
  CHECK(d[2] == 1.0);
  CHECK_THROWS_AS(mu.rebind(Axis{"y", 4}), Error);
  CHECK(mu.rebind(Axis{"y", 3}).axis().name == "y");
}

TEST_CASE("check_measures names the mismatched axis") {
  auto phi = FuzzyPredicate::matrix(2, 2, {0, 0, 0, 0});
  std::vector<DiscreteMeasure> mus{DiscreteMeasure::uniform(2, "x"), DiscreteMeasure::uniform(2, "z")};
  try {
    check_measures(phi, mus);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'y'") != std::string::npos);
  }
}

TEST_CASE("partition of unity validation") {
  Axis ax{"x", 3};
  CHECK_THROWS_AS(PartitionOfUnity(ax, {{1, 0.5, 0}, {0, 0, 1}}, PartitionMode::Definable), Error);
  CHECK_THROWS_AS(PartitionOfUnity(ax, {{0.5, 0.5, 1}, {0.5, 0.5, 0}}, PartitionMode::Constructible), Error);
  PartitionOfUnity p(ax, {{0.5, 1, 0}, {0.5, 0, 1}}, PartitionMode::Definable);
  CHECK(p.support(0) == IndexSet{0, 1});
  auto s = PartitionOfUnity::from_sets(ax, {{0, 2}, {1}});
  CHECK(s.mode() == PartitionMode::Constructible);
  CHECK(s.support(1) == IndexSet{1});
  CHECK_THROWS_AS(PartitionOfUnity::from_sets(ax, {{0}, {1}}), Error);
}

TEST_CASE("grid cell points carry product weights summing to one") {
  Axis x{"x", 3}, y{"y", 2};
  GridPartition g({PartitionOfUnity(x, {{0.5, 1, 0}, {0.5, 0, 1}}, PartitionMode::Definable),
                   PartitionOfUnity::trivial(y)});
  CHECK(g.num_cells() == 2);
  std::vector<DiscreteMeasure> mus{DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y)};
  double total = 0.0;
  for_each_cell_point(g, mus, [&](auto, auto, double cw, double pw) { total += cw * pw; });
  CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("rect cell mass and product enumeration") {
  std::vector<DiscreteMeasure> mus{DiscreteMeasure::uniform(4, "x"), DiscreteMeasure::uniform(2, "y")};
  RectCell c{{{0, 1, 3}, {1}}};
  CHECK(c.mass(mus) == Catch::Approx(0.375));
  std::size_t n = 0;
  for_each_in_product(std::span<const IndexSet>(c.sides), [&](auto) { ++n; });
  CHECK(n == 3);
  CHECK(RectCell{{{}, {1}}}.empty());
}
