#include <catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace fr;
using Catch::Approx;

namespace {

// Every cell of a grid as (per-axis piece index), with its per-point weight.
template <typename F>
void for_each_cell(const GridPartition& g, F&& f) {
  std::vector<Axis> counts;
  for (const auto& p : g.factors()) counts.push_back({"", p.num_pieces()});
  for_each_index(counts, [&](std::span<const Index> cell, std::size_t) { f(cell); });
}

double cell_weight_at(const GridPartition& g, std::span<const Index> cell, std::span<const Index> pt) {
  double w = 1.0;
  for (std::size_t i = 0; i < cell.size(); ++i) w *= g.factor(i).piece(cell[i])[pt[i]];
  return w;
}

SumOfProducts identity_pair() {
  std::vector<double> id{0.0, 1.0 / 3, 2.0 / 3, 1.0};
  return SumOfProducts({{"x", 4}, {"y", 4}}, {{id, id}});
}

}  // namespace

TEST_CASE("sum of products evaluation") {
  SumOfProducts s({{"x", 2}, {"y", 3}}, {{{0.5, 1}, {1, 0, 0.5}}, {{0.1, 0.2}, {0.3, 0.4, 0.5}}});
  const auto d = s.dense();
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 3; ++j) {
      const double want = s.terms[0][0][i] * s.terms[0][1][j] + s.terms[1][0][i] * s.terms[1][1][j];
      CHECK(d[i * 3 + j] == Approx(want));
    }
  CHECK_THROWS_AS(SumOfProducts({{"x", 2}}, {{{0.5}}}), Error);
}

TEST_CASE("grid resolution is the least admissible value") {
  for (std::size_t m : {1u, 2u, 5u})
    for (std::size_t n : {1u, 2u, 3u})
      for (double eps : {0.1, 0.5, 1.0}) {
        const auto N = minimal_grid_resolution(m, n, eps);
        auto ok = [&](double x) { return m * (std::pow(1 + 2 / x, static_cast<double>(n)) - 1) <= eps / 2; };
        CHECK(ok(static_cast<double>(N)));
        if (N > 1) CHECK_FALSE(ok(static_cast<double>(N - 1)));
      }
}

TEST_CASE("homogeneous grid examples") {
  SumOfProducts c({{"x", 3}, {"y", 2}}, {{{0.4, 0.4, 0.4}, {0.5, 0.5}}});
  for (auto mode : {PartitionMode::Constructible, PartitionMode::Definable}) {
    auto g = homogeneous_grid(c, 0.2, mode);
    CHECK(g.max_oscillation == 0.0);
    if (mode == PartitionMode::Constructible) CHECK(g.nonempty_cells == 1);
  }
  auto id = identity_pair();
  auto g = homogeneous_grid(id, 0.5, PartitionMode::Constructible);
  CHECK(g.N == 17);
  CHECK(g.max_oscillation <= 0.5);
  auto big = homogeneous_grid(id, 2.0, PartitionMode::Constructible);
  CHECK(big.max_oscillation <= 1.0);
}

TEST_CASE("property: homogeneous grid cells are homogeneous by enumeration") {
  std::mt19937_64 eng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<Axis> axes{{"x", 4}, {"y", 5}};
    std::vector<std::vector<std::vector<double>>> terms(1 + eng() % 2);
    for (auto& term : terms) {
      for (const auto& a : axes) {
        std::vector<double> f(a.size);
        for (auto& v : f) v = u(eng) / static_cast<double>(terms.size());
        term.push_back(f);
      }
    }
    SumOfProducts s(axes, terms);
    const double eps = 0.3 + 0.4 * u(eng);
    for (auto mode : {PartitionMode::Constructible, PartitionMode::Definable}) {
      auto hg = homogeneous_grid(s, eps, mode);
      const auto& g = hg.grid;
      for_each_cell(g, [&](std::span<const Index> cell) {
        double lo = 1e9, hi = -1e9;
        for (Index a = 0; a < 4; ++a)
          for (Index b = 0; b < 5; ++b) {
            const Index pt[] = {a, b};
            if (cell_weight_at(g, cell, pt) > 0) {
              lo = std::min(lo, s.eval(pt));
              hi = std::max(hi, s.eval(pt));
            }
          }
        if (hi >= lo) CHECK(hi - lo <= eps + 1e-9);
      });
    }
  }
}

TEST_CASE("structured approximation examples") {
  auto u = std::vector<double>{0.2, 0.5, 0.9};
  auto v = std::vector<double>{1.0, 0.3, 0.6, 0.1};
  auto rank1 = FuzzyPredicate::from_function(3, 4, [&](auto i, auto j) { return u[i] * v[j]; });
  auto mus = frt::uniform_measures(rank1);
  auto r = structured_approximation(rank1, mus, 0.1, PartitionMode::Constructible, 1);
  REQUIRE(r.ok);
  CHECK(r.l1 <= 0.1);

  auto cst = gen_constant(4, 0.35);
  auto cm = frt::uniform_measures(cst);
  auto c = structured_approximation(cst, cm, 0.1, PartitionMode::Definable, 1);
  REQUIRE(c.ok);
  CHECK(c.l1 == Approx(0.0).margin(1e-12));

  auto hg = gen_half_graph(8);
  auto hm = frt::uniform_measures(hg);
  auto h = structured_approximation(hg, hm, 0.3, PartitionMode::Constructible, 1);
  REQUIRE(h.ok);
  const auto dense = h.theta.dense();
  double l1 = 0;
  for (Index i = 0; i < 8; ++i)
    for (Index j = 0; j < 8; ++j) l1 += std::abs(hg(i, j) - dense[i * 8 + j]) / 64;
  CHECK(l1 == Approx(h.l1).margin(1e-12));
  CHECK(l1 <= 0.3);
  CHECK(h.pieces >= 1);
}

TEST_CASE("property: structured approximation meets the requested L1 error") {
  std::mt19937_64 eng(42);
  for (int t = 0; t < 6; ++t) {
    auto phi = frt::random_matrix(5, 4, eng);
    auto mus = std::vector<DiscreteMeasure>{frt::random_measure(phi.axis(0), eng), frt::random_measure(phi.axis(1), eng)};
    for (auto mode : {PartitionMode::Constructible, PartitionMode::Definable}) {
      auto s = structured_approximation(phi, mus, 0.3, mode, t);
      REQUIRE(s.ok);
      CHECK(s.l1 <= 0.3 + 1e-9);
    }
  }
}

TEST_CASE("ternary structured approximation") {
  std::vector<Axis> axes{{"a", 3}, {"b", 3}, {"c", 3}};
  std::vector<double> v(27);
  for_each_index(axes, [&](std::span<const Index> p, std::size_t k) { v[k] = (p[0] + p[1] < p[2]) ? 1.0 : 0.0; });
  FuzzyPredicate phi(axes, v);
  std::vector<DiscreteMeasure> mus;
  for (const auto& a : axes) mus.push_back(DiscreteMeasure::uniform(a));
  auto s = structured_approximation(phi, mus, 0.4, PartitionMode::Constructible, 3);
  REQUIRE(s.ok);
  CHECK(s.l1 <= 0.4);
}

TEST_CASE("nip regularity examples") {
  auto cst = gen_constant(4, 0.5);
  auto cm = frt::uniform_measures(cst);
  auto d = nip_decompose(cst, cm, 0.3, 0.3, PartitionMode::Constructible, 1);
  REQUIRE(d.structured.ok);
  CHECK(d.exceptional_mass == 0.0);
  for (const auto& c : d.cells) CHECK(c.deviation == Approx(0.0).margin(1e-9));

  auto u = std::vector<double>{0.2, 0.5, 0.9, 1.0};
  auto rank1 = FuzzyPredicate::from_function(4, 4, [&](auto i, auto j) { return u[i] * u[3 - j]; });
  auto rm = frt::uniform_measures(rank1);
  auto r = nip_decompose(rank1, rm, 0.2, 0.1, PartitionMode::Constructible, 1);
  REQUIRE(r.structured.ok);
  CHECK(r.exceptional_mass == 0.0);

  auto hg = gen_half_graph(8);
  auto hm = frt::uniform_measures(hg);
  auto cert = nip_regularity(hg, hm, 0.3, 0.3, PartitionMode::Constructible, 1);
  CHECK(cert.passed());
  CHECK(cert.statistics["nonempty_cells"].get<std::size_t>() >= 1);
}

TEST_CASE("property: Markov identity and exceptional mass recomputed from the grid") {
  std::mt19937_64 eng(43);
  for (int t = 0; t < 4; ++t) {
    auto phi = frt::random_matrix(4, 4, eng);
    auto mus = frt::uniform_measures(phi);
    for (auto mode : {PartitionMode::Constructible, PartitionMode::Definable}) {
      auto d = nip_decompose(phi, mus, 0.4, 0.4, mode, t);
      REQUIRE(d.structured.ok);
      const auto theta = d.structured.theta.dense();
      const auto& g = d.grid.grid;
      double total = 0, exceptional = 0;
      for_each_cell(g, [&](std::span<const Index> cell) {
        double mass = 0, err = 0;
        for (Index a = 0; a < 4; ++a)
          for (Index b = 0; b < 4; ++b) {
            const Index pt[] = {a, b};
            const double w = cell_weight_at(g, cell, pt) / 16;
            mass += w;
            err += w * std::abs(phi(a, b) - theta[a * 4 + b]);
          }
        total += err;
        if (mass > 0 && err / mass > 0.4) exceptional += mass;
      });
      CHECK(total == Approx(d.structured.l1).margin(1e-9));
      CHECK(exceptional == Approx(d.exceptional_mass).margin(1e-9));
      CHECK(exceptional <= 0.4 + 1e-9);
    }
  }
}

TEST_CASE("sandwich examples") {
  auto cst = gen_constant(4, 0.6);
  auto cm = frt::uniform_measures(cst);
  CHECK(sandwich_build(cst, cover_grid(cst, 0.5, PartitionMode::Constructible), cm).gap == Approx(0.0).margin(1e-15));

  std::mt19937_64 eng(44);
  auto phi = frt::random_matrix(5, 5, eng);
  auto mus = frt::uniform_measures(phi);
  GridPartition trivial({PartitionOfUnity::trivial(phi.axis(0)), PartitionOfUnity::trivial(phi.axis(1))});
  auto s = sandwich_build(phi, trivial, mus);
  CHECK(s.gap == Approx(phi.max_value() - phi.min_value()));

  auto hg = gen_half_graph(8);
  auto hm = frt::uniform_measures(hg);
  auto h = sandwich_build(hg, cover_grid(hg, 0.5, PartitionMode::Constructible), hm);
  CHECK(h.pointwise_ok);
  CHECK(h.gap <= 1.0);
}

TEST_CASE("property: sandwich is pointwise and refinement does not widen it") {
  std::mt19937_64 eng(45);
  for (int t = 0; t < 50; ++t) {
    auto phi = frt::random_matrix(6, 6, eng);
    auto mus = std::vector<DiscreteMeasure>{frt::random_measure(phi.axis(0), eng), frt::random_measure(phi.axis(1), eng)};
    GridPartition coarse({PartitionOfUnity::from_sets(phi.axis(0), {{0, 1, 2}, {3, 4, 5}}),
                          PartitionOfUnity::from_sets(phi.axis(1), {{0, 1, 2, 3, 4, 5}})});
    GridPartition mid({PartitionOfUnity::from_sets(phi.axis(0), {{0, 1}, {2}, {3, 4, 5}}),
                       PartitionOfUnity::from_sets(phi.axis(1), {{0, 1, 2}, {3, 4, 5}})});
    GridPartition fine({PartitionOfUnity::from_sets(phi.axis(0), {{0}, {1}, {2}, {3}, {4, 5}}),
                        PartitionOfUnity::from_sets(phi.axis(1), {{0, 1}, {2}, {3, 4}, {5}})});
    const double g0 = sandwich_build(phi, coarse, mus).gap;
    const auto s1 = sandwich_build(phi, mid, mus);
    const auto s2 = sandwich_build(phi, fine, mus);
    CHECK(s1.pointwise_ok);
    CHECK(s2.pointwise_ok);
    CHECK(s1.gap <= g0 + 1e-12);
    CHECK(s2.gap <= s1.gap + 1e-12);
    auto def = cover_grid(phi, 0.6, PartitionMode::Definable);
    CHECK(sandwich_build(phi, def, mus).pointwise_ok);
  }
}
