#include <catch_amalgamated.hpp>

#include <algorithm>

#include "helpers.hpp"

using namespace fr;

namespace {

// Smallest number of groups with per-coordinate range <= 2 eps, by trying every
// assignment of points to k labels.
std::size_t brute_min_cover(const Vectors& v, double eps) {
  const std::size_t n = v.size();
  if (n == 0) return 0;
  for (std::size_t k = 1; k <= n; ++k) {
    std::vector<std::size_t> lab(n, 0);
    while (true) {
      bool ok = true;
      for (std::size_t g = 0; g < k && ok; ++g)
        for (std::size_t c = 0; c < v[0].size() && ok; ++c) {
          double lo = 2, hi = -1;
          for (std::size_t i = 0; i < n; ++i)
            if (lab[i] == g) {
              lo = std::min(lo, v[i][c]);
              hi = std::max(hi, v[i][c]);
            }
          if (hi - lo > 2 * eps + 1e-12) ok = false;
        }
      if (ok) return k;
      std::size_t i = 0;
      while (i < n && ++lab[i] == k) lab[i++] = 0;
      if (i == n) break;
    }
  }
  return n;
}

// Covering number by enumeration of every column subset of size n.
std::size_t brute_covering_number(const FuzzyPredicate& phi, double eps, std::size_t n) {
  const std::size_t cols = phi.size(1);
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << cols); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != n) continue;
    Vectors v;
    for (Index a = 0; a < phi.size(0); ++a) {
      std::vector<double> row;
      for (Index b = 0; b < cols; ++b)
        if (mask >> b & 1) row.push_back(phi(a, b));
      v.push_back(row);
    }
    best = std::max(best, brute_min_cover(v, eps));
  }
  return best;
}

}  // namespace

TEST_CASE("linf cover examples") {
  CHECK(linf_cover({{0.3, 0.4}, {0.3, 0.4}, {0.3, 0.4}}, 0.1).size() == 1);
  const Vectors line{{0.0}, {0.5}, {1.0}};
  // Centers restricted to the inputs need three balls; free centers need two.
  CHECK(linf_cover(line, 0.3).size() == 3);
  CHECK(minimal_cover_size(line, 0.3) == 2u);
  CHECK(linf_cover(line, 1.0).size() == 1);
  CHECK(minimal_cover_size(line, 1.0) == 1u);
  CHECK(linf_cover({}, 0.5).size() == 0);
  CHECK_THROWS_AS(linf_cover(line, 0.0), Error);
  CHECK_THROWS_AS(linf_cover({{1.5}}, 0.5), Error);
}

TEST_CASE("property: greedy cover is a valid cover") {
  std::mt19937_64 eng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    Vectors v(1 + eng() % 12, std::vector<double>(1 + eng() % 4));
    for (auto& x : v)
      for (auto& y : x) y = u(eng);
    const double eps = 0.05 + 0.5 * u(eng);
    auto c = linf_cover(v, eps);
    for (std::size_t i = 0; i < v.size(); ++i) {
      double d = 2;
      for (auto k : c.centers) d = std::min(d, linf_distance(v[i], v[k]));
      CHECK(d <= eps);
    }
  }
}

TEST_CASE("property: minimal cover size matches assignment enumeration") {
  std::mt19937_64 eng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 150; ++t) {
    Vectors v(1 + eng() % 6, std::vector<double>(1 + eng() % 3));
    for (auto& x : v)
      for (auto& y : x) y = std::round(u(eng) * 8) / 8;
    const double eps = 0.1 + 0.3 * u(eng);
    auto m = minimal_cover_size(v, eps);
    REQUIRE(m.has_value());
    CHECK(*m == brute_min_cover(v, eps));
    CHECK(*m <= linf_cover(v, eps).size());
  }
}

TEST_CASE("covering number examples") {
  for (long n : {1L, 2L, 4L}) {
    CHECK(covering_number(gen_constant(4, 0.6), 0.1, n, CoverDirection::Rows, CoverMode::Exact).value == 1);
    CHECK(covering_number(gen_constant(4, 0.6), 0.1, n, CoverDirection::Columns, CoverMode::Greedy).value == 1);
  }
  auto hg = gen_half_graph(4);
  auto ex = covering_number(hg, 0.25, 2, CoverDirection::Rows, CoverMode::Exact);
  CHECK(ex.value == 3);
  CHECK(ex.exact);
  CHECK(ex.subsets_examined == 6);
  CHECK(covering_number(hg, 0.25, 2, CoverDirection::Rows, CoverMode::Greedy).value == 3);
  CHECK(covering_number(hg, 1.0, 3, CoverDirection::Rows, CoverMode::Exact).value == 1);
  CHECK(covering_number(hg, 2.5, 3, CoverDirection::Columns, CoverMode::Greedy).value == 1);
}

TEST_CASE("property: exact covering number matches subset enumeration") {
  std::mt19937_64 eng(23);
  for (int t = 0; t < 30; ++t) {
    auto phi = FuzzyPredicate::from_function(5, 4, [&](auto, auto) { return (eng() % 5) / 4.0; });
    const double eps = 0.1 + 0.1 * (eng() % 3);
    const std::size_t n = 1 + eng() % 4;
    CHECK(covering_number(phi, eps, static_cast<long>(n), CoverDirection::Rows, CoverMode::Exact).value ==
          brute_covering_number(phi, eps, n));
  }
}

TEST_CASE("cover partition examples") {
  auto c = cover_partition(gen_constant(4, 0.3), {0, 1, 2, 3}, 0.2, PartitionMode::Definable);
  CHECK(c.partition.num_pieces() == 1);
  for (double w : c.partition.piece(0)) CHECK(w == Catch::Approx(1.0));

  auto hg = gen_half_graph(4);
  auto p = cover_partition(hg, {1, 3}, 0.5, PartitionMode::Constructible);
  REQUIRE(p.partition.num_pieces() == 3);
  CHECK(p.partition.support(0) == IndexSet{0});
  CHECK(p.partition.support(1) == IndexSet{1, 2});
  CHECK(p.partition.support(2) == IndexSet{3});

  CHECK(cover_partition(hg, {0, 1, 2, 3}, 2.0, PartitionMode::Definable).partition.num_pieces() == 1);
  CHECK(cover_partition(hg, {0, 1, 2, 3}, 2.0, PartitionMode::Constructible).partition.num_pieces() == 1);
}

TEST_CASE("property: cover partitions are homogeneous partitions of unity") {
  std::mt19937_64 eng(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    auto phi = frt::random_matrix(3 + eng() % 8, 2 + eng() % 6, eng);
    IndexSet B;
    for (Index b = 0; b < phi.size(1); ++b)
      if (eng() % 2) B.push_back(b);
    if (B.empty()) B.push_back(0);
    const double eps = 0.1 + 0.6 * u(eng);
    for (auto mode : {PartitionMode::Definable, PartitionMode::Constructible}) {
      auto cp = cover_partition(phi, B, eps, mode);
      const auto& P = cp.partition;
      for (Index a = 0; a < phi.size(0); ++a) {
        double s = 0;
        for (std::size_t k = 0; k < P.num_pieces(); ++k) s += P.piece(k)[a];
        CHECK(std::abs(s - 1.0) <= 1e-9);
      }
      for (std::size_t k = 0; k < P.num_pieces(); ++k) {
        const auto supp = P.support(k);
        for (auto a : supp)
          for (auto a2 : supp)
            for (auto b : B) CHECK(std::abs(phi(a, b) - phi(a2, b)) <= eps + 1e-12);
      }
      if (mode == PartitionMode::Definable) {
        const auto v = restricted_vectors(phi, CoverDirection::Rows, B);
        CHECK(P.num_pieces() <= linf_cover(v, 0.49 * eps).size());
      }
    }
  }
}
