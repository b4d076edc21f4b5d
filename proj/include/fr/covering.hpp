#pragma once

// l-infinity covers of restricted row/column vectors, covering numbers, and
// the partitions of unity induced by a cover.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fr/core.hpp"
#include "fr/random.hpp"

namespace fr {

using Vectors = std::vector<std::vector<double>>;

// Rows: vectors are rows of phi restricted to a set of columns.
// Columns: vectors are columns of phi restricted to a set of rows.
enum class CoverDirection { Rows, Columns };

inline const char* to_string(CoverDirection d) { return d == CoverDirection::Rows ? "rows" : "columns"; }
inline CoverDirection parse_direction(const std::string& s) {
  if (s == "rows" || s == "x") return CoverDirection::Rows;
  if (s == "columns" || s == "y") return CoverDirection::Columns;
  throw Error("unknown cover direction '" + s + "'");
}

enum class CoverMode { Exact, Greedy };

inline const char* to_string(CoverMode m) { return m == CoverMode::Exact ? "exact" : "greedy"; }
inline CoverMode parse_cover_mode(const std::string& s) {
  if (s == "exact") return CoverMode::Exact;
  if (s == "greedy") return CoverMode::Greedy;
  throw Error("unknown cover mode '" + s + "'");
}

inline double linf_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

struct CoverResult {
  std::vector<Index> centers;     // indices into the input vectors
  double radius = 0.0;
  CoverDirection direction = CoverDirection::Rows;
  std::vector<Index> assignment;  // nearest center (position in `centers`) per input
  std::vector<double> distance;   // distance to that center
  std::vector<bool> covered;

  std::size_t size() const { return centers.size(); }
};

// Greedy farthest-point cover; centers are input vectors, lowest index wins ties.
inline CoverResult linf_cover(const Vectors& vectors, double eps) {
  if (!(eps > 0.0)) throw Error("cover radius must be positive");
  CoverResult r;
  r.radius = eps;
  const std::size_t m = vectors.size();
  if (m == 0) return r;
  for (const auto& v : vectors) {
    if (v.size() != vectors[0].size()) throw Error("cover input vectors differ in length");
    for (double x : v)
      if (!(x >= 0.0 && x <= 1.0)) throw Error("cover input entry outside [0,1]");
  }
  r.assignment.assign(m, 0);
  r.distance.assign(m, 0.0);
  r.centers.push_back(0);
  for (std::size_t i = 0; i < m; ++i) r.distance[i] = linf_distance(vectors[i], vectors[0]);
  while (true) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (r.distance[i] > r.distance[far]) far = i;
    if (r.distance[far] <= eps) break;
    const std::size_t c = r.centers.size();
    r.centers.push_back(far);
    for (std::size_t i = 0; i < m; ++i) {
      const double d = linf_distance(vectors[i], vectors[far]);
      if (d < r.distance[i]) {
        r.distance[i] = d;
        r.assignment[i] = c;
      }
    }
  }
  r.covered.assign(m, false);
  for (std::size_t i = 0; i < m; ++i) r.covered[i] = r.distance[i] <= eps;
  return r;
}

inline Vectors distinct_vectors(const Vectors& vectors) {
  Vectors d(vectors);
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  return d;
}

// Minimal number of l-infinity balls of radius eps (centers anywhere in the
// cube) covering the vectors. A group fits one ball iff every coordinate range
// is at most 2 eps. Returns nullopt when the search exceeds node_budget.
inline std::optional<std::size_t> minimal_cover_size(const Vectors& vectors, double eps,
                                                     std::size_t node_budget = 2'000'000) {
  const Vectors v = distinct_vectors(vectors);
  if (v.empty()) return 0;
  const std::size_t m = v.size(), dim = v[0].size();
  const double width = 2.0 * eps;
  const std::size_t upper = linf_cover(v, eps).size();  // input-centered cover is feasible

  std::size_t nodes = 0;
  bool blown = false;
  for (std::size_t k = 1; k < upper; ++k) {
    std::vector<std::vector<double>> lo, hi;
    // Assign vectors in order; a vector may open a new group only as the next group.
    auto place = [&](auto&& self, std::size_t i) -> bool {
      if (++nodes > node_budget) {
        blown = true;
        return false;
      }
      if (i == m) return true;
      for (std::size_t g = 0; g < lo.size(); ++g) {
        bool fits = true;
        for (std::size_t c = 0; c < dim && fits; ++c)
          fits = std::max(hi[g][c], v[i][c]) - std::min(lo[g][c], v[i][c]) <= width;
        if (!fits) continue;
        auto slo = lo[g], shi = hi[g];
        for (std::size_t c = 0; c < dim; ++c) {
          lo[g][c] = std::min(lo[g][c], v[i][c]);
          hi[g][c] = std::max(hi[g][c], v[i][c]);
        }
        if (self(self, i + 1)) return true;
        lo[g] = std::move(slo);
        hi[g] = std::move(shi);
        if (blown) return false;
      }
      if (lo.size() < k) {
        lo.push_back(v[i]);
        hi.push_back(v[i]);
        if (self(self, i + 1)) return true;
        lo.pop_back();
        hi.pop_back();
      }
      return false;
    };
    if (place(place, 0)) return k;
    if (blown) return std::nullopt;
  }
  return upper;
}

// Vectors of phi in the given direction restricted to `subset` of the opposing axis.
inline Vectors restricted_vectors(const FuzzyPredicate& phi, CoverDirection dir,
                                  const IndexSet& subset) {
  phi.require_binary();
  const std::size_t own = dir == CoverDirection::Rows ? phi.size(0) : phi.size(1);
  const std::size_t opp = dir == CoverDirection::Rows ? phi.size(1) : phi.size(0);
  Vectors out(own, std::vector<double>(subset.size()));
  for (std::size_t e = 0; e < own; ++e) {
    for (std::size_t k = 0; k < subset.size(); ++k) {
      if (subset[k] >= opp) throw Error("subset element " + std::to_string(subset[k]) + " out of range");
      out[e][k] = dir == CoverDirection::Rows ? phi(e, subset[k]) : phi(subset[k], e);
    }
  }
  return out;
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

// Calls f(subset) for every k-subset of {0..n-1} in lexicographic order.
template <typename F>
void for_each_subset(std::size_t n, std::size_t k, F&& f) {
  IndexSet s(k);
  for (std::size_t i = 0; i < k; ++i) s[i] = i;
  while (true) {
    f(static_cast<const IndexSet&>(s));
    std::size_t i = k;
    while (i > 0 && s[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++s[i - 1];
    for (std::size_t j = i; j < k; ++j) s[j] = s[j - 1] + 1;
  }
}

struct CoveringNumber {
  std::size_t value = 0;
  bool exact = false;              // every subset examined and every cover minimal
  std::size_t subsets_examined = 0;
  std::size_t subset_size = 0;
  IndexSet worst_subset;
};

inline constexpr double kMaxExactSubsets = 1e6;
inline constexpr std::size_t kMaxExactVectors = 20;

// Maximum over n-subsets of the opposing axis of the eps-cover size of the
// restricted vectors. Greedy mode samples subsets (all of them when there are
// at most `samples`) and uses greedy covers.
inline CoveringNumber covering_number(const FuzzyPredicate& phi, double eps, long n, CoverDirection dir,
                                      CoverMode mode, std::size_t samples = 200,
                                      std::uint64_t seed = 0) {
  phi.require_binary();
  if (n <= 0) throw Error("covering number needs n >= 1");
  if (!(eps > 0.0)) throw Error("covering number needs eps > 0");
  const std::size_t opp = dir == CoverDirection::Rows ? phi.size(1) : phi.size(0);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n), opp);
  CoveringNumber out;
  out.subset_size = k;
  if (eps >= 1.0) {
    out.value = 1;
    out.exact = true;
    return out;
  }
  const double total = binomial(opp, k);

  auto eval = [&](const IndexSet& s, bool exact_cover, bool& was_exact) {
    const Vectors v = restricted_vectors(phi, dir, s);
    if (exact_cover) {
      const Vectors d = distinct_vectors(v);
      if (d.size() <= kMaxExactVectors) {
        if (auto m = minimal_cover_size(d, eps)) return *m;
      }
      was_exact = false;
    }
    return linf_cover(v, eps).size();
  };
  auto consider = [&](const IndexSet& s, std::size_t size) {
    ++out.subsets_examined;
    if (size > out.value) {
      out.value = size;
      out.worst_subset = s;
    }
  };

  if (mode == CoverMode::Exact) {
    if (total > kMaxExactSubsets) {
      throw Error("exact covering number would enumerate " + std::to_string(total) +
                  " subsets (limit 1e6); use greedy mode");
    }
    bool all_exact = true;
    for_each_subset(opp, k, [&](const IndexSet& s) { consider(s, eval(s, true, all_exact)); });
    out.exact = all_exact;
    return out;
  }

  bool unused = true;
  if (total <= static_cast<double>(samples)) {
    for_each_subset(opp, k, [&](const IndexSet& s) { consider(s, eval(s, false, unused)); });
    return out;
  }
  for (std::size_t t = 0; t < samples; ++t) {
    auto eng = trial_engine(seed, t);
    IndexSet all(opp);
    for (std::size_t i = 0; i < opp; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), eng);
    IndexSet s(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(s.begin(), s.end());
    consider(s, eval(s, false, unused));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cover-induced partitions of unity
// ---------------------------------------------------------------------------

struct CoverPartition {
  PartitionOfUnity partition;
  std::vector<Index> centers;  // one per piece, element of the partitioned axis
  double cover_radius = 0.0;
};

// Partition of `axis` from the vectors attached to its elements (one per element).
// Every piece support has l-infinity diameter at most eps.
inline CoverPartition cover_partition(const Axis& axis, const Vectors& vectors, double eps,
                                      PartitionMode mode) {
  if (!(eps > 0.0)) throw Error("cover partition needs eps > 0");
  if (vectors.size() != axis.size) throw Error("one vector per element of '" + axis.name + "' required");
  CoverPartition out;
  const std::size_t m = vectors.size();
  // Already homogeneous: one piece, whatever the cover radius would give.
  double diameter = 0.0;
  for (std::size_t x = 0; x < m; ++x)
    for (std::size_t y = x + 1; y < m; ++y) diameter = std::max(diameter, linf_distance(vectors[x], vectors[y]));
  if (m > 0 && diameter <= eps) {
    out.cover_radius = mode == PartitionMode::Definable ? 0.49 * eps : eps / 2;
    out.partition = PartitionOfUnity::trivial(axis);
    out.centers = {0};
    return out;
  }
  if (mode == PartitionMode::Definable) {
    out.cover_radius = 0.49 * eps;
    const CoverResult cov = linf_cover(vectors, out.cover_radius);
    std::vector<std::vector<double>> theta(cov.size(), std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < cov.size(); ++i)
      for (std::size_t x = 0; x < m; ++x)
        theta[i][x] = std::max(0.0, eps / 2 - linf_distance(vectors[x], vectors[cov.centers[i]]));
    for (std::size_t x = 0; x < m; ++x) {
      double s = 0.0;
      for (const auto& t : theta) s += t[x];
      for (auto& t : theta) t[x] /= s;
    }
    out.partition = PartitionOfUnity(axis, std::move(theta), mode);
    out.centers = cov.centers;
    return out;
  }
  out.cover_radius = eps / 2;
  const CoverResult cov = linf_cover(vectors, out.cover_radius);
  std::vector<bool> taken(m, false);
  std::vector<IndexSet> sets;
  for (Index c : cov.centers) {
    IndexSet s;
    for (std::size_t x = 0; x < m; ++x) {
      if (!taken[x] && linf_distance(vectors[x], vectors[c]) <= eps / 2) {
        taken[x] = true;
        s.push_back(x);
      }
    }
    if (!s.empty()) {
      sets.push_back(std::move(s));
      out.centers.push_back(c);
    }
  }
  out.partition = PartitionOfUnity::from_sets(axis, sets);
  return out;
}

// Partition of the x-axis of phi that is (phi,eps)-homogeneous against every column in B.
inline CoverPartition cover_partition(const FuzzyPredicate& phi, const IndexSet& B, double eps,
                                      PartitionMode mode) {
  phi.require_binary();
  if (B.empty()) throw Error("cover partition needs a nonempty parameter set");
  for (Index b : B)
    if (b >= phi.size(1)) throw Error("parameter " + std::to_string(b) + " is not on axis '" + phi.axis(1).name + "'");
  return cover_partition(phi.axis(0), restricted_vectors(phi, CoverDirection::Rows, B), eps, mode);
}

// Largest l-infinity distance between two elements sharing a piece support.
inline double max_piece_diameter(const PartitionOfUnity& p, const Vectors& vectors) {
  double worst = 0.0;
  for (std::size_t k = 0; k < p.num_pieces(); ++k) {
    const IndexSet s = p.support(k);
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j)
        worst = std::max(worst, linf_distance(vectors[s[i]], vectors[s[j]]));
  }
  return worst;
}

}  // namespace fr
