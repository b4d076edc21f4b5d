#pragma once

// Sum-of-products approximations, homogeneous grids for them, the NIP
// regularity decomposition and the sandwich gap of a grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fr/calculus.hpp"
#include "fr/certificate.hpp"
#include "fr/core.hpp"
#include "fr/covering.hpp"
#include "fr/random.hpp"
#include "fr/sampling.hpp"

namespace fr {

// theta(x_1..x_n) = sum_j prod_i factor[j][i][x_i].
struct SumOfProducts {
  std::vector<Axis> axes;
  std::vector<std::vector<std::vector<double>>> terms;

  SumOfProducts() = default;
  SumOfProducts(std::vector<Axis> ax, std::vector<std::vector<std::vector<double>>> t)
      : axes(std::move(ax)), terms(std::move(t)) {
    for (const auto& term : terms) {
      if (term.size() != axes.size()) throw Error("term has the wrong number of factors");
      for (std::size_t i = 0; i < axes.size(); ++i) {
        if (term[i].size() != axes[i].size) throw Error("factor length does not match axis '" + axes[i].name + "'");
        for (double v : term[i])
          if (!(v >= 0.0 && v <= 1.0 + kSumTol)) throw Error("factor entry outside [0,1]");
      }
    }
  }

  std::size_t arity() const { return axes.size(); }
  std::size_t num_terms() const { return terms.size(); }

  double eval(std::span<const Index> pt) const {
    double s = 0.0;
    for (const auto& term : terms) {
      double p = 1.0;
      for (std::size_t i = 0; i < pt.size(); ++i) p *= term[i][pt[i]];
      s += p;
    }
    return s;
  }

  // Row-major values; may exceed 1 (reported, not clipped).
  std::vector<double> dense() const {
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.size;
    std::vector<double> v(total);
    for_each_index(axes, [&](std::span<const Index> pt, std::size_t k) { v[k] = eval(pt); });
    return v;
  }
};

inline json sum_of_products_json(const SumOfProducts& s) {
  json axes = json::array();
  for (const auto& a : s.axes) axes.push_back(axis_json(a));
  return json{{"axes", axes}, {"terms", s.terms}};
}

// ---------------------------------------------------------------------------
// Per-cell accumulation over a grid
// ---------------------------------------------------------------------------

struct CellAccumulator {
  std::vector<std::size_t> cell;
  double mass = 0.0;
  double lo = 1e300, hi = -1e300;  // of the tracked function over the cell support
  double weighted = 0.0;           // integral of cell weight times the tracked weight function
};

// Visits every grid cell with nonempty support; f_track gives the function whose
// range is tracked, f_weight the integrand accumulated against the cell weight.
template <typename Track, typename Weight>
std::map<std::uint64_t, CellAccumulator> accumulate_cells(const GridPartition& grid,
                                                          std::span<const DiscreteMeasure> mus,
                                                          Track&& f_track, Weight&& f_weight) {
  std::map<std::uint64_t, CellAccumulator> cells;
  for_each_cell_point(grid, mus, [&](std::span<const std::size_t> cell, std::span<const Index> pt, double cw, double pw) {
    auto& acc = cells[cell_key(grid, cell)];
    if (acc.cell.empty()) acc.cell.assign(cell.begin(), cell.end());
    const double v = f_track(pt);
    acc.lo = std::min(acc.lo, v);
    acc.hi = std::max(acc.hi, v);
    acc.mass += cw * pw;
    acc.weighted += cw * pw * f_weight(pt);
  });
  return cells;
}

// ---------------------------------------------------------------------------
// Homogeneous grid for a sum of products
// ---------------------------------------------------------------------------

struct HomogeneousGrid {
  GridPartition grid;
  std::size_t N = 1;
  double max_oscillation = 0.0;
  std::size_t nonempty_cells = 0;
};

inline std::size_t minimal_grid_resolution(std::size_t m, std::size_t n, double eps) {
  if (m == 0) return 1;
  auto ok = [&](double N) {
    return static_cast<double>(m) * (std::pow(1.0 + 2.0 / N, static_cast<double>(n)) - 1.0) <= eps / 2;
  };
  std::size_t hi = 1;
  while (!ok(static_cast<double>(hi))) {
    hi *= 2;
    if (hi > (std::size_t{1} << 40)) throw Error("grid resolution overflow");
  }
  std::size_t lo = hi / 2;  // ok(lo) is false unless hi == 1
  if (hi == 1) return 1;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (ok(static_cast<double>(mid)) ? hi : lo) = mid;
  }
  return hi;
}

inline double tent(std::size_t N, std::size_t k, double t) {
  return std::max(0.0, 1.0 - std::abs(static_cast<double>(N) * t - static_cast<double>(k)));
}

inline HomogeneousGrid homogeneous_grid(const SumOfProducts& theta, double eps, PartitionMode mode) {
  if (!(eps > 0.0)) throw Error("homogeneous grid needs eps > 0");
  HomogeneousGrid out;
  const std::size_t m = theta.num_terms(), n = theta.arity();
  out.N = minimal_grid_resolution(m, n, eps);
  const std::size_t N = out.N;

  std::vector<PartitionOfUnity> factors;
  for (std::size_t i = 0; i < n; ++i) {
    const Axis& ax = theta.axes[i];
    if (mode == PartitionMode::Constructible) {
      std::map<std::vector<std::size_t>, IndexSet> groups;
      for (Index x = 0; x < ax.size; ++x) {
        std::vector<std::size_t> key(m);
        for (std::size_t j = 0; j < m; ++j) {
          const double v = std::clamp(theta.terms[j][i][x], 0.0, 1.0);
          key[j] = std::min<std::size_t>(static_cast<std::size_t>(std::floor(static_cast<double>(N) * v)), N);
        }
        groups[key].push_back(x);
      }
      std::vector<IndexSet> sets;
      for (auto& [key, s] : groups) sets.push_back(std::move(s));
      factors.push_back(PartitionOfUnity::from_sets(ax, sets));
    } else {
      // Pieces are products over terms of tent functions composed with each factor.
      std::map<std::vector<std::size_t>, std::vector<double>> pieces;
      for (Index x = 0; x < ax.size; ++x) {
        std::vector<std::vector<std::pair<std::size_t, double>>> live(m);
        for (std::size_t j = 0; j < m; ++j) {
          const double v = std::clamp(theta.terms[j][i][x], 0.0, 1.0);
          const auto base = static_cast<std::size_t>(std::floor(static_cast<double>(N) * v));
          for (std::size_t k = base == 0 ? 0 : base - 1; k <= std::min(base + 1, N); ++k) {
            const double w = tent(N, k, v);
            if (w > 0.0) live[j].emplace_back(k, w);
          }
        }
        std::vector<std::size_t> pos(m, 0), key(m);
        while (true) {
          double w = 1.0;
          for (std::size_t j = 0; j < m; ++j) {
            key[j] = live[j][pos[j]].first;
            w *= live[j][pos[j]].second;
          }
          auto& p = pieces[key];
          if (p.empty()) p.assign(ax.size, 0.0);
          p[x] = w;
          std::size_t j = m;
          bool done = true;
          while (j > 0) {
            --j;
            if (++pos[j] < live[j].size()) {
              done = false;
              break;
            }
            pos[j] = 0;
          }
          if (done) break;
        }
      }
      std::vector<std::vector<double>> ps;
      for (auto& [key, p] : pieces) ps.push_back(std::move(p));
      if (ps.empty()) ps.push_back(std::vector<double>(ax.size, 1.0));
      factors.push_back(PartitionOfUnity(ax, std::move(ps), PartitionMode::Definable));
    }
  }
  out.grid = GridPartition(std::move(factors));

  // Exhaustive oscillation of theta over every cell support; the measure plays no role.
  std::vector<DiscreteMeasure> unif;
  for (const auto& a : theta.axes) unif.push_back(DiscreteMeasure::uniform(a));
  const auto cells = accumulate_cells(
      out.grid, unif, [&](std::span<const Index> pt) { return theta.eval(pt); },
      [](std::span<const Index>) { return 0.0; });
  for (const auto& [key, acc] : cells) out.max_oscillation = std::max(out.max_oscillation, acc.hi - acc.lo);
  out.nonempty_cells = cells.size();
  return out;
}

// ---------------------------------------------------------------------------
// Structured approximation
// ---------------------------------------------------------------------------

struct StructuredApproximation {
  bool ok = false;
  SumOfProducts theta;
  double eps = 0.0;
  double l1 = 0.0;                 // exhaustive integral of |phi - theta|
  std::size_t pieces = 0;          // pieces of the last-axis partition at the top level
  std::vector<std::size_t> tuple_sizes;
  double approximation_error = 0.0;  // worst approximation error met along the way
  std::string failure;
};

inline double l1_distance(const FuzzyPredicate& phi, const SumOfProducts& theta,
                          std::span<const DiscreteMeasure> mus) {
  double s = 0.0;
  for_each_index(phi.axes(), [&](std::span<const Index> pt, std::size_t k) {
    const double w = product_weight(mus, pt);
    if (w != 0.0) s += w * std::abs(phi.at_flat(k) - theta.eval(pt));
  });
  return s;
}

namespace detail {

// Measure on the flattened leading axes (row-major, matching the predicate layout).
inline DiscreteMeasure flattened_measure(std::span<const DiscreteMeasure> mus, std::size_t count) {
  std::vector<Axis> axes;
  std::string name;
  for (std::size_t i = 0; i < count; ++i) {
    axes.push_back(mus[i].axis());
    name += (i ? "*" : "") + mus[i].axis().name;
  }
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size;
  std::vector<double> w(total);
  for_each_index(axes, [&](std::span<const Index> pt, std::size_t k) { w[k] = product_weight(mus, pt); });
  return DiscreteMeasure::normalized(Axis{name, total}, std::move(w));
}

// Recursive step: approximation of phi with L1 error at most eps against mus.
inline bool structured_step(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus, double eps,
                            PartitionMode mode, std::uint64_t seed, std::size_t max_attempts,
                            StructuredApproximation& info, bool top,
                            std::vector<std::vector<std::vector<double>>>& terms_out) {
  const std::size_t n = phi.arity();
  if (n == 1) {
    terms_out.push_back({phi.values()});
    return true;
  }
  const std::size_t Y = phi.size(n - 1);
  const std::size_t R = phi.num_entries() / Y;
  const double step = eps / 2;

  // chi(x; y, y') = |phi(x;y) - phi(x;y')| over flattened leading axes.
  std::vector<double> chi(R * Y * Y);
  for (std::size_t x = 0; x < R; ++x)
    for (std::size_t y = 0; y < Y; ++y)
      for (std::size_t z = 0; z < Y; ++z)
        chi[(x * Y + y) * Y + z] = std::abs(phi.at_flat(x * Y + y) - phi.at_flat(x * Y + z));
  const DiscreteMeasure rows = flattened_measure(mus, n - 1);
  const FuzzyPredicate chi_pred({rows.axis(), Axis{"pairs", Y * Y}}, std::move(chi));

  const long size = static_cast<long>(std::ceil(9.0 / (2.0 * (step / 2) * (step / 2))));
  const auto w = eps_approximation_search(chi_pred, rows, step / 2, size, max_attempts, seed);
  info.tuple_sizes.push_back(static_cast<std::size_t>(size));
  info.approximation_error = std::max(info.approximation_error, w.error);
  if (!w.found) {
    info.failure = "no approximation tuple within " + std::to_string(step / 2) + " after " +
                   std::to_string(w.attempts) + " attempts (best " + std::to_string(w.error) + ")";
    return false;
  }
  IndexSet A(w.tuple);
  std::sort(A.begin(), A.end());
  A.erase(std::unique(A.begin(), A.end()), A.end());

  // Partition the last axis by the column patterns on A.
  Vectors vecs(Y, std::vector<double>(A.size()));
  for (std::size_t y = 0; y < Y; ++y)
    for (std::size_t k = 0; k < A.size(); ++k) vecs[y][k] = phi.at_flat(A[k] * Y + y);
  const CoverPartition cp = cover_partition(phi.axis(n - 1), vecs, step / 2, mode);
  if (top) info.pieces = cp.partition.num_pieces();

  std::vector<Axis> lead(phi.axes().begin(), phi.axes().end() - 1);
  for (std::size_t d = 0; d < cp.partition.num_pieces(); ++d) {
    const auto& psi = cp.partition.piece(d);
    Index rep = 0;
    double best = -1.0;
    for (Index y = 0; y < Y; ++y)
      if (psi[y] > kSupportTol && psi[y] > best) {
        best = psi[y];
        rep = y;
      }
    std::vector<double> slice(R);
    for (std::size_t x = 0; x < R; ++x) slice[x] = phi.at_flat(x * Y + rep);
    const FuzzyPredicate sub(lead, std::move(slice));
    std::vector<std::vector<std::vector<double>>> sub_terms;
    if (!structured_step(sub, mus.first(n - 1), eps / 2, mode, splitmix64(seed ^ (d + 1)), max_attempts,
                         info, false, sub_terms))
      return false;
    for (auto& t : sub_terms) {
      t.push_back(psi);
      terms_out.push_back(std::move(t));
    }
  }
  return true;
}

}  // namespace detail

inline StructuredApproximation structured_approximation(const FuzzyPredicate& phi,
                                                        std::span<const DiscreteMeasure> mus, double eps,
                                                        PartitionMode mode, std::uint64_t seed,
                                                        std::size_t max_attempts = 200) {
  check_measures(phi, mus);
  if (!(eps > 0.0)) throw Error("structured approximation needs eps > 0");
  StructuredApproximation out;
  out.eps = eps;
  std::vector<std::vector<std::vector<double>>> terms;
  if (!detail::structured_step(phi, mus, eps, mode, seed, max_attempts, out, true, terms)) return out;
  out.theta = SumOfProducts(phi.axes(), std::move(terms));
  out.l1 = l1_distance(phi, out.theta, mus);
  out.ok = out.l1 <= eps + kSumTol;
  if (!out.ok) out.failure = "L1 error " + std::to_string(out.l1) + " exceeds " + std::to_string(eps);
  return out;
}

// ---------------------------------------------------------------------------
// NIP regularity
// ---------------------------------------------------------------------------

struct NipCell {
  std::vector<std::size_t> cell;
  double mass = 0.0;
  double error = 0.0;      // e(pi) = int |phi - theta| pi / mass
  double r = 0.0;          // midpoint of theta's range on the support
  double deviation = 0.0;  // int pi |phi - r|
  double proof_form = 0.0; // int pi (|phi - r| - eps/2)^+
  bool exceptional = false;
};

struct NipRegularity {
  StructuredApproximation structured;
  HomogeneousGrid grid;
  std::vector<NipCell> cells;
  double exceptional_mass = 0.0;
  double markov_sum = 0.0;
  double worst_good_excess = 0.0;  // max over good cells of deviation - eps * mass
};

inline NipRegularity nip_decompose(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus, double eps,
                                   double delta, PartitionMode mode, std::uint64_t seed) {
  if (!(eps > 0.0) || !(delta > 0.0)) throw Error("regularity needs eps, delta > 0");
  NipRegularity out;
  out.structured = structured_approximation(phi, mus, delta * delta, mode, seed);
  if (!out.structured.ok) return out;
  const auto& theta = out.structured.theta;
  out.grid = homogeneous_grid(theta, eps, mode);
  out.grid.grid.check_covers(phi);

  const auto tv = theta.dense();
  auto phi_at = [&](std::span<const Index> pt) { return phi.at(pt); };
  auto theta_at = [&](std::span<const Index> pt) { return tv[phi.flat(pt)]; };
  auto cells = accumulate_cells(out.grid.grid, mus, theta_at,
                                [&](std::span<const Index> pt) { return std::abs(phi_at(pt) - theta_at(pt)); });
  std::map<std::uint64_t, std::size_t> slot;
  for (auto& [key, acc] : cells) {
    NipCell c;
    c.cell = acc.cell;
    c.mass = acc.mass;
    c.error = acc.mass > 0.0 ? acc.weighted / acc.mass : 0.0;
    c.r = (acc.lo + acc.hi) / 2;
    c.exceptional = c.error > delta;
    out.markov_sum += acc.weighted;
    if (c.exceptional) out.exceptional_mass += c.mass;
    slot[key] = out.cells.size();
    out.cells.push_back(std::move(c));
  }
  for_each_cell_point(out.grid.grid, mus,
                      [&](std::span<const std::size_t> cell, std::span<const Index> pt, double cw, double pw) {
                        auto& c = out.cells[slot.at(cell_key(out.grid.grid, cell))];
                        const double dev = std::abs(phi_at(pt) - c.r);
                        c.deviation += cw * pw * dev;
                        c.proof_form += cw * pw * std::max(0.0, dev - eps / 2);
                      });
  out.worst_good_excess = -1e300;
  for (const auto& c : out.cells)
    if (!c.exceptional) out.worst_good_excess = std::max(out.worst_good_excess, c.deviation - eps * c.mass);
  if (out.worst_good_excess == -1e300) out.worst_good_excess = 0.0;
  return out;
}

inline Certificate nip_regularity(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus, double eps,
                                  double delta, PartitionMode mode, std::uint64_t seed) {
  check_measures(phi, mus);
  const NipRegularity nr = nip_decompose(phi, mus, eps, delta, mode, seed);
  Certificate c = begin_certificate("nip-reg", phi, mus);
  c.seed = seed;
  c.parameters = {{"eps", eps}, {"delta", delta}, {"mode", to_string(mode)}};
  if (!nr.structured.ok) {
    c.notes.push_back("structured approximation failed: " + nr.structured.failure);
    c.add_check("structured-l1", "int |phi - theta| <= delta^2", nr.structured.l1, Relation::AtMost,
                delta * delta);
    c.add_check("structured-found", "approximation tuple found", 0.0, Relation::AtLeast, 1.0, 0.0);
    return c;
  }
  json cells = json::array();
  double worst_proof = 0.0;
  for (const auto& cell : nr.cells) {
    cells.push_back({{"cell", cell.cell},
                     {"mass", cell.mass},
                     {"error", cell.error},
                     {"r", cell.r},
                     {"deviation", cell.deviation},
                     {"exceptional", cell.exceptional}});
    if (!cell.exceptional && cell.mass > 0.0) worst_proof = std::max(worst_proof, cell.proof_form / cell.mass);
  }
  c.witness = {{"theta", sum_of_products_json(nr.structured.theta)},
               {"grid", grid_json(nr.grid.grid)},
               {"cells", cells}};
  c.statistics = {{"l1", nr.structured.l1},
                  {"terms", nr.structured.theta.num_terms()},
                  {"top_pieces", nr.structured.pieces},
                  {"tuple_sizes", nr.structured.tuple_sizes},
                  {"N", nr.grid.N},
                  {"nonempty_cells", nr.cells.size()},
                  {"theta_max_oscillation", nr.grid.max_oscillation},
                  {"exceptional_mass", nr.exceptional_mass},
                  {"markov_sum", nr.markov_sum},
                  {"proof_form_max", worst_proof}};
  c.add_check("structured-l1", "int |phi - theta| <= delta^2", nr.structured.l1, Relation::AtMost, delta * delta);
  c.add_check("theta-homogeneous", "osc(theta, cell) <= eps", nr.grid.max_oscillation, Relation::AtMost, eps);
  c.add_check("markov-identity", "|sum_pi e(pi) mass(pi) - int |phi - theta|| <= 1e-9",
              std::abs(nr.markov_sum - nr.structured.l1), Relation::AtMost, 0.0);
  c.add_check("exceptional-mass", "mass of cells with e(pi) > delta <= delta", nr.exceptional_mass,
              Relation::AtMost, delta);
  c.add_check("good-cells", "max over good cells of int pi |phi - r_pi| - eps mass(pi) <= 0",
              nr.worst_good_excess, Relation::AtMost, 0.0);
  if (delta > eps / 2) {
    c.notes.push_back("delta > eps/2: the good-cell inequality is checked, not implied by construction");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Sandwich gap
// ---------------------------------------------------------------------------

struct SandwichCell {
  std::vector<std::size_t> cell;
  double mass = 0.0;
  double r_minus = 0.0, r_plus = 0.0;
};

struct Sandwich {
  std::vector<SandwichCell> cells;
  double gap = 0.0;                 // int (chi+ - chi-)
  double worst_violation = 0.0;     // max of (chi- - phi)^+ and (phi - chi+)^+
  bool pointwise_ok = true;
};

inline Sandwich sandwich_build(const FuzzyPredicate& phi, const GridPartition& grid,
                               std::span<const DiscreteMeasure> mus) {
  check_measures(phi, mus);
  grid.check_covers(phi);
  auto cells = accumulate_cells(grid, mus, [&](std::span<const Index> pt) { return phi.at(pt); },
                                [](std::span<const Index>) { return 0.0; });
  Sandwich out;
  std::map<std::uint64_t, std::size_t> slot;
  for (const auto& [key, acc] : cells) {
    slot[key] = out.cells.size();
    out.cells.push_back({acc.cell, acc.mass, acc.lo, acc.hi});
    out.gap += (acc.hi - acc.lo) * acc.mass;
  }
  std::vector<double> lower(phi.num_entries(), 0.0), upper(phi.num_entries(), 0.0);
  for_each_cell_point(grid, mus, [&](std::span<const std::size_t> cell, std::span<const Index> pt, double cw, double) {
    const auto& c = out.cells[slot.at(cell_key(grid, cell))];
    const std::size_t k = phi.flat(pt);
    lower[k] += cw * c.r_minus;
    upper[k] += cw * c.r_plus;
  });
  for (std::size_t k = 0; k < lower.size(); ++k) {
    const double v = phi.at_flat(k);
    out.worst_violation = std::max({out.worst_violation, lower[k] - v, v - upper[k]});
  }
  out.pointwise_ok = out.worst_violation <= kSumTol;
  return out;
}

// Grid from a row cover over all columns and a column cover over all rows, each at eps/2.
inline GridPartition cover_grid(const FuzzyPredicate& phi, double eps, PartitionMode mode) {
  phi.require_binary();
  IndexSet cols(phi.size(1)), rows(phi.size(0));
  for (Index b = 0; b < cols.size(); ++b) cols[b] = b;
  for (Index a = 0; a < rows.size(); ++a) rows[a] = a;
  auto px = cover_partition(phi, cols, eps / 2, mode).partition;
  auto py = cover_partition(transpose(phi), rows, eps / 2, mode).partition;
  return GridPartition({std::move(px), std::move(py)});
}

}  // namespace fr
