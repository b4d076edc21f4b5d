#pragma once

// Homogeneous rectangle search, the iterative distal regularity partition,
// density and bucketed rectangle extraction, cuttings and equipartitions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fr/calculus.hpp"
#include "fr/certificate.hpp"
#include "fr/core.hpp"
#include "fr/random.hpp"
#include "fr/sampling.hpp"

namespace fr {

// ---------------------------------------------------------------------------
// Rectangles
// ---------------------------------------------------------------------------

struct SehRectangle {
  std::vector<IndexSet> sides;
  std::vector<double> masses;
  double oscillation = 0.0;

  double min_mass() const { return masses.empty() ? 0.0 : *std::min_element(masses.begin(), masses.end()); }
};

inline SehRectangle measure_rectangle(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus,
                                      std::vector<IndexSet> sides) {
  SehRectangle r;
  for (std::size_t i = 0; i < sides.size(); ++i) r.masses.push_back(mus[i].mass(sides[i]));
  r.oscillation = oscillation(phi, sides);
  r.sides = std::move(sides);
  return r;
}

inline bool rectangle_ok(const SehRectangle& r, double eps, double delta) {
  return r.oscillation <= eps + kSumTol && r.min_mass() >= delta - kSumTol;
}

inline json rectangle_json(const SehRectangle& r) {
  return json{{"sides", r.sides}, {"masses", r.masses}, {"oscillation", r.oscillation}};
}

struct SehSearch {
  std::optional<SehRectangle> rect;
  bool exhaustive = true;       // no rectangle was skipped (all subsets, budget not hit)
  bool budget_exhausted = false;
  std::size_t examined = 0;
};

inline constexpr std::size_t kSubsetAxisLimit = 12;

namespace detail {

inline std::vector<IndexSet> all_subsets(const IndexSet& support) {
  std::vector<IndexSet> out;
  const std::size_t k = support.size();
  for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
    IndexSet s;
    for (std::size_t i = 0; i < k; ++i)
      if (mask >> i & 1u) s.push_back(support[i]);
    out.push_back(std::move(s));
  }
  return out;
}

// Level sets of phi along `axis` with the other coordinates at pivots.
inline std::vector<IndexSet> level_sets(const FuzzyPredicate& phi, const std::vector<IndexSet>& supports,
                                        std::size_t axis, double eps) {
  const std::size_t n = phi.arity();
  std::vector<IndexSet> out;
  std::vector<Index> pt(n);
  for (std::size_t i = 0; i < n; ++i) pt[i] = supports[i].front();
  for (Index pivot : supports[n - 1]) {
    if (axis != n - 1) pt[n - 1] = pivot;
    std::vector<double> f;
    for (Index x : supports[axis]) {
      pt[axis] = x;
      f.push_back(phi.at(pt));
    }
    for (double t : f) {
      IndexSet s;
      for (std::size_t k = 0; k < f.size(); ++k)
        if (f[k] >= t && f[k] <= t + eps + kSupportTol) s.push_back(supports[axis][k]);
      out.push_back(std::move(s));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

// Best rectangle (largest minimum per-axis mass) with masses >= delta and
// oscillation <= eps. Sides are drawn from the measure supports; the last axis
// is chosen optimally for each choice of the other sides.
inline SehSearch seh_bruteforce(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus, double eps,
                                double delta, std::size_t budget = 1'000'000) {
  check_measures(phi, mus);
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("rectangle search needs delta in (0,1]");
  if (!(eps >= 0.0)) throw Error("rectangle search needs eps >= 0");
  const std::size_t n = phi.arity();
  SehSearch out;
  std::vector<IndexSet> supports(n);
  for (std::size_t i = 0; i < n; ++i) supports[i] = mus[i].support();

  // Candidate sides for the leading axes, heaviest first.
  std::vector<std::vector<IndexSet>> cand(n - 1);
  std::vector<std::vector<double>> cand_mass(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    std::vector<IndexSet> raw;
    if (supports[i].size() <= kSubsetAxisLimit) {
      raw = detail::all_subsets(supports[i]);
    } else {
      raw = detail::level_sets(phi, supports, i, eps);
      out.exhaustive = false;
    }
    std::vector<std::pair<double, IndexSet>> keyed;
    for (auto& s : raw) {
      const double m = mus[i].mass(s);
      if (m >= delta - kSumTol) keyed.emplace_back(m, std::move(s));
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (keyed.empty()) return out;
    for (auto& [m, s] : keyed) {
      cand[i].push_back(std::move(s));
      cand_mass[i].push_back(m);
    }
  }

  const IndexSet& last = supports[n - 1];
  double best = -1.0;
  std::vector<std::size_t> pos(n - 1, 0);
  std::vector<IndexSet> sides(n);
  std::vector<double> lo(last.size()), hi(last.size());
  while (true) {
    double lead = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      sides[i] = cand[i][pos[i]];
      lead = std::min(lead, cand_mass[i][pos[i]]);
    }
    if (lead > best + kSupportTol) {
      // Range of phi along each fiber of the last axis.
      for (std::size_t k = 0; k < last.size(); ++k) {
        sides[n - 1] = {last[k]};
        lo[k] = 1.0;
        hi[k] = 0.0;
        for_each_in_product(std::span<const IndexSet>(sides), [&](std::span<const Index> pt) {
          const double v = phi.at(pt);
          lo[k] = std::min(lo[k], v);
          hi[k] = std::max(hi[k], v);
        });
      }
      for (std::size_t w = 0; w < last.size(); ++w) {
        if (hi[w] - lo[w] > eps + kSupportTol) continue;
        if (++out.examined > budget) {
          out.budget_exhausted = true;
          out.exhaustive = false;
          return out;
        }
        const double t = lo[w];
        IndexSet T;
        double m = 0.0;
        for (std::size_t k = 0; k < last.size(); ++k) {
          if (lo[k] >= t && hi[k] <= t + eps + kSupportTol) {
            T.push_back(last[k]);
            m += mus[n - 1][last[k]];
          }
        }
        const double score = std::min(lead, m);
        if (m >= delta - kSumTol && score > best + kSupportTol) {
          best = score;
          sides[n - 1] = T;
          out.rect = measure_rectangle(phi, mus, sides);
        }
      }
      if (best >= 1.0 - kSumTol) return out;
    }
    std::size_t i = n - 1;
    bool done = true;
    while (i > 0) {
      --i;
      if (++pos[i] < cand[i].size()) {
        done = false;
        break;
      }
      pos[i] = 0;
    }
    if (done) break;
  }
  return out;
}

// Oracle: given phi and (localized) measures, a rectangle at (eps, mass) or none.
using SehOracle = std::function<std::optional<std::vector<IndexSet>>(
    const FuzzyPredicate&, std::span<const DiscreteMeasure>, double eps, double mass)>;

inline SehOracle bruteforce_oracle(std::size_t budget = 1'000'000) {
  return [budget](const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus, double eps,
                  double mass) -> std::optional<std::vector<IndexSet>> {
    auto s = seh_bruteforce(phi, mus, eps, mass, budget);
    if (!s.rect) return std::nullopt;
    return s.rect->sides;
  };
}

// ---------------------------------------------------------------------------
// Distal regularity partition
// ---------------------------------------------------------------------------

struct DistalPartition {
  std::vector<RectCell> cells;
  std::vector<bool> homogeneous;
  std::vector<double> masses;
  std::size_t rounds = 0;
  std::size_t round_budget = 0;       // from (delta/2)^n
  std::size_t round_budget_alt = 0;   // from delta^n
  std::vector<double> uncovered;      // non-homogeneous mass before round 1, after each round
  std::vector<bool> round_complete;   // every query in the round returned a rectangle
  std::vector<std::string> failures;
  double eps = 0.0, delta = 0.0, gamma = 0.0;

  double nonhomogeneous_mass() const {
    double u = 0.0;
    for (std::size_t k = 0; k < cells.size(); ++k)
      if (!homogeneous[k]) u += masses[k];
    return u;
  }
};

inline std::size_t round_count(double gamma, double q) {
  if (gamma >= 1.0) return 0;
  if (q >= 1.0) return 1;
  return static_cast<std::size_t>(std::ceil(std::log(gamma) / std::log(1.0 - q) - 1e-12));
}

inline bool cell_homogeneous(const FuzzyPredicate& phi, const RectCell& c, double eps) {
  return is_homogeneous(phi, c.sides, eps);
}

inline DistalPartition distal_partition(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus,
                                        double eps, double delta, double gamma, const SehOracle& oracle) {
  check_measures(phi, mus);
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("distal partition needs delta in (0,1]");
  if (!(gamma > 0.0)) throw Error("distal partition needs gamma > 0");
  if (!(eps >= 0.0)) throw Error("distal partition needs eps >= 0");
  const std::size_t n = phi.arity();
  DistalPartition out;
  out.eps = eps;
  out.delta = delta;
  out.gamma = gamma;
  out.round_budget = round_count(gamma, std::pow(delta / 2, static_cast<double>(n)));
  out.round_budget_alt = round_count(gamma, std::pow(delta, static_cast<double>(n)));

  RectCell whole;
  for (std::size_t i = 0; i < n; ++i) {
    IndexSet s(phi.size(i));
    for (Index a = 0; a < s.size(); ++a) s[a] = a;
    whole.sides.push_back(std::move(s));
  }
  out.cells = {whole};
  auto refresh = [&] {
    out.homogeneous.assign(out.cells.size(), false);
    out.masses.assign(out.cells.size(), 0.0);
    for (std::size_t k = 0; k < out.cells.size(); ++k) {
      out.homogeneous[k] = cell_homogeneous(phi, out.cells[k], eps);
      out.masses[k] = out.cells[k].mass(mus);
    }
  };
  refresh();
  out.uncovered.push_back(out.nonhomogeneous_mass());

  while (out.rounds < out.round_budget && out.uncovered.back() > gamma) {
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < out.cells.size(); ++k)
      if (!out.homogeneous[k] && out.masses[k] > kSupportTol) active.push_back(k);
    std::stable_sort(active.begin(), active.end(),
                     [&](std::size_t a, std::size_t b) { return out.masses[a] > out.masses[b]; });

    std::vector<std::optional<std::vector<IndexSet>>> found(active.size());
    std::vector<std::string> err(active.size());
    parallel_for(active.size(), [&](std::size_t q) {
      const RectCell& cell = out.cells[active[q]];
      std::vector<DiscreteMeasure> local;
      for (std::size_t i = 0; i < n; ++i) local.push_back(localize_to(mus[i], cell.sides[i]));
      auto r = oracle(phi, local, eps, delta / 2);
      if (!r) {
        err[q] = "no rectangle";
        return;
      }
      // Validate the oracle's answer against the cell.
      if (r->size() != n) {
        err[q] = "rectangle has wrong arity";
        return;
      }
      for (std::size_t i = 0; i < n; ++i) {
        auto& s = (*r)[i];
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        if (s.empty() || !std::includes(cell.sides[i].begin(), cell.sides[i].end(), s.begin(), s.end())) {
          err[q] = "rectangle side " + std::to_string(i) + " leaves the cell";
          return;
        }
      }
      const auto rect = measure_rectangle(phi, local, *r);
      if (!rectangle_ok(rect, eps, delta / 2)) {
        err[q] = "rectangle fails mass or homogeneity";
        return;
      }
      found[q] = std::move(r);
    });

    bool complete = true;
    std::vector<std::vector<RectCell>> replacement(out.cells.size());
    for (std::size_t q = 0; q < active.size(); ++q) {
      const std::size_t k = active[q];
      if (!found[q]) {
        complete = false;
        out.failures.push_back("round " + std::to_string(out.rounds + 1) + ", cell " + std::to_string(k) +
                               " (mass " + std::to_string(out.masses[k]) + "): " + err[q]);
        continue;
      }
      const RectCell& A = out.cells[k];
      const auto& B = *found[q];
      // Staircase: piece j keeps A_i & B_i for i < j, takes A_j \ B_j, and all of A_i after j;
      // piece n is the rectangle itself.
      std::vector<IndexSet> inside(n), outside(n);
      for (std::size_t i = 0; i < n; ++i) {
        inside[i] = B[i];
        std::set_difference(A.sides[i].begin(), A.sides[i].end(), B[i].begin(), B[i].end(),
                            std::back_inserter(outside[i]));
      }
      for (std::size_t j = 0; j <= n; ++j) {
        RectCell piece;
        for (std::size_t i = 0; i < n; ++i) {
          if (i < j) piece.sides.push_back(inside[i]);
          else if (i == j) piece.sides.push_back(outside[i]);
          else piece.sides.push_back(A.sides[i]);
        }
        if (!piece.empty()) replacement[k].push_back(std::move(piece));
      }
    }
    std::vector<RectCell> next;
    for (std::size_t k = 0; k < out.cells.size(); ++k) {
      if (replacement[k].empty()) next.push_back(std::move(out.cells[k]));
      else for (auto& p : replacement[k]) next.push_back(std::move(p));
    }
    out.cells = std::move(next);
    refresh();
    ++out.rounds;
    out.round_complete.push_back(complete);
    out.uncovered.push_back(out.nonhomogeneous_mass());
    if (!complete) break;
  }
  return out;
}

inline json rect_cells_json(const DistalPartition& p) {
  json cells = json::array();
  for (std::size_t k = 0; k < p.cells.size(); ++k)
    cells.push_back({{"sides", p.cells[k].sides}, {"homogeneous", p.homogeneous[k]}, {"mass", p.masses[k]}});
  return cells;
}

inline Certificate distal_certificate(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus,
                                      const DistalPartition& p) {
  const std::size_t n = phi.arity();
  Certificate c = begin_certificate("distal-reg", phi, mus);
  c.parameters = {{"eps", p.eps}, {"delta", p.delta}, {"gamma", p.gamma}};
  c.witness = {{"cells", rect_cells_json(p)}};
  const double shrink = 1.0 - std::pow(p.delta / 2, static_cast<double>(n));
  double worst_ratio = 0.0;  // max over complete rounds of U_r - shrink * U_{r-1}
  for (std::size_t r = 0; r < p.round_complete.size(); ++r)
    if (p.round_complete[r]) worst_ratio = std::max(worst_ratio, p.uncovered[r + 1] - shrink * p.uncovered[r]);
  const double cell_bound = std::pow(static_cast<double>(n + 1), static_cast<double>(p.round_budget));
  c.statistics = {{"rounds", p.rounds},
                  {"round_budget", p.round_budget},
                  {"round_budget_alt", p.round_budget_alt},
                  {"uncovered_by_round", p.uncovered},
                  {"round_complete", p.round_complete},
                  {"cells", p.cells.size()},
                  {"cell_bound", cell_bound},
                  {"nonhomogeneous_mass", p.nonhomogeneous_mass()},
                  {"failures", p.failures}};
  c.add_check("nonhomogeneous-mass", "sum over non-homogeneous cells of prod_i mu_i(A_i) <= gamma",
              p.nonhomogeneous_mass(), Relation::AtMost, p.gamma);
  c.add_check("rounds", "rounds <= ceil(log gamma / log(1 - (delta/2)^n))", static_cast<double>(p.rounds),
              Relation::AtMost, static_cast<double>(p.round_budget), 0.0);
  c.add_check("cells", "cells <= (n+1)^M", static_cast<double>(p.cells.size()), Relation::AtMost, cell_bound, 0.0);
  c.add_check("shrink", "U_r <= (1 - (delta/2)^n) U_{r-1} on complete rounds", worst_ratio, Relation::AtMost, 0.0);
  c.add_check("oracle", "oracle failures on positive-mass cells", static_cast<double>(p.failures.size()),
              Relation::AtMost, 0.0, 0.0);
  c.notes.push_back("round budget uses (delta/2)^n = " + std::to_string(p.round_budget) +
                    "; the delta^n reading gives " + std::to_string(p.round_budget_alt));
  return c;
}

// ---------------------------------------------------------------------------
// Density and bucketed rectangle extraction
// ---------------------------------------------------------------------------

struct DensitySeh {
  std::optional<SehRectangle> rect;
  double threshold = 0.0;  // (alpha - beta - delta - eps) / K
  std::size_t K = 0;
  std::optional<std::size_t> cell;
};

// Scans the cells of a partition (non-homogeneous mass <= delta) for a
// homogeneous cell with phi >= beta throughout and every side mass >= threshold.
inline DensitySeh density_seh(const FuzzyPredicate& phi, const std::vector<RectCell>& cells,
                              std::span<const DiscreteMeasure> mus, double alpha, double beta, double eps,
                              double delta) {
  check_measures(phi, mus);
  if (!(alpha > beta + delta + eps)) throw Error("density extraction needs alpha > beta + delta + eps");
  const double mean = expectation(phi, mus);
  if (mean < alpha - kSumTol) {
    throw Error("E[phi] = " + std::to_string(mean) + " is below alpha = " + std::to_string(alpha));
  }
  DensitySeh out;
  out.K = cells.size();
  out.threshold = (alpha - beta - delta - eps) / static_cast<double>(out.K);
  double best = -1.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& c = cells[k];
    if (c.empty()) continue;
    double lo = 1.0, hi = 0.0;
    for_each_in_product(std::span<const IndexSet>(c.sides), [&](std::span<const Index> pt) {
      const double v = phi.at(pt);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    });
    if (hi - lo > eps + kSumTol || lo < beta - kSumTol) continue;
    auto rect = measure_rectangle(phi, mus, c.sides);
    if (rect.min_mass() < out.threshold - kSumTol) continue;
    if (rect.min_mass() > best) {
      best = rect.min_mass();
      out.rect = std::move(rect);
      out.cell = k;
    }
  }
  return out;
}

// Density oracle: phi, measures, alpha (<= E[phi]) -> rectangle on which phi > 0 and is near-constant.
using DensityOracle = std::function<std::optional<SehRectangle>(const FuzzyPredicate&,
                                                                std::span<const DiscreteMeasure>, double alpha)>;

inline double min_positive_atom(std::span<const DiscreteMeasure> mus) {
  double m = 1.0;
  for (const auto& mu : mus)
    for (double w : mu.weights())
      if (w > kSupportTol) m = std::min(m, w);
  return m;
}

// Distal partition at eps = gamma = alpha/4 with a rectangle oracle, then density extraction at beta = alpha/4.
inline DensityOracle default_density_oracle() {
  return [](const FuzzyPredicate& psi, std::span<const DiscreteMeasure> mus,
            double alpha) -> std::optional<SehRectangle> {
    const double q = alpha / 4;
    const double delta = std::min(1.0, 2.0 * min_positive_atom(mus));
    const auto part = distal_partition(psi, mus, q, delta, q, bruteforce_oracle());
    if (part.nonhomogeneous_mass() > q + kSumTol) return std::nullopt;
    auto d = density_seh(psi, part.cells, mus, alpha, q, q, q);
    return d.rect;
  };
}

struct BucketedSeh {
  std::optional<SehRectangle> rect;  // measured against phi
  std::size_t bucket = 0;
  std::vector<double> bucket_means;
  double identity_error = 0.0;       // max |sum_j phi_j - 1/s|
};

inline double bucket_value(double r, std::size_t j, std::size_t s) {
  const double inv = 1.0 / static_cast<double>(s);
  return std::max(0.0, inv - std::abs(r - static_cast<double>(j) * inv));
}

inline double bucket_identity_error(double r, std::size_t s) {
  double sum = 0.0;
  for (std::size_t j = 0; j <= s; ++j) sum += bucket_value(r, j, s);
  return std::abs(sum - 1.0 / static_cast<double>(s));
}

inline BucketedSeh bucketed_seh(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus, std::size_t s,
                                const DensityOracle& oracle) {
  check_measures(phi, mus);
  if (s < 1) throw Error("bucketing needs s >= 1");
  BucketedSeh out;
  for (double v : phi.values()) out.identity_error = std::max(out.identity_error, bucket_identity_error(v, s));
  if (out.identity_error > 1e-12) throw Error("bucket identity violated by " + std::to_string(out.identity_error));

  const double need = 1.0 / static_cast<double>(s * (s + 1));
  double best = -1.0;
  for (std::size_t j = 0; j <= s; ++j) {
    const auto pj = map_values(phi, [&](double r) { return bucket_value(r, j, s); });
    out.bucket_means.push_back(expectation(pj, mus));
    if (out.bucket_means.back() > best) {
      best = out.bucket_means.back();
      out.bucket = j;
    }
  }
  if (best < need - kSumTol) throw Error("no bucket reaches mean 1/(s(s+1))");
  const auto pj = map_values(phi, [&](double r) { return bucket_value(r, out.bucket, s); });
  auto r = oracle(pj, mus, best);
  if (!r) return out;
  out.rect = measure_rectangle(phi, mus, r->sides);
  return out;
}

// ---------------------------------------------------------------------------
// Cuttings
// ---------------------------------------------------------------------------

struct Cutting {
  Axis axis;                               // the x-axis
  std::vector<std::vector<double>> psi;    // psi[d][x]
  std::vector<Index> centers;              // a_d
  IndexSet net;                            // parameters the pieces were cut by
  double gamma = 0.0;
  std::size_t iterations = 0;
};

struct CuttingAudit {
  double weight = 0.0;                     // min_x sum_d psi(x;d)
  std::vector<double> bad_mass;            // per d
  double worst_bad_mass = 0.0;
  std::size_t worst_piece = 0;
};

inline CuttingAudit cutting_audit(const Cutting& cut, const FuzzyPredicate& phi, const DiscreteMeasure& nu,
                                  double eps) {
  phi.require_binary();
  if (!(cut.axis == phi.axis(0))) throw Error("cutting is on axis '" + cut.axis.name + "', predicate rows are '" + phi.axis(0).name + "'");
  if (!(nu.axis() == phi.axis(1))) throw Error("measure is on axis '" + nu.axis().name + "', predicate columns are '" + phi.axis(1).name + "'");
  if (cut.psi.empty()) throw Error("cutting has no pieces");
  CuttingAudit a;
  a.weight = 1e300;
  for (Index x = 0; x < phi.size(0); ++x) {
    double s = 0.0;
    for (const auto& p : cut.psi) s += p.at(x);
    a.weight = std::min(a.weight, s);
  }
  for (std::size_t d = 0; d < cut.psi.size(); ++d) {
    IndexSet supp;
    for (Index x = 0; x < phi.size(0); ++x)
      if (cut.psi[d][x] > kSupportTol) supp.push_back(x);
    double bad = 0.0;
    if (!supp.empty()) {
      for (Index b = 0; b < phi.size(1); ++b) {
        double lo = 1.0, hi = 0.0;
        for (Index x : supp) {
          lo = std::min(lo, phi(x, b));
          hi = std::max(hi, phi(x, b));
        }
        if (hi - lo > eps + kSumTol) bad += nu[b];
      }
    }
    a.bad_mass.push_back(bad);
    if (bad > a.worst_bad_mass) {
      a.worst_bad_mass = bad;
      a.worst_piece = d;
    }
  }
  return a;
}

inline json cutting_json(const Cutting& c) {
  return json{{"axis", axis_json(c.axis)}, {"psi", c.psi},       {"centers", c.centers},
              {"net", c.net},             {"gamma", c.gamma},   {"iterations", c.iterations}};
}

inline Cutting cutting_from_json(const json& j) {
  Cutting c;
  c.axis = axis_from_json(j.at("axis"));
  c.psi = j.at("psi").get<std::vector<std::vector<double>>>();
  c.centers = j.value("centers", std::vector<Index>{});
  c.net = j.value("net", IndexSet{});
  c.gamma = j.at("gamma").get<double>();
  c.iterations = j.value("iterations", std::size_t{0});
  return c;
}

inline Certificate cutting_verify(const Cutting& cut, const FuzzyPredicate& phi, const DiscreteMeasure& nu,
                                  double eps, double delta) {
  const auto a = cutting_audit(cut, phi, nu, eps);
  const DiscreteMeasure mus[] = {DiscreteMeasure::uniform(phi.axis(0)), nu};
  Certificate c = begin_certificate("cutting", phi, mus);
  c.parameters = {{"eps", eps}, {"delta", delta}};
  c.witness = {{"cutting", cutting_json(cut)}};
  json per = json::array();
  for (std::size_t d = 0; d < a.bad_mass.size(); ++d) per.push_back({{"d", d}, {"bad_mass", a.bad_mass[d]}});
  const double ref = (1.0 / delta) * std::log(1.0 / delta);
  c.statistics = {{"pieces", cut.psi.size()},
                  {"weight", a.weight},
                  {"worst_bad_mass", a.worst_bad_mass},
                  {"worst_piece", a.worst_piece},
                  {"per_piece", per},
                  {"net_size", cut.net.size()},
                  {"reference_scale", ref}};
  c.add_check("weight", "min_x sum_d psi(x;d) >= gamma", a.weight, Relation::AtLeast, cut.gamma);
  c.add_check("bad-mass", "max_d nu(b : osc(phi(.;b), supp psi(.;d)) > eps) <= delta", a.worst_bad_mass,
              Relation::AtMost, delta);
  return c;
}

// Pieces are classes of rows with equal patterns on the net B; theta measures
// the distance from the class center on B, and columns are added to B until
// no class has a delta-heavy set of columns it fails to cut.
inline Cutting cutting_build(const FuzzyPredicate& phi, const DiscreteMeasure& nu, double eps, double delta,
                             std::uint64_t seed, IndexSet warm_start = {}) {
  phi.require_binary();
  if (!(eps > 0.0) || !(delta > 0.0)) throw Error("cutting needs eps, delta > 0");
  if (!(nu.axis() == phi.axis(1))) throw Error("measure is on axis '" + nu.axis().name + "', predicate columns are '" + phi.axis(1).name + "'");
  const std::size_t X = phi.size(0), Y = phi.size(1);
  IndexSet B = std::move(warm_start);
  std::sort(B.begin(), B.end());
  B.erase(std::unique(B.begin(), B.end()), B.end());

  Cutting cut;
  cut.axis = phi.axis(0);
  std::vector<std::vector<double>> theta;
  for (std::size_t it = 0;; ++it) {
    // Classes of equal row patterns on B, centered at their lowest row.
    std::map<std::vector<double>, Index> first;
    std::vector<Index> centers;
    for (Index x = 0; x < X; ++x) {
      std::vector<double> key;
      for (Index b : B) key.push_back(phi(x, b));
      if (first.emplace(key, x).second) centers.push_back(x);
    }
    const std::size_t D = centers.size();
    theta.assign(D, std::vector<double>(X, 0.0));
    for (std::size_t d = 0; d < D; ++d)
      for (Index x = 0; x < X; ++x)
        for (Index b : B) theta[d][x] = std::max(theta[d][x], std::abs(phi(x, b) - phi(centers[d], b)));

    std::vector<double> chi(Y * D);
    for (Index b = 0; b < Y; ++b)
      for (std::size_t d = 0; d < D; ++d) {
        double sup = -1e300, inf = 1e300;
        for (Index x = 0; x < X; ++x) {
          sup = std::max(sup, phi(x, b) - theta[d][x]);
          inf = std::min(inf, phi(x, b) + theta[d][x]);
        }
        // Columns already in B give sup - inf = 0 up to rounding; keep them out of the net.
        const double w = sup - inf;
        chi[b * D + d] = w <= kSumTol ? 0.0 : std::min(w, 1.0);
      }
    const FuzzyPredicate chi_pred({phi.axis(1), Axis{"d", D}}, std::move(chi));
    const auto net = eps_net_search(chi_pred, nu, delta, 0.0, eps / 2, NetStrategy::Greedy, seed);
    cut.centers = std::move(centers);
    cut.iterations = it;
    if (net.heavy.empty()) break;
    if (!net.feasible) throw Error("cutting net infeasible at piece " + std::to_string(*net.infeasible_column));
    const std::size_t before = B.size();
    for (Index b : net.elements) B.push_back(b);
    std::sort(B.begin(), B.end());
    B.erase(std::unique(B.begin(), B.end()), B.end());
    if (B.size() == before) throw Error("cutting net added no new parameter");
  }
  cut.net = B;
  cut.gamma = eps / 4;
  for (const auto& t : theta) {
    std::vector<double> p(X);
    for (Index x = 0; x < X; ++x) p[x] = std::max(0.0, eps / 4 - t[x]);
    cut.psi.push_back(std::move(p));
  }
  const auto audit = cutting_audit(cut, phi, nu, eps);
  if (audit.weight < cut.gamma - kSumTol || audit.worst_bad_mass > delta + kSumTol) {
    throw Error("built cutting fails verification (weight " + std::to_string(audit.weight) + ", bad mass " +
                std::to_string(audit.worst_bad_mass) + ")");
  }
  return cut;
}

// ---------------------------------------------------------------------------
// Finite cuts and equipartitions
// ---------------------------------------------------------------------------

struct FiniteCut {
  std::vector<std::size_t> cells;  // chosen cell indices
  IndexSet elements;
  double mass = 0.0;
  double error = 0.0;              // |mass - r|
};

inline FiniteCut finite_cut(const DiscreteMeasure& mu, const IndexSet& A, const std::vector<IndexSet>& cells,
                            double eps, double r) {
  std::vector<bool> in_cells(mu.size(), false);
  std::vector<double> cm(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    for (Index a : cells[k]) in_cells.at(a) = true;
    cm[k] = mu.mass(cells[k]);
    if (cm[k] > eps + kSumTol) {
      throw Error("cell " + std::to_string(k) + " has mass " + std::to_string(cm[k]) + " above eps");
    }
  }
  for (Index a : A)
    if (!in_cells.at(a)) throw Error("cells do not cover element " + std::to_string(a));
  if (r < 0.0 || r > 1.0) throw Error("cut target must be in [0,1]");
  double total = 0.0;
  for (double m : cm) total += m;
  if (r > total + kSumTol) throw Error("cut target exceeds the mass of the cells");

  std::vector<std::size_t> order(cells.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cm[a] > cm[b]; });
  FiniteCut out;
  for (std::size_t k : order) {
    if (out.mass >= r - kSumTol) break;
    out.cells.push_back(k);
    out.mass += cm[k];
  }
  // Drop cells, smallest first, while the target stays met.
  for (std::size_t i = out.cells.size(); i > 0; --i) {
    const std::size_t k = out.cells[i - 1];
    if (out.mass - cm[k] >= r - kSumTol) {
      out.mass -= cm[k];
      out.cells.erase(out.cells.begin() + static_cast<std::ptrdiff_t>(i - 1));
    }
  }
  std::sort(out.cells.begin(), out.cells.end());
  for (std::size_t k : out.cells) out.elements.insert(out.elements.end(), cells[k].begin(), cells[k].end());
  std::sort(out.elements.begin(), out.elements.end());
  out.error = std::abs(out.mass - r);
  if (out.error > eps + kSumTol) throw Error("finite cut misses its target by more than eps");
  return out;
}

// Per-axis common refinement of a rectangular partition: elements are grouped by
// which cells contain them, so every grid cell lies inside exactly one rectangle.
inline GridPartition rect_to_grid(const std::vector<RectCell>& cells, const std::vector<Axis>& axes) {
  std::vector<PartitionOfUnity> factors;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    std::map<std::vector<std::size_t>, IndexSet> groups;
    std::vector<std::vector<std::size_t>> sig(axes[i].size);
    for (std::size_t k = 0; k < cells.size(); ++k)
      for (Index a : cells[k].sides[i]) sig.at(a).push_back(k);
    for (Index a = 0; a < axes[i].size; ++a) groups[sig[a]].push_back(a);
    std::vector<IndexSet> sets;
    for (auto& [s, g] : groups) sets.push_back(std::move(g));
    factors.push_back(PartitionOfUnity::from_sets(axes[i], sets));
  }
  return GridPartition(std::move(factors));
}

inline std::vector<IndexSet> piece_sets(const PartitionOfUnity& p) {
  std::vector<IndexSet> s;
  for (std::size_t k = 0; k < p.num_pieces(); ++k) s.push_back(p.support(k));
  return s;
}

// Splits a piece into c parts by where each element's cumulative midpoint falls.
inline std::vector<IndexSet> midpoint_split(const DiscreteMeasure& mu, const IndexSet& piece, std::size_t c) {
  const double m = mu.mass(piece);
  std::vector<IndexSet> parts(c);
  double cum = 0.0;
  for (Index a : piece) {
    const double mid = cum + mu[a] / 2;
    cum += mu[a];
    std::size_t k = m > 0.0 ? static_cast<std::size_t>(std::floor(static_cast<double>(c) * mid / m)) : 0;
    parts[std::min(k, c - 1)].push_back(a);
  }
  std::erase_if(parts, [](const IndexSet& s) { return s.empty(); });
  return parts;
}

inline double mass_gap(const DiscreteMeasure& mu, const std::vector<IndexSet>& pieces) {
  double lo = 1e300, hi = -1e300;
  for (const auto& p : pieces) {
    const double m = mu.mass(p);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  return pieces.empty() ? 0.0 : hi - lo;
}

// Refines one axis partition so that all piece masses are within gamma.
inline std::vector<IndexSet> equipartition_axis(const DiscreteMeasure& mu, const std::vector<IndexSet>& pieces,
                                                double gamma) {
  if (mass_gap(mu, pieces) <= gamma + kSumTol) return pieces;

  std::vector<double> targets;
  for (const auto& p : pieces) {
    const double m = mu.mass(p);
    if (m <= 0.0) continue;
    const auto kmax = static_cast<std::size_t>(std::ceil(m / (gamma / 2))) + 1;
    for (std::size_t k = 1; k <= std::min(kmax, p.size()); ++k) targets.push_back(m / static_cast<double>(k));
  }
  std::sort(targets.begin(), targets.end(), std::greater<>());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (double tau : targets) {
    std::vector<IndexSet> out;
    for (const auto& p : pieces) {
      const double m = mu.mass(p);
      const auto c = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(m / tau)), 1, p.size());
      for (auto& part : midpoint_split(mu, p, c)) out.push_back(std::move(part));
    }
    if (mass_gap(mu, out) <= gamma + kSumTol) return out;
  }

  // Chunks of mass in [gamma/2, gamma) cut off with singleton cells.
  Index heaviest = 0;
  for (Index a = 0; a < mu.size(); ++a)
    if (mu[a] > mu[heaviest]) heaviest = a;
  if (mu[heaviest] <= gamma / 2 + kSumTol) {
    std::vector<IndexSet> out;
    for (const auto& p : pieces) {
      IndexSet rest = p;
      while (!rest.empty() && mu.mass(rest) >= gamma / 2 - kSumTol) {
        std::vector<IndexSet> singles;
        for (Index a : rest) singles.push_back({a});
        const auto cut = finite_cut(mu, rest, singles, gamma / 2, gamma / 2);
        if (cut.elements.empty()) break;
        IndexSet remaining;
        std::set_difference(rest.begin(), rest.end(), cut.elements.begin(), cut.elements.end(),
                            std::back_inserter(remaining));
        out.push_back(cut.elements);
        rest = std::move(remaining);
      }
      if (!rest.empty()) out.push_back(std::move(rest));
    }
    if (mass_gap(mu, out) <= gamma + kSumTol) return out;
  }
  throw Error("cannot equipartition axis '" + mu.axis().name + "': atom " + std::to_string(heaviest) +
              " has mass " + std::to_string(mu[heaviest]) + " (gamma = " + std::to_string(gamma) + ")");
}

struct Equipartition {
  GridPartition grid;
  std::vector<double> axis_gaps;
  std::vector<std::vector<double>> piece_masses;
};

inline Equipartition equipartition_refine(const GridPartition& grid, std::span<const DiscreteMeasure> mus,
                                          double gamma) {
  if (!grid.constructible()) throw Error("equipartition needs a constructible grid");
  if (!(gamma > 0.0)) throw Error("equipartition needs gamma > 0");
  if (mus.size() != grid.arity()) throw Error("one measure per grid axis required");
  Equipartition out;
  std::vector<PartitionOfUnity> factors;
  for (std::size_t i = 0; i < grid.arity(); ++i) {
    const auto& f = grid.factor(i);
    if (!(mus[i].axis() == f.axis())) throw Error("measure axis does not match grid axis '" + f.axis().name + "'");
    auto sets = piece_sets(f);
    if (gamma < 1.0) sets = equipartition_axis(mus[i], sets, gamma);
    std::vector<double> masses;
    for (const auto& s : sets) masses.push_back(mus[i].mass(s));
    out.axis_gaps.push_back(mass_gap(mus[i], sets));
    out.piece_masses.push_back(std::move(masses));
    factors.push_back(PartitionOfUnity::from_sets(f.axis(), sets));
  }
  out.grid = GridPartition(std::move(factors));
  return out;
}

// Non-homogeneous product mass of a constructible grid, and max oscillation
// inside cells whose enclosing rectangle is homogeneous.
struct GridAudit {
  double nonhomogeneous_mass = 0.0;
  double worst_inherited_oscillation = 0.0;
  std::size_t cells = 0;
};

inline GridAudit audit_grid(const FuzzyPredicate& phi, const GridPartition& grid, std::span<const DiscreteMeasure> mus,
                            double eps, const std::vector<RectCell>& parents = {},
                            const std::vector<bool>& parent_homogeneous = {}) {
  GridAudit a;
  std::vector<std::vector<IndexSet>> sets;
  std::vector<Axis> counts;
  for (std::size_t i = 0; i < grid.arity(); ++i) {
    sets.push_back(piece_sets(grid.factor(i)));
    counts.push_back(Axis{"", sets.back().size()});
  }
  for_each_index(counts, [&](std::span<const Index> cell, std::size_t) {
    std::vector<IndexSet> sides(cell.size());
    for (std::size_t i = 0; i < cell.size(); ++i) sides[i] = sets[i][cell[i]];
    ++a.cells;
    const double osc = oscillation(phi, sides);
    double m = 1.0;
    for (std::size_t i = 0; i < sides.size(); ++i) m *= mus[i].mass(sides[i]);
    if (osc > eps + kSumTol) a.nonhomogeneous_mass += m;
    if (!parents.empty()) {
      std::vector<Index> pt(sides.size());
      for (std::size_t i = 0; i < sides.size(); ++i) pt[i] = sides[i].front();
      for (std::size_t k = 0; k < parents.size(); ++k) {
        bool inside = true;
        for (std::size_t i = 0; i < pt.size() && inside; ++i)
          inside = std::binary_search(parents[k].sides[i].begin(), parents[k].sides[i].end(), pt[i]);
        if (inside) {
          if (parent_homogeneous[k]) a.worst_inherited_oscillation = std::max(a.worst_inherited_oscillation, osc);
          break;
        }
      }
    }
  });
  return a;
}

}  // namespace fr
