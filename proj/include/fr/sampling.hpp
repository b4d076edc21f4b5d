#pragma once

// Approximations and nets for a binary predicate against a measure on its
// first axis, the f_n concentration statistic, and grid sampling of step
// function families.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fr/calculus.hpp"
#include "fr/certificate.hpp"
#include "fr/core.hpp"
#include "fr/covering.hpp"
#include "fr/random.hpp"

namespace fr {

// Two-sided 99% Hoeffding radius for an empirical frequency over `trials` draws.
inline double confidence_radius(std::size_t trials) {
  return std::sqrt(std::log(100.0) / (2.0 * static_cast<double>(trials)));
}

inline void check_tuple(const FuzzyPredicate& phi, std::span<const Index> t) {
  for (Index a : t)
    if (a >= phi.size(0)) throw Error("tuple element " + std::to_string(a) + " not on axis '" + phi.axis(0).name + "'");
}

// Column averages of phi over a tuple of rows.
inline std::vector<double> column_averages(const FuzzyPredicate& phi, std::span<const Index> t) {
  std::vector<double> av(phi.size(1), 0.0);
  for (Index a : t)
    for (Index b = 0; b < av.size(); ++b) av[b] += phi(a, b);
  for (auto& x : av) x /= static_cast<double>(t.size());
  return av;
}

inline std::vector<double> column_expectations(const FuzzyPredicate& phi, const DiscreteMeasure& mu) {
  std::vector<double> e(phi.size(1), 0.0);
  for (Index a = 0; a < phi.size(0); ++a) {
    if (mu[a] == 0.0) continue;
    for (Index b = 0; b < e.size(); ++b) e[b] += mu[a] * phi(a, b);
  }
  return e;
}

inline double f_n_statistic(const FuzzyPredicate& phi, std::span<const Index> abar,
                            std::span<const Index> abar2) {
  phi.require_binary();
  if (abar.size() != abar2.size()) {
    throw Error("tuple lengths differ: " + std::to_string(abar.size()) + " vs " + std::to_string(abar2.size()));
  }
  if (abar.empty()) throw Error("tuples must be nonempty");
  check_tuple(phi, abar);
  check_tuple(phi, abar2);
  const auto u = column_averages(phi, abar), v = column_averages(phi, abar2);
  double worst = 0.0;
  for (std::size_t b = 0; b < u.size(); ++b) worst = std::max(worst, std::abs(u[b] - v[b]));
  return worst;
}

struct WorstColumn {
  double error = 0.0;
  Index column = 0;
};

inline WorstColumn worst_column_error(std::span<const double> averages, std::span<const double> expected) {
  WorstColumn w;
  for (std::size_t b = 0; b < averages.size(); ++b) {
    const double d = std::abs(averages[b] - expected[b]);
    if (d > w.error) w = {d, b};
  }
  return w;
}

inline void check_sampling_inputs(const FuzzyPredicate& phi, const DiscreteMeasure& mu) {
  phi.require_binary();
  if (!(mu.axis() == phi.axis(0))) {
    throw Error("measure is on axis '" + mu.axis().name + "', predicate rows are '" + phi.axis(0).name + "'");
  }
}

// ---------------------------------------------------------------------------
// Tail of f_n and the approximation probability
// ---------------------------------------------------------------------------

inline Certificate hoeffding_tail_check(const FuzzyPredicate& phi, const DiscreteMeasure& mu, long n,
                                        double eps, std::size_t trials, std::uint64_t seed,
                                        std::size_t cover_samples = 200) {
  check_sampling_inputs(phi, mu);
  if (n < 1) throw Error("tail check needs n >= 1");
  if (!(eps > 0.0)) throw Error("tail check needs eps > 0");
  if (trials < 1) throw Error("tail check needs at least one trial");

  const MeasureSampler sampler(mu);
  std::vector<unsigned char> hit(trials, 0);
  parallel_for(trials, [&](std::size_t t) {
    auto eng = trial_engine(seed, t);
    const auto x = sampler.tuple(eng, static_cast<std::size_t>(n));
    const auto y = sampler.tuple(eng, static_cast<std::size_t>(n));
    hit[t] = f_n_statistic(phi, x, y) > eps ? 1 : 0;
  });
  std::size_t count = 0;
  for (auto h : hit) count += h;
  const double freq = static_cast<double>(count) / static_cast<double>(trials);

  const auto cn = covering_number(phi, eps / 4, n, CoverDirection::Columns, CoverMode::Greedy,
                                  cover_samples, seed);
  const double decay = std::exp(-static_cast<double>(n) * eps * eps / 32.0);
  const double bound = 4.0 * static_cast<double>(cn.value) * decay;
  const double slack = confidence_radius(trials);

  const DiscreteMeasure mus[] = {mu};
  Certificate c = begin_certificate("tail-check", phi, mus);
  c.seed = seed;
  c.parameters = {{"n", n}, {"eps", eps}, {"trials", trials}, {"cover_samples", cover_samples}};
  c.witness = {{"exceedances", count}};
  c.statistics = {{"empirical_tail", freq},
                  {"covering_number", cn.value},
                  {"covering_exact", cn.exact},
                  {"covering_subsets", cn.subsets_examined},
                  {"decay", decay},
                  {"bound", bound},
                  {"slack", slack}};
  c.add_check("tail", "P(f_n > eps) <= 4 N_{eps/4}(n) exp(-n eps^2/32) + slack", freq,
              Relation::AtMost, bound, slack);
  if (bound >= 1.0) c.notes.push_back("bound is at least 1; check holds vacuously");
  return c;
}

inline Certificate theta_witness_set(const FuzzyPredicate& phi, const DiscreteMeasure& mu, long n,
                                     double eps, std::size_t samples, std::uint64_t seed,
                                     std::size_t cover_samples = 200) {
  check_sampling_inputs(phi, mu);
  if (n < 1) throw Error("witness probability needs n >= 1");
  if (!(eps > 0.0)) throw Error("witness probability needs eps > 0");
  if (samples < 1) throw Error("witness probability needs at least one sample");

  const auto expected = column_expectations(phi, mu);
  const MeasureSampler sampler(mu);
  std::vector<unsigned char> good(samples, 0);
  parallel_for(samples, [&](std::size_t t) {
    auto eng = trial_engine(seed, t);
    const auto x = sampler.tuple(eng, static_cast<std::size_t>(n));
    good[t] = worst_column_error(column_averages(phi, x), expected).error <= eps ? 1 : 0;
  });
  std::size_t count = 0;
  for (auto g : good) count += g;
  const double estimate = static_cast<double>(count) / static_cast<double>(samples);

  const auto cn = covering_number(phi, eps / 12, n, CoverDirection::Columns, CoverMode::Greedy,
                                  cover_samples, seed);
  const double bound =
      1.0 - 8.0 * static_cast<double>(cn.value) * std::exp(-static_cast<double>(n) * eps * eps / 96.0);
  const double slack = confidence_radius(samples);

  const DiscreteMeasure mus[] = {mu};
  Certificate c = begin_certificate("approx-probability", phi, mus);
  c.seed = seed;
  c.parameters = {{"n", n}, {"eps", eps}, {"samples", samples}, {"cover_samples", cover_samples}};
  c.witness = {{"approximations", count}};
  c.statistics = {{"estimate", estimate},
                  {"covering_number", cn.value},
                  {"bound", bound},
                  {"slack", slack},
                  {"sufficient_n", static_cast<long>(std::ceil(9.0 / (2.0 * eps * eps)))}};
  c.add_check("probability", "P(tuple is an eps-approximation) >= 1 - 8 N_{eps/12}(n) exp(-n eps^2/96) - slack",
              estimate, Relation::AtLeast, bound, slack);
  if (bound <= 0.0) c.notes.push_back("bound is at most 0; check holds vacuously");
  return c;
}

// Smallest n >= ceil(9/(2 eps^2)) for which the approximation probability bound is positive.
inline long approximation_size(const FuzzyPredicate& phi, double eps, std::size_t cover_samples = 200,
                               std::uint64_t seed = 0) {
  phi.require_binary();
  if (!(eps > 0.0)) throw Error("approximation size needs eps > 0");
  const long n0 = static_cast<long>(std::ceil(9.0 / (2.0 * eps * eps)));
  const long rows = static_cast<long>(phi.size(0));
  auto positive = [&](long n, std::size_t N) {
    return 8.0 * static_cast<double>(N) * std::exp(-static_cast<double>(n) * eps * eps / 96.0) < 1.0;
  };
  long n = n0;
  for (; n < rows; ++n) {
    const auto N = covering_number(phi, eps / 12, n, CoverDirection::Columns, CoverMode::Greedy,
                                   cover_samples, seed).value;
    if (positive(n, N)) return n;
  }
  // Beyond the axis size the covering number no longer changes.
  const auto N = covering_number(phi, eps / 12, std::max(n, rows), CoverDirection::Columns,
                                 CoverMode::Greedy, cover_samples, seed).value;
  const double need = 96.0 * std::log(8.0 * static_cast<double>(N)) / (eps * eps);
  n = std::max(n, static_cast<long>(std::floor(need)) + 1);
  while (!positive(n, N)) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Approximation witnesses
// ---------------------------------------------------------------------------

struct ApproximationWitness {
  bool found = false;
  std::vector<Index> tuple;      // the witness, or the best tuple seen
  double eps = 0.0;
  double error = 0.0;            // worst-column error of `tuple`
  Index worst_column = 0;
  std::size_t attempts = 0;
  std::optional<std::string> warning;

  bool valid() const { return error <= eps; }
};

inline ApproximationWitness verify_approximation(const FuzzyPredicate& phi, const DiscreteMeasure& mu,
                                                 std::vector<Index> tuple, double eps) {
  check_sampling_inputs(phi, mu);
  if (tuple.empty()) throw Error("approximation tuple is empty");
  check_tuple(phi, tuple);
  ApproximationWitness w;
  w.eps = eps;
  const auto wc = worst_column_error(column_averages(phi, tuple), column_expectations(phi, mu));
  w.error = wc.error;
  w.worst_column = wc.column;
  w.found = w.valid();
  w.tuple = std::move(tuple);
  return w;
}

inline ApproximationWitness eps_approximation_search(const FuzzyPredicate& phi, const DiscreteMeasure& mu,
                                                     double eps, long n, std::size_t max_attempts,
                                                     std::uint64_t seed) {
  check_sampling_inputs(phi, mu);
  if (n < 1) throw Error("approximation search needs n >= 1");
  if (!(eps > 0.0)) throw Error("approximation search needs eps > 0");
  const auto expected = column_expectations(phi, mu);
  const MeasureSampler sampler(mu);
  ApproximationWitness best;
  best.eps = eps;
  best.error = 2.0;
  for (std::size_t t = 0; t < max_attempts; ++t) {
    auto eng = trial_engine(seed, t);
    auto x = sampler.tuple(eng, static_cast<std::size_t>(n));
    const auto wc = worst_column_error(column_averages(phi, x), expected);
    if (wc.error < best.error) {
      best.error = wc.error;
      best.worst_column = wc.column;
      best.tuple = std::move(x);
    }
    best.attempts = t + 1;
    if (best.error <= eps) break;
  }
  // Re-verify the returned tuple from scratch.
  if (!best.tuple.empty()) {
    const auto attempts = best.attempts;
    best = verify_approximation(phi, mu, std::move(best.tuple), eps);
    best.attempts = attempts;
  }
  const long sufficient = static_cast<long>(std::ceil(9.0 / (2.0 * eps * eps)));
  if (n < sufficient) {
    best.warning = "n = " + std::to_string(n) + " is below the sufficient size " + std::to_string(sufficient);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Nets
// ---------------------------------------------------------------------------

enum class NetStrategy { Random, Greedy };

inline const char* to_string(NetStrategy s) { return s == NetStrategy::Random ? "random" : "greedy"; }
inline NetStrategy parse_net_strategy(const std::string& s) {
  if (s == "random") return NetStrategy::Random;
  if (s == "greedy") return NetStrategy::Greedy;
  throw Error("unknown net strategy '" + s + "'");
}

struct FuzzyNet {
  std::vector<Index> elements;
  double r = 0.0, s = 1.0, eps = 0.0;
  IndexSet heavy;                     // columns the net must hit
  IndexSet violations;                // heavy columns not hit
  bool feasible = true;
  std::optional<Index> infeasible_column;
  std::size_t rounds = 0;

  bool valid() const { return feasible && violations.empty(); }
};

// Columns b with mu{a : phi(a;b) >= s} >= eps.
inline IndexSet heavy_columns(const FuzzyPredicate& phi, const DiscreteMeasure& mu, double s, double eps) {
  check_sampling_inputs(phi, mu);
  IndexSet h;
  for (Index b = 0; b < phi.size(1); ++b) {
    double m = 0.0;
    for (Index a = 0; a < phi.size(0); ++a)
      if (phi(a, b) >= s) m += mu[a];
    if (m >= eps - kSumTol) h.push_back(b);
  }
  return h;
}

inline IndexSet net_violations(const FuzzyPredicate& phi, const IndexSet& heavy,
                               std::span<const Index> elements, double r) {
  IndexSet v;
  for (Index b : heavy) {
    bool hit = false;
    for (Index a : elements)
      if (phi(a, b) > r) {
        hit = true;
        break;
      }
    if (!hit) v.push_back(b);
  }
  return v;
}

inline FuzzyNet verify_net(const FuzzyPredicate& phi, const DiscreteMeasure& mu,
                           std::vector<Index> elements, double eps, double r, double s) {
  check_tuple(phi, elements);
  FuzzyNet net;
  net.r = r;
  net.s = s;
  net.eps = eps;
  net.heavy = heavy_columns(phi, mu, s, eps);
  net.violations = net_violations(phi, net.heavy, elements, r);
  net.elements = std::move(elements);
  return net;
}

inline FuzzyNet eps_net_search(const FuzzyPredicate& phi, const DiscreteMeasure& mu, double eps, double r,
                               double s, NetStrategy strategy, std::uint64_t seed,
                               std::size_t max_rounds = 16) {
  check_sampling_inputs(phi, mu);
  if (!(0.0 <= r && r < s && s <= 1.0)) throw Error("net thresholds need 0 <= r < s <= 1");
  if (!(eps > 0.0)) throw Error("net search needs eps > 0");
  const IndexSet heavy = heavy_columns(phi, mu, s, eps);

  // A heavy column nobody hits makes every strategy fail.
  for (Index b : heavy) {
    bool any = false;
    for (Index a = 0; a < phi.size(0) && !any; ++a) any = phi(a, b) > r;
    if (!any) {
      FuzzyNet net;
      net.r = r;
      net.s = s;
      net.eps = eps;
      net.heavy = heavy;
      net.feasible = false;
      net.infeasible_column = b;
      net.violations = {b};
      return net;
    }
  }

  if (strategy == NetStrategy::Greedy) {
    std::vector<Index> chosen;
    std::vector<bool> open(heavy.size(), true);
    std::size_t remaining = heavy.size();
    std::size_t rounds = 0;
    while (remaining > 0) {
      ++rounds;
      Index best = 0;
      std::size_t best_hits = 0;
      for (Index a = 0; a < phi.size(0); ++a) {
        std::size_t hits = 0;
        for (std::size_t k = 0; k < heavy.size(); ++k)
          if (open[k] && phi(a, heavy[k]) > r) ++hits;
        if (hits > best_hits) {
          best_hits = hits;
          best = a;
        }
      }
      chosen.push_back(best);
      for (std::size_t k = 0; k < heavy.size(); ++k)
        if (open[k] && phi(best, heavy[k]) > r) {
          open[k] = false;
          --remaining;
        }
    }
    FuzzyNet net = verify_net(phi, mu, std::move(chosen), eps, r, s);
    net.rounds = rounds;
    return net;
  }

  // Random: sample N elements, doubling N after each failed attempt.
  const MeasureSampler sampler(mu);
  std::size_t N = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 / eps)));
  FuzzyNet last;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    auto eng = trial_engine(seed, round);
    auto sample = sampler.tuple(eng, N);
    std::sort(sample.begin(), sample.end());
    sample.erase(std::unique(sample.begin(), sample.end()), sample.end());
    last = verify_net(phi, mu, std::move(sample), eps, r, s);
    last.rounds = round + 1;
    if (last.valid()) return last;
    N *= 2;
  }
  return last;
}

// ---------------------------------------------------------------------------
// Step function families on [0,1]
// ---------------------------------------------------------------------------

struct StepMember {
  std::string label;
  std::vector<double> values;  // one per piece
};

// Piece p is [t_p, t_{p+1}); the last piece includes 1.
struct StepFunctionFamily {
  std::vector<double> breakpoints;  // t_0 = 0 < t_1 < ... < t_P = 1
  std::vector<StepMember> members;

  StepFunctionFamily() = default;
  StepFunctionFamily(std::vector<double> bp, std::vector<StepMember> m)
      : breakpoints(std::move(bp)), members(std::move(m)) {
    validate();
  }

  std::size_t num_pieces() const { return breakpoints.size() - 1; }
  double length(std::size_t p) const { return breakpoints[p + 1] - breakpoints[p]; }

  void validate() const {
    if (breakpoints.size() < 2) throw Error("step family needs at least breakpoints 0 and 1");
    if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0) throw Error("breakpoints must start at 0 and end at 1");
    for (std::size_t i = 1; i < breakpoints.size(); ++i)
      if (!(breakpoints[i] > breakpoints[i - 1])) throw Error("breakpoints must be strictly increasing");
    for (const auto& m : members) {
      if (m.values.size() != num_pieces()) {
        throw Error("member '" + m.label + "' has " + std::to_string(m.values.size()) + " values, expected " +
                    std::to_string(num_pieces()));
      }
      for (double v : m.values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error("member '" + m.label + "' has a value outside [0,1]");
    }
  }

  // Piece containing t.
  std::size_t piece_of(double t) const {
    auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
    const auto p = static_cast<std::size_t>(it - breakpoints.begin());
    return std::min(p == 0 ? 0 : p - 1, num_pieces() - 1);
  }
};

// Longest chain t_1 < t_1' < ... < t_N < t_N' with |f(t_i) - f(t_i')| > eps/2.
// Consecutive pairs may sit in the same piece (t_i' < t_{i+1} inside one interval),
// so the scan restarts at the piece where the previous pair ended.
inline std::size_t oscillation_pair_count(std::span<const double> values, double eps) {
  if (!(eps > 0.0)) throw Error("pair count needs eps > 0");
  std::size_t count = 0, start = 0;
  while (start < values.size()) {
    double lo = values[start], hi = values[start];
    std::size_t q = start + 1;
    for (; q < values.size(); ++q) {
      if (std::abs(values[q] - lo) > eps / 2 || std::abs(values[q] - hi) > eps / 2) break;
      lo = std::min(lo, values[q]);
      hi = std::max(hi, values[q]);
    }
    if (q >= values.size()) break;
    ++count;
    start = q;
  }
  return count;
}

// Exact: is k/M >= t? Uses the rounding error of M*t so the comparison is not
// fooled when M*t rounds onto an integer.
inline bool grid_point_at_or_after(std::size_t k, std::size_t M, double t) {
  const double m = static_cast<double>(M);
  const double prod = m * t;
  const double err = std::fma(m, t, -prod);
  const double kd = static_cast<double>(k);
  if (kd != prod) return kd > prod;
  return err <= 0.0;
}

inline double step_integral(const StepFunctionFamily& F, std::span<const double> values) {
  double s = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) s += values[p] * F.length(p);
  return s;
}

// Number of grid points k/M (0 <= k < M) in each piece.
inline std::vector<std::size_t> grid_counts(const StepFunctionFamily& F, std::size_t M) {
  std::vector<std::size_t> counts(F.num_pieces(), 0);
  std::size_t p = 0;
  for (std::size_t k = 0; k < M; ++k) {
    while (p + 1 < F.num_pieces() && grid_point_at_or_after(k, M, F.breakpoints[p + 1])) ++p;
    ++counts[p];
  }
  return counts;
}

inline double grid_average(std::span<const std::size_t> counts, std::span<const double> values, std::size_t M) {
  double s = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) s += static_cast<double>(counts[p]) * values[p];
  return s / static_cast<double>(M);
}

inline json family_json(const StepFunctionFamily& F) {
  json ms = json::array();
  for (const auto& m : F.members) ms.push_back({{"label", m.label}, {"values", m.values}});
  return json{{"breakpoints", F.breakpoints}, {"members", ms}};
}

inline StepFunctionFamily family_from_json(const json& j) {
  std::vector<StepMember> ms;
  std::size_t i = 0;
  for (const auto& m : j.at("members")) {
    ms.push_back({m.value("label", "b" + std::to_string(i)), m.at("values").get<std::vector<double>>()});
    ++i;
  }
  return StepFunctionFamily(j.at("breakpoints").get<std::vector<double>>(), std::move(ms));
}

inline Certificate grid_approximation_check(const StepFunctionFamily& F, double eps) {
  if (!(eps > 0.0)) throw Error("grid approximation needs eps > 0");
  F.validate();
  std::size_t N = 0;
  std::vector<std::size_t> pairs;
  for (const auto& m : F.members) {
    pairs.push_back(oscillation_pair_count(m.values, eps));
    N = std::max(N, pairs.back());
  }
  const std::size_t M = static_cast<std::size_t>(std::floor(2.0 * static_cast<double>(N) / eps)) + 1;
  const auto counts = grid_counts(F, M);

  double worst = 0.0;
  json per = json::array();
  for (std::size_t i = 0; i < F.members.size(); ++i) {
    const auto& m = F.members[i];
    const double integral = step_integral(F, m.values);
    const double average = grid_average(counts, m.values, M);
    const double err = std::abs(average - integral);
    worst = std::max(worst, err);
    per.push_back({{"label", m.label}, {"pairs", pairs[i]}, {"integral", integral}, {"grid_average", average}, {"error", err}});
  }

  Certificate c;
  c.pipeline = "grid-approx";
  Digest d;
  d.add(std::string("family"));
  for (double t : F.breakpoints) d.add(t);
  for (const auto& m : F.members) {
    d.add(m.label);
    for (double v : m.values) d.add(v);
  }
  c.input_digest = d.hex();
  c.instance = {{"family", family_json(F)}};
  c.parameters = {{"eps", eps}};
  c.witness = {{"N", N}, {"M", M}};
  c.statistics = {{"members", per}};
  c.add_check("grid-error", "max_b |Av_{k<M} f_b(k/M) - int_0^1 f_b| <= eps with M = floor(2N/eps)+1", worst,
              Relation::AtMost, eps);
  return c;
}

struct AverageMeasureResult {
  std::vector<double> per_member;
  double aggregate = 0.0;
};

// Exact integrals of each member, and their weighted combination (uniform when weights is empty).
inline AverageMeasureResult average_measure_expectation(const StepFunctionFamily& F,
                                                        std::span<const double> weights = {}) {
  F.validate();
  AverageMeasureResult r;
  if (F.members.empty()) return r;
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(F.members.size(), 1.0 / static_cast<double>(F.members.size()));
  if (w.size() != F.members.size()) throw Error("one weight per member required");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw Error("member weights must be nonnegative");
    total += x;
  }
  if (std::abs(total - 1.0) > kSumTol) throw Error("member weights must sum to 1");
  for (std::size_t i = 0; i < F.members.size(); ++i) {
    r.per_member.push_back(step_integral(F, F.members[i].values));
    r.aggregate += w[i] * r.per_member.back();
  }
  return r;
}

}  // namespace fr
