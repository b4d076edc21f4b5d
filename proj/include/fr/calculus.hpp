#pragma once

// Integrals, Morley products, oscillation and localization of discrete measures.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "fr/core.hpp"

namespace fr {

// Integral of phi against the product of one measure per axis.
inline double expectation(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus) {
  check_measures(phi, mus);
  // Contract the last axis repeatedly.
  std::vector<double> cur(phi.values());
  for (std::size_t ax = phi.arity(); ax > 0; --ax) {
    const auto& w = mus[ax - 1].weights();
    const std::size_t inner = w.size();
    std::vector<double> next(cur.size() / inner, 0.0);
    for (std::size_t o = 0; o < next.size(); ++o) {
      double s = 0.0;
      for (std::size_t a = 0; a < inner; ++a) s += cur[o * inner + a] * w[a];
      next[o] = s;
    }
    cur.swap(next);
  }
  return cur[0];
}

inline double expectation(const FuzzyPredicate& phi, std::initializer_list<DiscreteMeasure> mus) {
  std::vector<DiscreteMeasure> v(mus);
  return expectation(phi, std::span<const DiscreteMeasure>(v));
}

// mu (x) nu applied to phi(x;y): the nu-integral of y -> int phi(x;y) dmu(x).
inline double morley_product(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                             const FuzzyPredicate& phi) {
  phi.require_binary();
  const DiscreteMeasure pair[] = {mu, nu};
  check_measures(phi, pair);
  double total = 0.0;
  for (Index b = 0; b < phi.size(1); ++b) {
    double fb = 0.0;
    for (Index a = 0; a < phi.size(0); ++a) fb += mu[a] * phi(a, b);
    total += nu[b] * fb;
  }
  return total;
}

// max - min of phi over the product of the given per-axis index sets.
inline double oscillation(const FuzzyPredicate& phi, std::span<const IndexSet> supports) {
  if (supports.size() != phi.arity()) {
    throw Error("oscillation needs " + std::to_string(phi.arity()) + " supports, got " +
                std::to_string(supports.size()));
  }
  for (std::size_t i = 0; i < supports.size(); ++i) {
    if (supports[i].empty()) {
      throw Error("empty support on axis '" + phi.axis(i).name + "'");
    }
    for (Index a : supports[i]) {
      if (a >= phi.size(i)) {
        throw Error("support element " + std::to_string(a) + " not on axis '" + phi.axis(i).name + "'");
      }
    }
  }
  double lo = 1.0, hi = 0.0;
  for_each_in_product(supports, [&](std::span<const Index> pt) {
    const double v = phi.at(pt);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  });
  return hi - lo;
}

inline bool is_homogeneous(const FuzzyPredicate& phi, std::span<const IndexSet> supports, double eps) {
  return oscillation(phi, supports) <= eps + kSumTol;
}

// A base measure reweighted by a density; normalizer = integral of the density.
struct Localization {
  DiscreteMeasure base;
  std::vector<double> density;
  double normalizer = 0.0;

  DiscreteMeasure measure() const {
    std::vector<double> w(base.size());
    for (std::size_t a = 0; a < w.size(); ++a) w[a] = density[a] * base[a] / normalizer;
    // Renormalize the rounding residue so the result is a valid measure.
    double s = 0.0;
    for (double x : w) s += x;
    for (auto& x : w) x /= s;
    return DiscreteMeasure(base.axis(), std::move(w));
  }
};

inline Localization make_localization(const DiscreteMeasure& mu, std::span<const double> theta) {
  if (theta.size() != mu.size()) {
    throw Error("density length does not match axis '" + mu.axis().name + "'");
  }
  for (double t : theta) {
    if (!(t >= 0.0 && t <= 1.0)) throw Error("localization density outside [0,1]");
  }
  Localization loc{mu, std::vector<double>(theta.begin(), theta.end()), mu.integrate(theta)};
  if (!(loc.normalizer > kSupportTol)) {
    throw Error("degenerate localization on axis '" + mu.axis().name + "': density has zero mass");
  }
  return loc;
}

inline DiscreteMeasure localize(const DiscreteMeasure& mu, std::span<const double> theta) {
  return make_localization(mu, theta).measure();
}

// Localization to the indicator of an index set.
inline DiscreteMeasure localize_to(const DiscreteMeasure& mu, std::span<const Index> subset) {
  std::vector<double> theta(mu.size(), 0.0);
  for (Index a : subset) theta.at(a) = 1.0;
  return localize(mu, theta);
}

// phi with its axes reordered: result(x_1..x_n) = phi(x_{sigma(1)}..x_{sigma(n)}).
inline FuzzyPredicate permute_arguments(const FuzzyPredicate& phi, std::span<const std::size_t> sigma) {
  const std::size_t n = phi.arity();
  if (sigma.size() != n) throw Error("permutation length does not match predicate arity");
  std::vector<bool> seen(n, false);
  for (std::size_t s : sigma) {
    if (s >= n || seen[s]) throw Error("argument is not a permutation");
    seen[s] = true;
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (!(phi.axis(i) == phi.axis(0))) throw Error("permuting arguments needs identical axes");
  }
  std::vector<double> v(phi.num_entries());
  std::vector<Index> src(n);
  for_each_index(phi.axes(), [&](std::span<const Index> idx, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) src[i] = idx[sigma[i]];
    v[k] = phi.at(src);
  });
  return FuzzyPredicate(phi.axes(), std::move(v));
}

// |E_{mu^n} phi - E_{mu^n} phi^sigma|; zero up to rounding for product measures.
inline double permutation_invariance_check(const FuzzyPredicate& phi, const DiscreteMeasure& mu,
                                           std::size_t n, std::span<const std::size_t> sigma) {
  if (phi.arity() != n) {
    throw Error("predicate arity " + std::to_string(phi.arity()) + " does not match n = " +
                std::to_string(n));
  }
  std::vector<DiscreteMeasure> mus(n, mu);
  const double lhs = expectation(phi, mus);
  const double rhs = expectation(permute_arguments(phi, sigma), mus);
  return std::abs(lhs - rhs);
}

}  // namespace fr
