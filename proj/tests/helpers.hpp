#pragma once

#include <random>
#include <vector>

#include "fr/fr.hpp"

namespace frt {

inline std::vector<fr::DiscreteMeasure> uniform_measures(const fr::FuzzyPredicate& phi) {
  std::vector<fr::DiscreteMeasure> mus;
  for (const auto& a : phi.axes()) mus.push_back(fr::DiscreteMeasure::uniform(a));
  return mus;
}

inline fr::DiscreteMeasure random_measure(const fr::Axis& axis, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(axis.size);
  for (auto& x : w) x = u(eng);
  return fr::DiscreteMeasure::normalized(axis, w);
}

inline fr::FuzzyPredicate random_matrix(std::size_t r, std::size_t c, std::mt19937_64& eng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = u(eng);
  return fr::FuzzyPredicate::matrix(r, c, std::move(v));
}

// Plain double sum, the reference for every integral below.
inline double brute_expectation(const fr::FuzzyPredicate& phi, const fr::DiscreteMeasure& mu,
                                const fr::DiscreteMeasure& nu) {
  double s = 0.0;
  for (std::size_t i = 0; i < phi.size(0); ++i)
    for (std::size_t j = 0; j < phi.size(1); ++j) s += mu[i] * nu[j] * phi(i, j);
  return s;
}

// Oscillation by direct enumeration of a 2-D rectangle.
inline double brute_osc(const fr::FuzzyPredicate& phi, const fr::IndexSet& A, const fr::IndexSet& B) {
  double lo = 1.0, hi = 0.0;
  for (auto a : A)
    for (auto b : B) {
      lo = std::min(lo, phi(a, b));
      hi = std::max(hi, phi(a, b));
    }
  return hi - lo;
}

}  // namespace frt
