#pragma once

// Finite fuzzy predicates, discrete measures and partitions of unity.
//
// Everything here is the finite restriction of the continuous-logic objects:
// an axis is a named finite index set, a predicate is a dense [0,1]-valued
// tensor over a product of axes, a measure is a probability vector on one axis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fr {

// Absolute tolerance for probability sums and sandwich/bound comparisons.
inline constexpr double kSumTol = 1e-9;
// Strict-positivity cutoff: support(w) = {a : w(a) > kSupportTol}.
inline constexpr double kSupportTol = 1e-12;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Index = std::size_t;
using IndexSet = std::vector<Index>;

struct Axis {
  std::string name;
  std::size_t size = 0;

  friend bool operator==(const Axis&, const Axis&) = default;
};

// ---------------------------------------------------------------------------
// FuzzyPredicate
// ---------------------------------------------------------------------------

class FuzzyPredicate {
 public:
  FuzzyPredicate() = default;

  FuzzyPredicate(std::vector<Axis> axes, std::vector<double> values)
      : axes_(std::move(axes)), values_(std::move(values)) {
    if (axes_.empty()) throw Error("predicate needs at least one axis");
    std::size_t total = 1;
    for (const auto& ax : axes_) {
      if (ax.size == 0) throw Error("axis '" + ax.name + "' is empty");
      total *= ax.size;
    }
    if (values_.size() != total) {
      throw Error("predicate has " + std::to_string(values_.size()) +
                  " entries, expected " + std::to_string(total));
    }
    for (std::size_t k = 0; k < values_.size(); ++k) {
      const double v = values_[k];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error("predicate entry " + std::to_string(k) + " = " +
                    std::to_string(v) + " is outside [0,1]");
      }
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t i = axes_.size() - 1; i > 0; --i) {
      strides_[i - 1] = strides_[i] * axes_[i].size;
    }
  }

  // Binary predicate from a row-major matrix.
  static FuzzyPredicate matrix(std::size_t rows, std::size_t cols,
                               std::vector<double> values,
                               std::string row_axis = "x",
                               std::string col_axis = "y") {
    return FuzzyPredicate({{std::move(row_axis), rows}, {std::move(col_axis), cols}},
                          std::move(values));
  }

  template <typename F>
  static FuzzyPredicate from_function(std::size_t rows, std::size_t cols, F&& f,
                                      std::string row_axis = "x",
                                      std::string col_axis = "y") {
    std::vector<double> v(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) v[i * cols + j] = f(i, j);
    return matrix(rows, cols, std::move(v), std::move(row_axis), std::move(col_axis));
  }

  std::size_t arity() const { return axes_.size(); }
  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(std::size_t i) const { return axes_.at(i); }
  std::size_t size(std::size_t i) const { return axes_.at(i).size; }
  const std::vector<double>& values() const { return values_; }
  std::size_t stride(std::size_t i) const { return strides_[i]; }
  std::size_t num_entries() const { return values_.size(); }

  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * strides_[0] + j];
  }
  double at(std::span<const Index> idx) const { return values_[flat(idx)]; }
  double at_flat(std::size_t k) const { return values_[k]; }

  std::size_t flat(std::span<const Index> idx) const {
    std::size_t k = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) k += idx[i] * strides_[i];
    return k;
  }

  std::vector<Index> unflat(std::size_t k) const {
    std::vector<Index> idx(axes_.size());
    for (std::size_t i = 0; i < axes_.size(); ++i) {
      idx[i] = k / strides_[i];
      k %= strides_[i];
    }
    return idx;
  }

  // Row b-column as a vector over the first axis (binary only).
  std::vector<double> column(std::size_t j) const {
    require_binary();
    std::vector<double> c(axes_[0].size);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = (*this)(i, j);
    return c;
  }
  std::vector<double> row(std::size_t i) const {
    require_binary();
    return {values_.begin() + i * strides_[0], values_.begin() + (i + 1) * strides_[0]};
  }

  double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
  double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

  void require_binary() const {
    if (axes_.size() != 2) {
      throw Error("operation needs a binary predicate, got arity " +
                  std::to_string(axes_.size()));
    }
  }

 private:
  std::vector<Axis> axes_;
  std::vector<double> values_;
  std::vector<std::size_t> strides_;
};

inline FuzzyPredicate transpose(const FuzzyPredicate& phi) {
  phi.require_binary();
  const std::size_t r = phi.size(0), c = phi.size(1);
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = phi(i, j);
  return FuzzyPredicate({phi.axis(1), phi.axis(0)}, std::move(v));
}

// Applies g pointwise; g must map [0,1] into [0,1].
template <typename G>
FuzzyPredicate map_values(const FuzzyPredicate& phi, G&& g) {
  std::vector<double> v(phi.values());
  for (auto& x : v) x = g(x);
  return FuzzyPredicate(phi.axes(), std::move(v));
}

// Calls f(index_tuple, flat_index) for every entry in row-major order.
template <typename F>
void for_each_index(const std::vector<Axis>& axes, F&& f) {
  std::vector<Index> idx(axes.size(), 0);
  std::size_t k = 0;
  while (true) {
    f(std::span<const Index>(idx), k);
    ++k;
    std::size_t i = axes.size();
    while (i > 0) {
      --i;
      if (++idx[i] < axes[i].size) break;
      idx[i] = 0;
      if (i == 0) return;
    }
    if (axes.empty()) return;
  }
}

// ---------------------------------------------------------------------------
// DiscreteMeasure
// ---------------------------------------------------------------------------

class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  DiscreteMeasure(Axis axis, std::vector<double> weights)
      : axis_(std::move(axis)), weights_(std::move(weights)) {
    if (weights_.size() != axis_.size) {
      throw Error("measure on axis '" + axis_.name + "' has " +
                  std::to_string(weights_.size()) + " weights, axis size is " +
                  std::to_string(axis_.size));
    }
    double s = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error("measure on axis '" + axis_.name + "' has a negative or non-finite weight");
      }
      s += w;
    }
    if (std::abs(s - 1.0) > kSumTol) {
      throw Error("measure on axis '" + axis_.name + "' sums to " + std::to_string(s));
    }
  }

  static DiscreteMeasure uniform(Axis axis) {
    std::vector<double> w(axis.size, 1.0 / static_cast<double>(axis.size));
    return DiscreteMeasure(std::move(axis), std::move(w));
  }
  static DiscreteMeasure uniform(std::size_t n, std::string name = "x") {
    return uniform(Axis{std::move(name), n});
  }
  static DiscreteMeasure dirac(Axis axis, Index a) {
    std::vector<double> w(axis.size, 0.0);
    w.at(a) = 1.0;
    return DiscreteMeasure(std::move(axis), std::move(w));
  }
  // Normalizes arbitrary nonnegative masses; throws if the total is not positive.
  static DiscreteMeasure normalized(Axis axis, std::vector<double> mass) {
    double s = 0.0;
    for (double w : mass) s += w;
    if (!(s > kSupportTol)) throw Error("cannot normalize zero mass on axis '" + axis.name + "'");
    for (auto& w : mass) w /= s;
    return DiscreteMeasure(std::move(axis), std::move(mass));
  }

  const Axis& axis() const { return axis_; }
  std::size_t size() const { return weights_.size(); }
  const std::vector<double>& weights() const { return weights_; }
  double operator[](Index a) const { return weights_[a]; }

  double mass(std::span<const Index> subset) const {
    double s = 0.0;
    for (Index a : subset) s += weights_[a];
    return s;
  }
  // Integral of a weight function against the measure.
  double integrate(std::span<const double> f) const {
    double s = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) s += f[a] * weights_[a];
    return s;
  }

  IndexSet support() const {
    IndexSet s;
    for (Index a = 0; a < weights_.size(); ++a)
      if (weights_[a] > kSupportTol) s.push_back(a);
    return s;
  }

  DiscreteMeasure rebind(Axis axis) const {
    if (axis.size != axis_.size) throw Error("cannot rebind measure to axis '" + axis.name + "'");
    DiscreteMeasure m = *this;
    m.axis_ = std::move(axis);
    return m;
  }

 private:
  Axis axis_;
  std::vector<double> weights_;
};

// Checks one measure per axis with matching axis identity.
inline void check_measures(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus) {
  if (mus.size() != phi.arity()) {
    throw Error("expected " + std::to_string(phi.arity()) + " measures, got " +
                std::to_string(mus.size()));
  }
  for (std::size_t i = 0; i < mus.size(); ++i) {
    if (!(mus[i].axis() == phi.axis(i))) {
      throw Error("measure " + std::to_string(i) + " is on axis '" + mus[i].axis().name +
                  "' (size " + std::to_string(mus[i].size()) + "), predicate axis is '" +
                  phi.axis(i).name + "' (size " + std::to_string(phi.size(i)) + ")");
    }
  }
}

// Product weight of an index tuple.
inline double product_weight(std::span<const DiscreteMeasure> mus, std::span<const Index> idx) {
  double w = 1.0;
  for (std::size_t i = 0; i < idx.size(); ++i) w *= mus[i][idx[i]];
  return w;
}

// ---------------------------------------------------------------------------
// Partitions of unity
// ---------------------------------------------------------------------------

enum class PartitionMode { Definable, Constructible };

inline const char* to_string(PartitionMode m) {
  return m == PartitionMode::Definable ? "definable" : "constructible";
}

inline PartitionMode parse_mode(const std::string& s) {
  if (s == "definable") return PartitionMode::Definable;
  if (s == "constructible") return PartitionMode::Constructible;
  throw Error("unknown partition mode '" + s + "'");
}

class PartitionOfUnity {
 public:
  PartitionOfUnity() = default;

  PartitionOfUnity(Axis axis, std::vector<std::vector<double>> pieces, PartitionMode mode)
      : axis_(std::move(axis)), pieces_(std::move(pieces)), mode_(mode) {
    if (pieces_.empty()) throw Error("partition of unity on '" + axis_.name + "' has no pieces");
    for (const auto& p : pieces_) {
      if (p.size() != axis_.size) throw Error("piece size does not match axis '" + axis_.name + "'");
      for (double w : p) {
        if (!(w >= 0.0 && w <= 1.0 + kSumTol)) throw Error("piece weight outside [0,1]");
        if (mode_ == PartitionMode::Constructible && w != 0.0 && w != 1.0) {
          throw Error("constructible piece on '" + axis_.name + "' has a fractional weight");
        }
      }
    }
    for (Index a = 0; a < axis_.size; ++a) {
      double s = 0.0;
      for (const auto& p : pieces_) s += p[a];
      if (std::abs(s - 1.0) > kSumTol) {
        throw Error("pieces on '" + axis_.name + "' sum to " + std::to_string(s) +
                    " at element " + std::to_string(a));
      }
    }
  }

  static PartitionOfUnity trivial(Axis axis) {
    std::vector<std::vector<double>> p{std::vector<double>(axis.size, 1.0)};
    return PartitionOfUnity(std::move(axis), std::move(p), PartitionMode::Constructible);
  }

  // Constructible partition from disjoint index sets covering the axis.
  static PartitionOfUnity from_sets(Axis axis, const std::vector<IndexSet>& sets) {
    std::vector<std::vector<double>> p;
    for (const auto& s : sets) {
      std::vector<double> w(axis.size, 0.0);
      for (Index a : s) w.at(a) = 1.0;
      p.push_back(std::move(w));
    }
    return PartitionOfUnity(std::move(axis), std::move(p), PartitionMode::Constructible);
  }

  const Axis& axis() const { return axis_; }
  PartitionMode mode() const { return mode_; }
  std::size_t num_pieces() const { return pieces_.size(); }
  const std::vector<std::vector<double>>& pieces() const { return pieces_; }
  const std::vector<double>& piece(std::size_t k) const { return pieces_.at(k); }

  IndexSet support(std::size_t k) const {
    IndexSet s;
    for (Index a = 0; a < axis_.size; ++a)
      if (pieces_[k][a] > kSupportTol) s.push_back(a);
    return s;
  }

  // For each element, the pieces with positive weight there.
  std::vector<std::vector<std::pair<std::size_t, double>>> memberships() const {
    std::vector<std::vector<std::pair<std::size_t, double>>> m(axis_.size);
    for (std::size_t k = 0; k < pieces_.size(); ++k)
      for (Index a = 0; a < axis_.size; ++a)
        if (pieces_[k][a] > kSupportTol) m[a].emplace_back(k, pieces_[k][a]);
    return m;
  }

 private:
  Axis axis_;
  std::vector<std::vector<double>> pieces_;
  PartitionMode mode_ = PartitionMode::Constructible;
};

// Product of per-axis partitions of unity. Cells are index tuples into the factors.
class GridPartition {
 public:
  GridPartition() = default;
  explicit GridPartition(std::vector<PartitionOfUnity> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw Error("grid partition needs at least one factor");
  }

  std::size_t arity() const { return factors_.size(); }
  const std::vector<PartitionOfUnity>& factors() const { return factors_; }
  const PartitionOfUnity& factor(std::size_t i) const { return factors_.at(i); }

  std::size_t num_cells() const {
    std::size_t c = 1;
    for (const auto& f : factors_) c *= f.num_pieces();
    return c;
  }

  bool constructible() const {
    return std::all_of(factors_.begin(), factors_.end(), [](const PartitionOfUnity& p) {
      return p.mode() == PartitionMode::Constructible;
    });
  }

  double cell_weight(std::span<const std::size_t> cell, std::span<const Index> point) const {
    double w = 1.0;
    for (std::size_t i = 0; i < factors_.size(); ++i) w *= factors_[i].piece(cell[i])[point[i]];
    return w;
  }

  void check_covers(const FuzzyPredicate& phi) const {
    if (phi.arity() != arity()) throw Error("grid arity does not match predicate arity");
    for (std::size_t i = 0; i < arity(); ++i) {
      if (!(factors_[i].axis() == phi.axis(i))) {
        throw Error("grid factor " + std::to_string(i) + " is on axis '" + factors_[i].axis().name +
                    "', predicate axis is '" + phi.axis(i).name + "'");
      }
    }
  }

 private:
  std::vector<PartitionOfUnity> factors_;
};

// Per-cell aggregate over the points in a cell's support.
struct CellStats {
  std::vector<std::size_t> cell;  // factor piece per axis
  double mass = 0.0;              // integral of the cell weight against the product measure
  double min_value = 1.0;         // over the support of the cell
  double max_value = 0.0;
  double weighted_value = 0.0;    // integral of cell weight times phi
};

// Enumerates, sparsely, every grid cell with nonempty support and calls
// visit(cell, point, cell_weight, point_weight) for each point in its support.
template <typename Visit>
void for_each_cell_point(const GridPartition& grid, std::span<const DiscreteMeasure> mus,
                         Visit&& visit) {
  const std::size_t n = grid.arity();
  std::vector<std::vector<std::vector<std::pair<std::size_t, double>>>> mem(n);
  std::vector<Axis> axes;
  for (std::size_t i = 0; i < n; ++i) {
    mem[i] = grid.factor(i).memberships();
    axes.push_back(grid.factor(i).axis());
  }
  std::vector<std::size_t> cell(n);
  for_each_index(axes, [&](std::span<const Index> pt, std::size_t) {
    const double pw = product_weight(mus, pt);
    // odometer over membership lists
    std::vector<std::size_t> pos(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      if (mem[i][pt[i]].empty()) return;
    while (true) {
      double w = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        cell[i] = mem[i][pt[i]][pos[i]].first;
        w *= mem[i][pt[i]][pos[i]].second;
      }
      visit(std::span<const std::size_t>(cell), pt, w, pw);
      std::size_t i = n;
      bool done = true;
      while (i > 0) {
        --i;
        if (++pos[i] < mem[i][pt[i]].size()) {
          done = false;
          break;
        }
        pos[i] = 0;
      }
      if (done) break;
    }
  });
}

// Flat key for a cell tuple (mixed radix over factor piece counts).
inline std::uint64_t cell_key(const GridPartition& grid, std::span<const std::size_t> cell) {
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < cell.size(); ++i) k = k * grid.factor(i).num_pieces() + cell[i];
  return k;
}

// Constructible rectangular partition: each cell is a product of per-axis index sets.
// Unlike a grid, the cells need not be all combinations of per-axis pieces.
struct RectCell {
  std::vector<IndexSet> sides;

  double mass(std::span<const DiscreteMeasure> mus) const {
    double m = 1.0;
    for (std::size_t i = 0; i < sides.size(); ++i) m *= mus[i].mass(sides[i]);
    return m;
  }
  bool empty() const {
    return std::any_of(sides.begin(), sides.end(), [](const IndexSet& s) { return s.empty(); });
  }
};

// Calls f(point) for every point of the product of the index sets.
template <typename F>
void for_each_in_product(std::span<const IndexSet> sides, F&& f) {
  const std::size_t n = sides.size();
  for (const auto& s : sides)
    if (s.empty()) return;
  std::vector<std::size_t> pos(n, 0);
  std::vector<Index> pt(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) pt[i] = sides[i][pos[i]];
    f(std::span<const Index>(pt));
    std::size_t i = n;
    while (i > 0) {
      --i;
      if (++pos[i] < sides[i].size()) break;
      pos[i] = 0;
      if (i == 0) return;
    }
    if (n == 0) return;
  }
}

}  // namespace fr
