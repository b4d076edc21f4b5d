#pragma once

// File formats, instance generators, and the pipeline runner shared by the
// command line tool and certificate replay.

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fr/calculus.hpp"
#include "fr/certificate.hpp"
#include "fr/core.hpp"
#include "fr/covering.hpp"
#include "fr/distal.hpp"
#include "fr/random.hpp"
#include "fr/regularity.hpp"
#include "fr/sampling.hpp"

namespace fr {

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

inline double parse_number(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw Error(where + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---------------------------------------------------------------------------
// Predicates
// ---------------------------------------------------------------------------

// Header "rowaxis\colaxis,<col labels>", then "<row label>,<values>".
inline std::string predicate_to_csv(const FuzzyPredicate& phi) {
  phi.require_binary();
  std::string out = phi.axis(0).name + "\\" + phi.axis(1).name;
  for (Index b = 0; b < phi.size(1); ++b) out += "," + std::to_string(b);
  out += "\n";
  for (Index a = 0; a < phi.size(0); ++a) {
    out += std::to_string(a);
    for (Index b = 0; b < phi.size(1); ++b) out += "," + format_number(phi(a, b));
    out += "\n";
  }
  return out;
}

inline FuzzyPredicate predicate_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) {
      header = split(line, ',');
      break;
    }
  }
  if (header.size() < 2) throw Error("CSV header needs at least one column label");
  std::string rname = "x", cname = "y";
  if (auto p = header[0].find('\\'); p != std::string::npos) {
    rname = header[0].substr(0, p);
    cname = header[0].substr(p + 1);
  }
  const std::size_t cols = header.size() - 1;
  std::vector<double> values;
  std::size_t rows = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != cols + 1) {
      throw Error("CSV line " + std::to_string(lineno) + " has " + std::to_string(cells.size() - 1) +
                  " values, expected " + std::to_string(cols));
    }
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const double v = parse_number(cells[k], "CSV line " + std::to_string(lineno));
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error("CSV line " + std::to_string(lineno) + " entry " + cells[k] + " is outside [0,1]");
      }
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw Error("CSV has no rows");
  return FuzzyPredicate::matrix(rows, cols, std::move(values), rname, cname);
}

namespace detail {

inline void flatten(const json& j, std::vector<std::size_t>& shape, std::size_t depth, std::vector<double>& out) {
  if (!j.is_array()) {
    if (!j.is_number()) throw Error("predicate values must be numbers");
    if (depth != shape.size() && !shape.empty()) throw Error("ragged predicate array");
    out.push_back(j.get<double>());
    return;
  }
  if (depth == shape.size()) shape.push_back(j.size());
  else if (shape[depth] != j.size()) throw Error("ragged predicate array");
  for (const auto& e : j) flatten(e, shape, depth + 1, out);
}

inline json nest(const std::vector<double>& v, const std::vector<Axis>& axes, std::size_t depth, std::size_t& k) {
  json a = json::array();
  for (std::size_t i = 0; i < axes[depth].size; ++i) {
    if (depth + 1 == axes.size()) a.push_back(v[k++]);
    else a.push_back(nest(v, axes, depth + 1, k));
  }
  return a;
}

}  // namespace detail

// {"axes":[{"name","size"} or "name"...], "values": nested arrays}
inline FuzzyPredicate predicate_from_nested_json(const json& j) {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  detail::flatten(j.at("values"), shape, 0, values);
  std::vector<Axis> axes;
  if (j.contains("axes")) {
    for (const auto& a : j.at("axes")) {
      if (!a.is_string()) {
        axes.push_back(axis_from_json(a));
        continue;
      }
      const std::size_t i = axes.size();
      axes.push_back({a.get<std::string>(), i < shape.size() ? shape[i] : 0});
    }
  } else {
    for (std::size_t i = 0; i < shape.size(); ++i) axes.push_back({"x" + std::to_string(i), shape[i]});
  }
  if (axes.size() != shape.size()) throw Error("predicate has " + std::to_string(shape.size()) + " levels of nesting but " + std::to_string(axes.size()) + " axes");
  for (std::size_t i = 0; i < axes.size(); ++i)
    if (axes[i].size != shape[i]) throw Error("axis '" + axes[i].name + "' size does not match the value array");
  return FuzzyPredicate(std::move(axes), std::move(values));
}

inline json predicate_to_nested_json(const FuzzyPredicate& phi) {
  json axes = json::array();
  for (const auto& a : phi.axes()) axes.push_back(axis_json(a));
  std::size_t k = 0;
  return json{{"axes", axes}, {"values", detail::nest(phi.values(), phi.axes(), 0, k)}};
}

inline FuzzyPredicate load_predicate(const std::string& path) {
  const std::string text = read_file(path);
  if (ends_with(path, ".json")) return predicate_from_nested_json(json::parse(text));
  return predicate_from_csv(text);
}

// ---------------------------------------------------------------------------
// Measures
// ---------------------------------------------------------------------------

inline constexpr double kRenormalizeLimit = 1e-6;

// {"axis": name, "weights": [...]}; sums off by more than 1e-9 are renormalized
// with a warning, more than 1e-6 rejected.
inline DiscreteMeasure measure_from_file_json(const json& j, std::ostream* warn = &std::cerr) {
  const std::string name = j.value("axis", std::string("x"));
  auto w = j.at("weights").get<std::vector<double>>();
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error("measure on '" + name + "' has a negative or non-finite weight");
    s += x;
  }
  if (std::abs(s - 1.0) > kRenormalizeLimit) {
    throw Error("measure on '" + name + "' sums to " + format_number(s));
  }
  if (std::abs(s - 1.0) > kSumTol) {
    if (warn) *warn << "warning: measure on '" << name << "' sums to " << format_number(s) << "; renormalized\n";
    for (auto& x : w) x /= s;
  }
  const Axis axis{name, w.size()};
  return DiscreteMeasure(axis, std::move(w));
}

inline std::string measure_to_json_text(const DiscreteMeasure& mu) {
  return measure_json(mu).dump() + "\n";
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

inline FuzzyPredicate gen_constant(std::size_t n, double v) {
  return FuzzyPredicate::from_function(n, n, [&](std::size_t, std::size_t) { return v; });
}
inline FuzzyPredicate gen_identity(std::size_t n) {
  return FuzzyPredicate::from_function(n, n, [](std::size_t i, std::size_t j) { return i == j ? 1.0 : 0.0; });
}
inline FuzzyPredicate gen_half_graph(std::size_t n) {
  return FuzzyPredicate::from_function(n, n, [](std::size_t i, std::size_t j) { return i < j ? 1.0 : 0.0; });
}
inline FuzzyPredicate gen_threshold(std::size_t n) {
  return FuzzyPredicate::from_function(n, n, [n](std::size_t i, std::size_t j) {
    return std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(n);
  });
}
inline FuzzyPredicate gen_random(std::size_t n, std::uint64_t seed) {
  auto eng = trial_engine(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(n * n);
  for (auto& x : v) x = u(eng);
  return FuzzyPredicate::matrix(n, n, std::move(v));
}

// 0/1 square wave with `jumps` equally spaced jumps, plus its complement.
inline StepFunctionFamily gen_square_wave(std::size_t jumps) {
  std::vector<double> bp;
  const std::size_t pieces = jumps + 1;
  for (std::size_t k = 0; k <= pieces; ++k) bp.push_back(static_cast<double>(k) / static_cast<double>(pieces));
  bp.back() = 1.0;
  std::vector<double> a(pieces), b(pieces);
  for (std::size_t k = 0; k < pieces; ++k) {
    a[k] = static_cast<double>(k % 2);
    b[k] = 1.0 - a[k];
  }
  return StepFunctionFamily(std::move(bp), {{"wave", a}, {"anti", b}});
}

// Random family: shared breakpoints (up to max_jumps), up to max_members members.
inline StepFunctionFamily gen_random_family(std::uint64_t seed, std::size_t max_jumps, std::size_t max_members) {
  auto eng = trial_engine(seed, 1);
  std::uniform_int_distribution<std::size_t> jd(0, max_jumps), md(1, max_members);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t jumps = jd(eng), members = md(eng);
  std::vector<double> bp{0.0, 1.0};
  while (bp.size() < jumps + 2) {
    const double t = u(eng);
    if (t > 0.0 && std::find(bp.begin(), bp.end(), t) == bp.end()) bp.push_back(t);
  }
  std::sort(bp.begin(), bp.end());
  std::vector<StepMember> ms;
  for (std::size_t m = 0; m < members; ++m) {
    std::vector<double> v(bp.size() - 1);
    for (auto& x : v) x = u(eng);
    ms.push_back({"b" + std::to_string(m), std::move(v)});
  }
  return StepFunctionFamily(std::move(bp), std::move(ms));
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

struct Instance {
  FuzzyPredicate phi;
  std::vector<DiscreteMeasure> mus;
  std::optional<StepFunctionFamily> family;
  std::optional<Cutting> cutting;
};

inline json instance_to_json(const Instance& in) {
  json j = json::object();
  if (in.phi.arity() > 0) j = instance_json(in.phi, in.mus);
  if (in.family) j["family"] = family_json(*in.family);
  if (in.cutting) j["cutting"] = cutting_json(*in.cutting);
  return j;
}

inline Instance instance_from_json(const json& j) {
  Instance in;
  if (j.contains("phi")) {
    in.phi = predicate_from_json(j.at("phi"));
    const auto& ms = j.at("mus");
    if (ms.size() != in.phi.arity()) throw Error("instance needs one measure per axis");
    for (std::size_t i = 0; i < ms.size(); ++i) in.mus.push_back(measure_from_json(ms[i], in.phi.axis(i)));
  }
  if (j.contains("family")) in.family = family_from_json(j.at("family"));
  if (j.contains("cutting")) in.cutting = cutting_from_json(j.at("cutting"));
  return in;
}

namespace detail {

template <typename T>
T param(const json& p, const char* key, T fallback) {
  return p.contains(key) && !p.at(key).is_null() ? p.at(key).get<T>() : fallback;
}

template <typename T>
T required(const json& p, const char* key) {
  if (!p.contains(key) || p.at(key).is_null()) throw Error(std::string("missing parameter --") + key);
  return p.at(key).get<T>();
}

inline std::uint64_t need_seed(std::optional<std::uint64_t> seed, const std::string& pipeline) {
  if (!seed) throw Error(pipeline + " is randomized and needs --seed");
  return *seed;
}

inline void need_phi(const Instance& in, const std::string& pipeline) {
  if (in.phi.arity() == 0) throw Error(pipeline + " needs --phi");
}

inline void merge_checks(Certificate& into, const Certificate& from, const std::string& suffix) {
  for (auto c : from.checks) {
    c.name += suffix;
    into.checks.push_back(std::move(c));
  }
}

inline std::vector<IndexSet> grid_piece_sets(const GridPartition& g, std::size_t i) {
  return piece_sets(g.factor(i));
}

}  // namespace detail

inline Certificate run_cover(const Instance& in, const json& p, std::optional<std::uint64_t> seed) {
  using namespace detail;
  const auto& phi = in.phi;
  phi.require_binary();
  const double eps = required<double>(p, "eps");
  const auto dir = parse_direction(param<std::string>(p, "direction", "rows"));
  const auto mode = parse_cover_mode(param<std::string>(p, "cover_mode", "greedy"));
  const std::size_t opp = dir == CoverDirection::Rows ? phi.size(1) : phi.size(0);
  const long n = param<long>(p, "n", static_cast<long>(opp));
  const auto samples = param<std::size_t>(p, "samples", 200);
  const auto cn = covering_number(phi, eps, n, dir, mode, samples, seed.value_or(0));
  IndexSet subset = cn.worst_subset;
  if (subset.empty()) {
    subset.resize(std::min<std::size_t>(static_cast<std::size_t>(n), opp));
    for (std::size_t k = 0; k < subset.size(); ++k) subset[k] = k;
  }
  const auto vec = restricted_vectors(phi, dir, subset);
  const auto cov = linf_cover(vec, std::min(eps, 1.0));
  double worst = 0.0;
  for (double d : cov.distance) worst = std::max(worst, d);
  Certificate c = begin_certificate("cover", phi, in.mus);
  c.witness = {{"subset", subset}, {"centers", cov.centers}, {"assignment", cov.assignment}};
  c.statistics = {{"covering_number", cn.value},
                  {"exact", cn.exact},
                  {"subsets_examined", cn.subsets_examined},
                  {"subset_size", cn.subset_size},
                  {"greedy_cover_size", cov.size()},
                  {"direction", to_string(dir)},
                  {"mode", to_string(mode)}};
  c.add_check("cover", "every restricted vector within eps of a center", worst, Relation::AtMost, eps, 0.0);
  return c;
}

inline Certificate run_cover_partition(const Instance& in, const json& p) {
  using namespace detail;
  const auto& phi = in.phi;
  phi.require_binary();
  const double eps = required<double>(p, "eps");
  const auto mode = parse_mode(param<std::string>(p, "mode", "constructible"));
  IndexSet B = param<IndexSet>(p, "B", {});
  if (B.empty())
    for (Index b = 0; b < phi.size(1); ++b) B.push_back(b);
  const auto cp = cover_partition(phi, B, eps, mode);
  const auto vec = restricted_vectors(phi, CoverDirection::Rows, B);
  const double diam = max_piece_diameter(cp.partition, vec);
  const std::size_t bound = linf_cover(vec, cp.cover_radius).size();
  Certificate c = begin_certificate("cover-partition", phi, in.mus);
  c.witness = {{"partition", partition_json(cp.partition)}, {"centers", cp.centers}, {"B", B}};
  c.statistics = {{"pieces", cp.partition.num_pieces()}, {"cover_radius", cp.cover_radius}, {"cover_bound", bound}};
  c.add_check("homogeneous", "max over pieces of sup_{a,a' in supp} max_{b in B} |phi(a;b) - phi(a';b)| <= eps", diam,
              Relation::AtMost, eps);
  c.add_check("pieces", "pieces <= greedy cover size at the cover radius",
              static_cast<double>(cp.partition.num_pieces()), Relation::AtMost, static_cast<double>(bound), 0.0);
  return c;
}

inline Certificate run_approx(const Instance& in, const json& p, std::optional<std::uint64_t> seed) {
  using namespace detail;
  const auto& phi = in.phi;
  const double eps = required<double>(p, "eps");
  const std::uint64_t s = need_seed(seed, "approx");
  if (param<bool>(p, "probability", false)) {
    const long n = param<long>(p, "n", approximation_size(phi, eps));
    return theta_witness_set(phi, in.mus[0], n, eps, param<std::size_t>(p, "samples", 2000), s);
  }
  const long n = param<long>(p, "n", static_cast<long>(std::ceil(9.0 / (2.0 * eps * eps))));
  const auto w = eps_approximation_search(phi, in.mus[0], eps, n, param<std::size_t>(p, "attempts", 1000), s);
  Certificate c = begin_certificate("approx", phi, in.mus);
  c.witness = {{"tuple", w.tuple}, {"found", w.found}};
  c.statistics = {{"error", w.error}, {"worst_column", w.worst_column}, {"attempts", w.attempts}, {"n", n}};
  if (w.warning) c.notes.push_back(*w.warning);
  c.add_check("approximation", "max_b |Av(a; phi(.;b)) - E_mu phi(.;b)| <= eps", w.tuple.empty() ? 1.0 : w.error,
              Relation::AtMost, eps);
  return c;
}

inline Certificate run_tail_check(const Instance& in, const json& p, std::optional<std::uint64_t> seed) {
  using namespace detail;
  const double eps = required<double>(p, "eps");
  const std::uint64_t s = need_seed(seed, "tail-check");
  const auto trials = param<std::size_t>(p, "trials", 5000);
  auto ns = param<std::vector<long>>(p, "sweep_n", {});
  const bool sweep = !ns.empty();
  if (!sweep) ns.push_back(required<long>(p, "n"));
  Certificate c = begin_certificate("tail-check", in.phi, in.mus);
  json rows = json::array(), stats = json::array();
  for (long n : ns) {
    const auto one = hoeffding_tail_check(in.phi, in.mus[0], n, eps, trials, s);
    merge_checks(c, one, sweep ? "[n=" + std::to_string(n) + "]" : "");
    stats.push_back(one.statistics);
    rows.push_back({n, one.statistics["empirical_tail"], one.statistics["bound"], one.statistics["slack"]});
    for (const auto& note : one.notes) c.notes.push_back("n=" + std::to_string(n) + ": " + note);
  }
  c.statistics = {{"runs", stats}};
  if (sweep) c.sweep = {{"columns", {"n", "empirical_tail", "bound_4N_exp(-n*eps^2/32)", "slack"}}, {"rows", rows}};
  return c;
}

inline Certificate run_net(const Instance& in, const json& p, std::optional<std::uint64_t> seed) {
  using namespace detail;
  const double r = param<double>(p, "r", 0.0), s = param<double>(p, "s", 1.0);
  const auto strategy = parse_net_strategy(param<std::string>(p, "strategy", "greedy"));
  const std::uint64_t sd = strategy == NetStrategy::Random ? need_seed(seed, "net --strategy random") : seed.value_or(0);
  auto epss = param<std::vector<double>>(p, "sweep_eps", {});
  const bool sweep = !epss.empty();
  if (!sweep) epss.push_back(required<double>(p, "eps"));
  Certificate c = begin_certificate("net", in.phi, in.mus);
  json rows = json::array(), nets = json::array();
  for (double eps : epss) {
    const auto net = eps_net_search(in.phi, in.mus[0], eps, r, s, strategy, sd);
    const std::string sfx = sweep ? "[eps=" + format_number(eps) + "]" : "";
    nets.push_back({{"eps", eps},
                    {"elements", net.elements},
                    {"heavy", net.heavy},
                    {"violations", net.violations},
                    {"feasible", net.feasible},
                    {"infeasible_column", net.infeasible_column ? json(*net.infeasible_column) : json(nullptr)}});
    c.add_check("violations" + sfx, "heavy columns not hit by the net", static_cast<double>(net.violations.size()),
                Relation::AtMost, 0.0, 0.0);
    if (strategy == NetStrategy::Greedy) {
      c.add_check("size" + sfx, "|A| <= number of heavy columns", static_cast<double>(net.elements.size()),
                  Relation::AtMost, static_cast<double>(net.heavy.size()), 0.0);
    }
    rows.push_back({eps, net.elements.size(), net.heavy.size(), (1.0 / eps) * std::log(1.0 / eps)});
  }
  c.witness = {{"nets", nets}};
  if (sweep) c.sweep = {{"columns", {"eps", "net_size", "heavy_columns", "reference_(1/eps)ln(1/eps)"}}, {"rows", rows}};
  return c;
}

inline Certificate run_structured(const Instance& in, const json& p, std::optional<std::uint64_t> seed) {
  using namespace detail;
  const double eps = required<double>(p, "eps");
  const auto mode = parse_mode(param<std::string>(p, "mode", "constructible"));
  const auto sa = structured_approximation(in.phi, in.mus, eps, mode, need_seed(seed, "structured"));
  Certificate c = begin_certificate("structured", in.phi, in.mus);
  c.witness = {{"theta", sa.ok ? sum_of_products_json(sa.theta) : json(nullptr)}};
  c.statistics = {{"l1", sa.l1},
                  {"terms", sa.theta.num_terms()},
                  {"pieces", sa.pieces},
                  {"tuple_sizes", sa.tuple_sizes},
                  {"approximation_error", sa.approximation_error}};
  if (!sa.failure.empty()) c.notes.push_back(sa.failure);
  c.add_check("l1", "int |phi - theta| <= eps", sa.theta.num_terms() ? sa.l1 : 1.0, Relation::AtMost, eps);
  if (sa.theta.num_terms()) {
    double top = 0.0;
    for (double v : sa.theta.dense()) top = std::max(top, v);
    c.statistics["theta_max"] = top;
  }
  return c;
}

inline Certificate run_seh(const Instance& in, const json& p) {
  using namespace detail;
  const double eps = required<double>(p, "eps"), delta = required<double>(p, "delta");
  const auto s = seh_bruteforce(in.phi, in.mus, eps, delta, param<std::size_t>(p, "budget", 1'000'000));
  Certificate c = begin_certificate("seh", in.phi, in.mus);
  c.witness = {{"rectangle", s.rect ? rectangle_json(*s.rect) : json(nullptr)}};
  c.statistics = {{"exhaustive", s.exhaustive}, {"budget_exhausted", s.budget_exhausted}, {"examined", s.examined}};
  c.add_check("found", "a rectangle was found", s.rect ? 1.0 : 0.0, Relation::AtLeast, 1.0, 0.0);
  if (s.rect) {
    c.add_check("mass", "min_i mu_i(B_i) >= delta", s.rect->min_mass(), Relation::AtLeast, delta);
    c.add_check("homogeneous", "osc(phi, B_1 x ... x B_n) <= eps", s.rect->oscillation, Relation::AtMost, eps);
  } else if (s.exhaustive) {
    c.notes.push_back("search was exhaustive: no such rectangle exists");
  }
  return c;
}

inline DistalPartition distal_from_params(const Instance& in, const json& p) {
  using namespace detail;
  const double eps = required<double>(p, "eps");
  const double delta = required<double>(p, "delta");
  const double gamma = required<double>(p, "gamma");
  return distal_partition(in.phi, in.mus, eps, delta, gamma,
                          bruteforce_oracle(param<std::size_t>(p, "budget", 1'000'000)));
}

// Independent audit of stored rectangular cells: they must tile the product
// and their non-homogeneous mass is recomputed from scratch.
struct RectAudit {
  bool tiles = true;
  double nonhomogeneous_mass = 0.0;
  std::string problem;
};

inline RectAudit audit_rect_cells(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus,
                                  const std::vector<RectCell>& cells, double eps) {
  RectAudit a;
  std::vector<int> hits(phi.num_entries(), 0);
  for (const auto& c : cells) {
    if (c.sides.size() != phi.arity()) {
      a.tiles = false;
      a.problem = "cell with wrong arity";
      return a;
    }
    if (c.empty()) continue;
    for_each_in_product(std::span<const IndexSet>(c.sides), [&](std::span<const Index> pt) {
      for (std::size_t i = 0; i < pt.size(); ++i)
        if (pt[i] >= phi.size(i)) throw Error("cell element out of range");
      ++hits[phi.flat(pt)];
    });
    if (!is_homogeneous(phi, c.sides, eps)) a.nonhomogeneous_mass += c.mass(mus);
  }
  for (std::size_t k = 0; k < hits.size(); ++k) {
    if (hits[k] != 1) {
      a.tiles = false;
      a.problem = "point " + std::to_string(k) + " lies in " + std::to_string(hits[k]) + " cells";
      break;
    }
  }
  return a;
}

inline Certificate run_density_seh(const Instance& in, const json& p) {
  using namespace detail;
  const double eps = required<double>(p, "eps"), gamma = required<double>(p, "gamma");
  const auto part = distal_from_params(in, p);
  const double mean = expectation(in.phi, in.mus);
  const double alpha = param<double>(p, "alpha", mean);
  const double beta = param<double>(p, "beta", (alpha - gamma - eps) / 2);
  const auto d = density_seh(in.phi, part.cells, in.mus, alpha, beta, eps, gamma);
  Certificate c = begin_certificate("density-seh", in.phi, in.mus);
  c.witness = {{"rectangle", d.rect ? rectangle_json(*d.rect) : json(nullptr)},
               {"cell", d.cell ? json(*d.cell) : json(nullptr)},
               {"cells", rect_cells_json(part)}};
  c.statistics = {{"K", d.K}, {"threshold", d.threshold}, {"alpha", alpha}, {"beta", beta}, {"mean", mean},
                  {"partition_nonhomogeneous_mass", part.nonhomogeneous_mass()}};
  c.add_check("partition", "partition non-homogeneous mass <= gamma", part.nonhomogeneous_mass(), Relation::AtMost, gamma);
  c.add_check("found", "a qualifying cell was found", d.rect ? 1.0 : 0.0, Relation::AtLeast, 1.0, 0.0);
  if (d.rect) {
    c.add_check("mass", "min_i mu_i(B_i) >= (alpha - beta - gamma - eps)/K", d.rect->min_mass(), Relation::AtLeast,
                d.threshold);
    c.add_check("homogeneous", "osc(phi, B) <= eps", d.rect->oscillation, Relation::AtMost, eps);
    double lo = 1.0;
    for_each_in_product(std::span<const IndexSet>(d.rect->sides),
                        [&](std::span<const Index> pt) { lo = std::min(lo, in.phi.at(pt)); });
    c.add_check("level", "min of phi on B >= beta", lo, Relation::AtLeast, beta);
  }
  return c;
}

inline Certificate run_bucketed(const Instance& in, const json& p) {
  using namespace detail;
  const auto s = required<std::size_t>(p, "s");
  const auto b = bucketed_seh(in.phi, in.mus, s, default_density_oracle());
  Certificate c = begin_certificate("bucketed-seh", in.phi, in.mus);
  c.witness = {{"rectangle", b.rect ? rectangle_json(*b.rect) : json(nullptr)}, {"bucket", b.bucket}};
  c.statistics = {{"bucket_means", b.bucket_means}, {"identity_error", b.identity_error}};
  c.add_check("identity", "max_a |sum_j (1/s - |phi(a) - j/s|)^+ - 1/s| <= 1e-12", b.identity_error, Relation::AtMost,
              0.0, 1e-12);
  c.add_check("found", "the density oracle returned a rectangle", b.rect ? 1.0 : 0.0, Relation::AtLeast, 1.0, 0.0);
  if (b.rect) {
    c.add_check("homogeneous", "osc(phi, B) <= 2/s", b.rect->oscillation, Relation::AtMost, 2.0 / static_cast<double>(s));
    c.statistics["masses"] = b.rect->masses;
  }
  return c;
}

inline const DiscreteMeasure& column_measure(const Instance& in) { return in.mus.at(1); }

inline Certificate run_cutting(const Instance& in, const json& p, std::optional<std::uint64_t> seed) {
  using namespace detail;
  const double eps = required<double>(p, "eps");
  const std::uint64_t s = seed.value_or(0);
  auto deltas = param<std::vector<double>>(p, "sweep_delta", {});
  const bool sweep = !deltas.empty();
  if (!sweep) deltas.push_back(required<double>(p, "delta"));
  Certificate c = begin_certificate("cutting", in.phi, in.mus);
  json rows = json::array(), cuts = json::array();
  IndexSet warm;
  std::size_t prev = 0;
  double monotone = 0.0;
  for (double delta : deltas) {
    const auto cut = cutting_build(in.phi, column_measure(in), eps, delta, s, sweep ? warm : IndexSet{});
    warm = cut.net;
    const auto v = cutting_verify(cut, in.phi, column_measure(in), eps, delta);
    merge_checks(c, v, sweep ? "[delta=" + format_number(delta) + "]" : "");
    cuts.push_back({{"delta", delta}, {"cutting", cutting_json(cut)}, {"statistics", v.statistics}});
    const double ref = (1.0 / delta) * std::log(1.0 / delta);
    rows.push_back({delta, cut.psi.size(), cut.net.size(), ref});
    if (cut.psi.size() < prev) monotone = 1.0;
    prev = cut.psi.size();
  }
  c.witness = {{"cuttings", cuts}};
  if (sweep) {
    c.add_check("monotone", "|D| non-decreasing as delta shrinks", monotone, Relation::AtMost, 0.0, 0.0);
    c.sweep = {{"columns", {"delta", "pieces", "net_size", "reference_(1/delta)ln(1/delta)"}}, {"rows", rows}};
  }
  return c;
}

inline Certificate run_equipartition(const Instance& in, const json& p) {
  using namespace detail;
  const double eps = required<double>(p, "eps");
  const auto part = distal_from_params(in, p);
  std::size_t largest = 0;
  for (const auto& a : in.phi.axes()) largest = std::max(largest, a.size);
  const double g = param<double>(p, "equi_gamma", 2.0 / static_cast<double>(largest));
  const auto grid = rect_to_grid(part.cells, in.phi.axes());
  const auto eq = equipartition_refine(grid, in.mus, g);
  const auto before = audit_grid(in.phi, grid, in.mus, eps, part.cells, part.homogeneous);
  const auto after = audit_grid(in.phi, eq.grid, in.mus, eps, part.cells, part.homogeneous);
  Certificate c = begin_certificate("equipartition", in.phi, in.mus);
  c.witness = {{"grid", grid_json(eq.grid)}, {"piece_masses", eq.piece_masses}};
  c.statistics = {{"axis_gaps", eq.axis_gaps},
                  {"cells_before", before.cells},
                  {"cells_after", after.cells},
                  {"rect_nonhomogeneous_mass", part.nonhomogeneous_mass()},
                  {"grid_nonhomogeneous_mass", before.nonhomogeneous_mass},
                  {"refined_nonhomogeneous_mass", after.nonhomogeneous_mass}};
  double gap = 0.0;
  for (double x : eq.axis_gaps) gap = std::max(gap, x);
  c.add_check("gap", "max_i max_{A,B in P_i} |mu_i(A) - mu_i(B)| <= gamma", gap, Relation::AtMost, g);
  c.add_check("inherited", "osc inside cells of homogeneous rectangles <= eps", after.worst_inherited_oscillation,
              Relation::AtMost, eps);
  c.add_check("mass", "refined non-homogeneous mass <= rectangular non-homogeneous mass", after.nonhomogeneous_mass,
              Relation::AtMost, part.nonhomogeneous_mass());
  return c;
}

inline Certificate run_cutting_verify(const Instance& in, const json& p) {
  using namespace detail;
  if (!in.cutting) throw Error("cutting-verify needs a cutting (--in)");
  return cutting_verify(*in.cutting, in.phi, column_measure(in), required<double>(p, "eps"), required<double>(p, "delta"));
}

inline bool pipeline_is_randomized(const std::string& name, const json& p) {
  if (name == "tail-check" || name == "approx" || name == "structured" || name == "nip-reg") return true;
  if (name == "net") return p.value("strategy", std::string("greedy")) == "random";
  return false;
}

// Runs a pipeline on an instance; the result embeds the instance, parameters
// and seed so it can be replayed.
inline Certificate run_pipeline(const std::string& name, const Instance& in, const json& params,
                                std::optional<std::uint64_t> seed) {
  using namespace detail;
  const auto start = std::chrono::steady_clock::now();
  Certificate c;
  if (name == "grid-approx") {
    if (!in.family) throw Error("grid-approx needs --family");
    c = grid_approximation_check(*in.family, required<double>(params, "eps"));
  } else {
    need_phi(in, name);
    if (name == "cover") c = run_cover(in, params, seed);
    else if (name == "cover-partition") c = run_cover_partition(in, params);
    else if (name == "approx") c = run_approx(in, params, seed);
    else if (name == "tail-check") c = run_tail_check(in, params, seed);
    else if (name == "net") c = run_net(in, params, seed);
    else if (name == "structured") c = run_structured(in, params, seed);
    else if (name == "nip-reg")
      c = nip_regularity(in.phi, in.mus, required<double>(params, "eps"), required<double>(params, "delta"),
                         parse_mode(param<std::string>(params, "mode", "constructible")), need_seed(seed, name));
    else if (name == "seh") c = run_seh(in, params);
    else if (name == "distal-reg") c = distal_certificate(in.phi, in.mus, distal_from_params(in, params));
    else if (name == "density-seh") c = run_density_seh(in, params);
    else if (name == "bucketed-seh") c = run_bucketed(in, params);
    else if (name == "cutting") c = run_cutting(in, params, seed);
    else if (name == "cutting-verify") c = run_cutting_verify(in, params);
    else if (name == "equipartition") c = run_equipartition(in, params);
    else throw Error("unknown pipeline '" + name + "'");
  }
  c.pipeline = name;
  c.instance = instance_to_json(in);
  c.input_digest = digest_json(c.instance);
  c.parameters = params;
  c.seed = seed;
  c.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

// ---------------------------------------------------------------------------
// Certificate replay
// ---------------------------------------------------------------------------

inline void json_diff(const json& a, const json& b, double tol, const std::string& path,
                      std::vector<std::string>& out) {
  if (out.size() > 20) return;
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    if (!(std::abs(x - y) <= tol) && !(std::isinf(x) && x == y)) {
      out.push_back(path + ": stored " + a.dump() + ", replayed " + b.dump());
    }
    return;
  }
  if (a.type() != b.type()) {
    out.push_back(path + ": type differs");
    return;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) out.push_back(path + "/" + it.key() + ": missing in replay");
      else json_diff(it.value(), b.at(it.key()), tol, path + "/" + it.key(), out);
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!a.contains(it.key())) out.push_back(path + "/" + it.key() + ": missing in stored certificate");
    return;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      out.push_back(path + ": length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
      return;
    }
    for (std::size_t i = 0; i < a.size(); ++i) json_diff(a[i], b[i], tol, path + "/" + std::to_string(i), out);
    return;
  }
  if (a != b) out.push_back(path + ": stored " + a.dump() + ", replayed " + b.dump());
}

struct Verification {
  bool ok = false;                 // digest, replay and verdict all agree, and the verdict is pass
  bool stored_pass = false;
  bool replay_pass = false;
  std::vector<std::string> problems;
};

inline Verification verify_certificate(const json& doc) {
  Verification v;
  Certificate stored;
  try {
    stored = doc.get<Certificate>();
  } catch (const std::exception& e) {
    v.problems.push_back(std::string("malformed certificate: ") + e.what());
    return v;
  }
  v.stored_pass = doc.value("verdict", std::string()) == "pass";
  if (digest_json(stored.instance) != stored.input_digest) v.problems.push_back("input digest does not match instance");
  if (stored.passed() != v.stored_pass) v.problems.push_back("stored verdict disagrees with stored checks");
  for (const auto& c : doc.at("checks"))
    if (c.contains("pass") && c.at("pass").get<bool>() != c.get<Check>().holds())
      v.problems.push_back("check '" + c.at("name").get<std::string>() + "' pass flag disagrees with its values");

  const Instance in = instance_from_json(stored.instance);
  if (stored.pipeline == "distal-reg") {
    std::vector<RectCell> cells;
    for (const auto& c : stored.witness.at("cells")) cells.push_back({c.at("sides").get<std::vector<IndexSet>>()});
    const auto a = audit_rect_cells(in.phi, in.mus, cells, stored.parameters.at("eps").get<double>());
    if (!a.tiles) v.problems.push_back("stored cells do not tile the product: " + a.problem);
    const Check* m = stored.find_check("nonhomogeneous-mass");
    if (!m || std::abs(m->measured - a.nonhomogeneous_mass) > kSumTol)
      v.problems.push_back("stored non-homogeneous mass differs from the audit (" + format_number(a.nonhomogeneous_mass) + ")");
  }

  const Certificate replay = run_pipeline(stored.pipeline, in, stored.parameters, stored.seed);
  v.replay_pass = replay.passed();
  json a = doc, b = replay;
  for (auto* j : {&a, &b}) {
    j->erase("wall_time_s");
    j->erase("notes");
  }
  json_diff(a, b, kSumTol, "", v.problems);
  v.ok = v.problems.empty() && v.replay_pass && v.stored_pass;
  return v;
}

inline std::string sweep_to_csv(const Certificate& c) {
  if (!c.has_sweep()) throw Error("certificate has no sweep data");
  std::string out;
  const auto& cols = c.sweep.at("columns");
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i].get<std::string>();
  out += "\n";
  for (const auto& row : c.sweep.at("rows")) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += i ? "," : "";
      out += row[i].is_number() ? format_number(row[i].get<double>()) : row[i].dump();
    }
    out += "\n";
  }
  return out;
}

}  // namespace fr
