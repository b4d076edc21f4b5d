#pragma once

// Self-contained pipeline certificates.
//
// A certificate records the inputs (embedded, plus a digest), parameters, the
// witness produced by a pipeline, per-item statistics, and a list of checks.
// Each check compares a measured value against a claimed bound; the verdict is
// pass exactly when every check holds within its tolerance.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fr/core.hpp"

namespace fr {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

enum class Relation { AtMost, AtLeast };

inline const char* to_string(Relation r) { return r == Relation::AtMost ? "<=" : ">="; }
inline Relation parse_relation(const std::string& s) {
  if (s == "<=") return Relation::AtMost;
  if (s == ">=") return Relation::AtLeast;
  throw Error("unknown relation '" + s + "'");
}

struct Check {
  std::string name;
  std::string statement;  // the bound being checked, as a formula
  double measured = 0.0;
  Relation relation = Relation::AtMost;
  double bound = 0.0;
  double tolerance = kSumTol;

  bool holds() const {
    return relation == Relation::AtMost ? measured <= bound + tolerance
                                        : measured >= bound - tolerance;
  }
};

struct Certificate {
  std::string pipeline;
  std::string input_digest;
  json parameters = json::object();
  std::optional<std::uint64_t> seed;
  json instance = json::object();    // embedded inputs for replay
  json witness = json::object();
  json statistics = json::object();
  json sweep = json::object();       // optional plot data: {"columns": [...], "rows": [[...]]}
  std::vector<Check> checks;
  std::vector<std::string> notes;
  double wall_time_s = 0.0;

  Check& add_check(std::string name, std::string statement, double measured, Relation rel,
                   double bound, double tol = kSumTol) {
    checks.push_back(Check{std::move(name), std::move(statement), measured, rel, bound, tol});
    return checks.back();
  }

  bool passed() const {
    for (const auto& c : checks)
      if (!c.holds()) return false;
    return true;
  }

  bool has_sweep() const { return sweep.contains("rows") && !sweep["rows"].empty(); }

  const Check* find_check(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

inline void to_json(json& j, const Check& c) {
  j = json{{"name", c.name},
           {"statement", c.statement},
           {"measured", c.measured},
           {"relation", to_string(c.relation)},
           {"bound", c.bound},
           {"tolerance", c.tolerance},
           {"pass", c.holds()}};
}

inline void from_json(const json& j, Check& c) {
  c.name = j.at("name").get<std::string>();
  c.statement = j.at("statement").get<std::string>();
  c.measured = j.at("measured").get<double>();
  c.relation = parse_relation(j.at("relation").get<std::string>());
  c.bound = j.at("bound").get<double>();
  c.tolerance = j.at("tolerance").get<double>();
}

inline void to_json(json& j, const Certificate& c) {
  j = json::object();
  j["tool"] = "fr";
  j["version"] = kToolVersion;
  j["pipeline"] = c.pipeline;
  j["input_digest"] = c.input_digest;
  j["parameters"] = c.parameters;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["checks"] = c.checks;
  j["verdict"] = c.passed() ? "pass" : "fail";
  j["witness"] = c.witness;
  j["statistics"] = c.statistics;
  j["sweep"] = c.sweep;
  j["notes"] = c.notes;
  j["wall_time_s"] = c.wall_time_s;
  j["instance"] = c.instance;
}

inline void from_json(const json& j, Certificate& c) {
  c.pipeline = j.at("pipeline").get<std::string>();
  c.input_digest = j.at("input_digest").get<std::string>();
  c.parameters = j.at("parameters");
  c.seed = j.at("seed").is_null() ? std::nullopt
                                  : std::optional<std::uint64_t>(j.at("seed").get<std::uint64_t>());
  c.checks = j.at("checks").get<std::vector<Check>>();
  c.witness = j.at("witness");
  c.statistics = j.at("statistics");
  c.sweep = j.value("sweep", json::object());
  c.notes = j.value("notes", std::vector<std::string>{});
  c.wall_time_s = j.value("wall_time_s", 0.0);
  c.instance = j.value("instance", json::object());
}

// ---------------------------------------------------------------------------
// Input digests (FNV-1a 64 over a canonical byte stream)
// ---------------------------------------------------------------------------

class Digest {
 public:
  void add_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void add(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    add_bytes(&bits, sizeof bits);
  }
  void add(std::uint64_t v) { add_bytes(&v, sizeof v); }
  void add(const std::string& s) {
    add(static_cast<std::uint64_t>(s.size()));
    add_bytes(s.data(), s.size());
  }
  void add(const FuzzyPredicate& phi) {
    add(std::string("predicate"));
    for (const auto& ax : phi.axes()) {
      add(ax.name);
      add(static_cast<std::uint64_t>(ax.size));
    }
    for (double v : phi.values()) add(v);
  }
  void add(const DiscreteMeasure& mu) {
    add(std::string("measure"));
    add(mu.axis().name);
    for (double w : mu.weights()) add(w);
  }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string digest_of(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus) {
  Digest d;
  d.add(phi);
  for (const auto& m : mus) d.add(m);
  return d.hex();
}

// Digest of an embedded instance document (keys are sorted, so the dump is canonical).
inline std::string digest_json(const json& instance) {
  Digest d;
  d.add(instance.dump());
  return d.hex();
}

// JSON encodings of the core types (used for embedding instances and witnesses).

inline json axis_json(const Axis& a) { return json{{"name", a.name}, {"size", a.size}}; }
inline Axis axis_from_json(const json& j) {
  return Axis{j.at("name").get<std::string>(), j.at("size").get<std::size_t>()};
}

inline json predicate_json(const FuzzyPredicate& phi) {
  json axes = json::array();
  for (const auto& a : phi.axes()) axes.push_back(axis_json(a));
  return json{{"axes", axes}, {"values", phi.values()}};
}
inline FuzzyPredicate predicate_from_json(const json& j) {
  std::vector<Axis> axes;
  for (const auto& a : j.at("axes")) axes.push_back(axis_from_json(a));
  return FuzzyPredicate(std::move(axes), j.at("values").get<std::vector<double>>());
}

inline json measure_json(const DiscreteMeasure& mu) {
  return json{{"axis", mu.axis().name}, {"weights", mu.weights()}};
}
inline DiscreteMeasure measure_from_json(const json& j, const Axis& axis) {
  return DiscreteMeasure(axis, j.at("weights").get<std::vector<double>>());
}

inline json instance_json(const FuzzyPredicate& phi, std::span<const DiscreteMeasure> mus) {
  json ms = json::array();
  for (const auto& m : mus) ms.push_back(measure_json(m));
  return json{{"phi", predicate_json(phi)}, {"mus", ms}};
}

inline Certificate begin_certificate(std::string pipeline, const FuzzyPredicate& phi,
                                     std::span<const DiscreteMeasure> mus) {
  Certificate c;
  c.pipeline = std::move(pipeline);
  c.instance = instance_json(phi, mus);
  c.input_digest = digest_json(c.instance);
  return c;
}

inline json partition_json(const PartitionOfUnity& p) {
  return json{{"axis", axis_json(p.axis())}, {"mode", to_string(p.mode())}, {"pieces", p.pieces()}};
}
inline PartitionOfUnity partition_from_json(const json& j) {
  return PartitionOfUnity(axis_from_json(j.at("axis")),
                          j.at("pieces").get<std::vector<std::vector<double>>>(),
                          parse_mode(j.at("mode").get<std::string>()));
}

inline json grid_json(const GridPartition& g) {
  json f = json::array();
  for (const auto& p : g.factors()) f.push_back(partition_json(p));
  return json{{"factors", f}};
}
inline GridPartition grid_from_json(const json& j) {
  std::vector<PartitionOfUnity> f;
  for (const auto& p : j.at("factors")) f.push_back(partition_from_json(p));
  return GridPartition(std::move(f));
}

}  // namespace fr
