// fr: command line front end. Every pipeline writes a replayable certificate.
// Exit codes: 0 pass, 2 bound violation (certificate still written), 1 input error.

#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fr/fr.hpp"

namespace {

using fr::json;

struct Options {
  std::string phi, family, in, out, format = "json";
  std::vector<std::string> mus;
  std::optional<std::uint64_t> seed;
  json params = json::object();
};

// Parameters shared by several pipelines; each is registered only where it applies.
enum class Kind { Real, Count, Text, Flag, Reals, Counts };

struct ParamSpec {
  const char* flag;
  const char* key;
  Kind kind;
  const char* help;
};

const std::map<std::string, ParamSpec> kParams = {
    {"eps", {"--eps", "eps", Kind::Real, "homogeneity / approximation tolerance"}},
    {"delta", {"--delta", "delta", Kind::Real, "mass threshold"}},
    {"gamma", {"--gamma", "gamma", Kind::Real, "exceptional mass budget"}},
    {"s", {"--s", "s", Kind::Count, "bucket count"}},
    {"r", {"--r", "r", Kind::Real, "net hitting threshold"}},
    {"net-s", {"--s", "s", Kind::Real, "net heaviness level"}},
    {"mode", {"--mode", "mode", Kind::Text, "definable|constructible"}},
    {"n", {"--n", "n", Kind::Count, "tuple / subset size"}},
    {"direction", {"--direction", "direction", Kind::Text, "rows|columns"}},
    {"cover-mode", {"--cover-mode", "cover_mode", Kind::Text, "greedy|exact"}},
    {"samples", {"--samples", "samples", Kind::Count, "Monte Carlo samples / subset samples"}},
    {"trials", {"--trials", "trials", Kind::Count, "Monte Carlo trials"}},
    {"attempts", {"--attempts", "attempts", Kind::Count, "random tuples to try"}},
    {"probability", {"--probability", "probability", Kind::Flag, "estimate the success probability"}},
    {"strategy", {"--strategy", "strategy", Kind::Text, "greedy|random"}},
    {"sweep-n", {"--sweep-n", "sweep_n", Kind::Counts, "sample sizes to sweep"}},
    {"sweep-eps", {"--sweep-eps", "sweep_eps", Kind::Reals, "eps values to sweep"}},
    {"sweep-delta", {"--sweep-delta", "sweep_delta", Kind::Reals, "delta values to sweep (warm started)"}},
    {"alpha", {"--alpha", "alpha", Kind::Real, "density lower bound (default E[phi])"}},
    {"beta", {"--beta", "beta", Kind::Real, "level threshold"}},
    {"budget", {"--budget", "budget", Kind::Count, "oracle node budget"}},
    {"equi-gamma", {"--equi-gamma", "equi_gamma", Kind::Real, "equipartition gap (default 2/axis size)"}},
    {"B", {"--B", "B", Kind::Counts, "parameter subset (column indices)"}},
};

struct Command {
  const char* name;
  const char* help;
  std::vector<const char*> params;
  bool needs_phi = true;
};

const std::vector<Command> kCommands = {
    {"cover", "covering number of the restricted vector family", {"eps", "n", "direction", "cover-mode", "samples"}},
    {"cover-partition", "(phi,eps)-partition over B from a cover", {"eps", "mode", "B"}},
    {"approx", "search for an eps-approximation", {"eps", "n", "attempts", "probability", "samples"}},
    {"tail-check", "Monte Carlo check of the uniform deviation tail bound", {"eps", "n", "trials", "sweep-n"}},
    {"net", "fuzzy eps-net", {"eps", "r", "net-s", "strategy", "sweep-eps"}},
    {"grid-approx", "grid sampling of a step-function family", {"eps"}, false},
    {"structured", "sum-of-products approximation", {"eps", "mode"}},
    {"nip-reg", "NIP regularity partition", {"eps", "delta", "mode"}},
    {"seh", "homogeneous dense rectangle", {"eps", "delta", "budget"}},
    {"distal-reg", "distal regularity partition", {"eps", "delta", "gamma", "budget"}},
    {"density-seh", "dense rectangle above a level", {"eps", "delta", "gamma", "alpha", "beta", "budget"}},
    {"bucketed-seh", "rectangle from the best bucket", {"s"}},
    {"cutting", "build an (eps,delta)-cutting", {"eps", "delta", "sweep-delta"}},
    {"cutting-verify", "audit a stored cutting", {"eps", "delta"}},
    {"equipartition", "refine a distal partition to near-equal pieces", {"eps", "delta", "gamma", "equi-gamma", "budget"}},
};

void add_param(CLI::App* sub, const ParamSpec& p, json& params, std::vector<std::function<void()>>& finish) {
  // CLI11 binds to storage; results are copied into the JSON once parsing is done.
  switch (p.kind) {
    case Kind::Real: {
      auto v = std::make_shared<double>();
      auto* opt = sub->add_option(p.flag, *v, p.help);
      finish.push_back([=, &params] { if (opt->count()) params[p.key] = *v; });
      break;
    }
    case Kind::Count: {
      auto v = std::make_shared<std::size_t>();
      auto* opt = sub->add_option(p.flag, *v, p.help);
      finish.push_back([=, &params] { if (opt->count()) params[p.key] = *v; });
      break;
    }
    case Kind::Text: {
      auto v = std::make_shared<std::string>();
      auto* opt = sub->add_option(p.flag, *v, p.help);
      finish.push_back([=, &params] { if (opt->count()) params[p.key] = *v; });
      break;
    }
    case Kind::Flag: {
      auto v = std::make_shared<bool>(false);
      sub->add_flag(p.flag, *v, p.help);
      finish.push_back([=, &params] { if (*v) params[p.key] = true; });
      break;
    }
    case Kind::Reals: {
      auto v = std::make_shared<std::vector<double>>();
      auto* opt = sub->add_option(p.flag, *v, p.help)->delimiter(',');
      finish.push_back([=, &params] { if (opt->count()) params[p.key] = *v; });
      break;
    }
    case Kind::Counts: {
      auto v = std::make_shared<std::vector<std::size_t>>();
      auto* opt = sub->add_option(p.flag, *v, p.help)->delimiter(',');
      finish.push_back([=, &params] { if (opt->count()) params[p.key] = *v; });
      break;
    }
  }
}

// --mu FILE binds by position; --mu AXIS=FILE binds to a named axis.
std::vector<fr::DiscreteMeasure> bind_measures(const fr::FuzzyPredicate& phi, const std::vector<std::string>& specs) {
  const std::size_t n = phi.arity();
  std::vector<std::optional<fr::DiscreteMeasure>> bound(n);
  std::size_t next = 0;
  for (const auto& spec : specs) {
    std::string file = spec;
    std::optional<std::size_t> slot;
    if (auto eq = spec.find('='); eq != std::string::npos) {
      const std::string name = spec.substr(0, eq);
      file = spec.substr(eq + 1);
      for (std::size_t i = 0; i < n; ++i)
        if (phi.axis(i).name == name) slot = i;
      if (!slot) throw fr::Error("--mu: unknown axis '" + name + "'");
    } else {
      while (next < n && bound[next]) ++next;
      if (next == n) throw fr::Error("--mu: more measures than axes");
      slot = next;
    }
    if (bound[*slot]) throw fr::Error("--mu: axis '" + phi.axis(*slot).name + "' given twice");
    const auto mu = fr::measure_from_file_json(json::parse(fr::read_file(file)));
    if (mu.size() != phi.size(*slot)) {
      throw fr::Error("--mu " + file + ": " + std::to_string(mu.size()) + " weights for axis '" +
                      phi.axis(*slot).name + "' of size " + std::to_string(phi.size(*slot)));
    }
    bound[*slot] = mu.rebind(phi.axis(*slot));
  }
  std::vector<fr::DiscreteMeasure> mus;
  for (std::size_t i = 0; i < n; ++i) mus.push_back(bound[i] ? *bound[i] : fr::DiscreteMeasure::uniform(phi.axis(i)));
  return mus;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") std::cout << text;
  else fr::write_file(out, text);
}

int emit_certificate(const fr::Certificate& c, const Options& o) {
  if (o.format == "csv") emit(o.out, fr::sweep_to_csv(c));
  else emit(o.out, json(c).dump(2) + "\n");
  for (const auto& ch : c.checks)
    if (!ch.holds())
      std::cerr << "bound violated: " << ch.name << ": " << fr::format_number(ch.measured) << " "
                << fr::to_string(ch.relation) << " " << fr::format_number(ch.bound) << "\n";
  return c.passed() ? 0 : 2;
}

int run_command(const std::string& name, const Options& o) {
  fr::Instance in;
  if (!o.phi.empty()) {
    in.phi = fr::load_predicate(o.phi);
    in.mus = bind_measures(in.phi, o.mus);
  } else if (!o.mus.empty()) {
    throw fr::Error("--mu given without --phi");
  }
  if (!o.family.empty()) in.family = fr::family_from_json(json::parse(fr::read_file(o.family)));
  if (name == "cutting-verify") {
    if (o.in.empty()) throw fr::Error("cutting-verify needs --in");
    json j = json::parse(fr::read_file(o.in));
    // Accept either a bare cutting or a cutting certificate.
    if (j.contains("witness")) j = j.at("witness").at("cuttings").at(0).at("cutting");
    in.cutting = fr::cutting_from_json(j);
  }
  if ((name == "cutting" || name == "cutting-verify") && in.phi.arity() == 2 && o.mus.size() == 1) {
    // A single measure is taken as the parameter measure nu.
    in.mus[1] = in.mus[0].rebind(in.phi.axis(1));
    in.mus[0] = fr::DiscreteMeasure::uniform(in.phi.axis(0));
  }
  if (fr::pipeline_is_randomized(name, o.params) && !o.seed) {
    throw fr::Error(name + " is randomized: --seed is required");
  }
  return emit_certificate(fr::run_pipeline(name, in, o.params, o.seed), o);
}

int run_verify(const Options& o) {
  if (o.in.empty()) throw fr::Error("verify-cert needs --in");
  const json doc = json::parse(fr::read_file(o.in));
  const auto v = fr::verify_certificate(doc);
  for (const auto& p : v.problems) std::cerr << "mismatch: " << p << "\n";
  if (o.format == "csv") emit(o.out, fr::sweep_to_csv(doc.get<fr::Certificate>()));
  else emit(o.out, std::string(v.ok ? "pass" : "fail") + "\n");
  return v.ok ? 0 : 2;
}

int run_gen(const std::string& what, std::size_t n, double value, std::optional<std::uint64_t> seed,
            const std::string& axis, const std::string& out) {
  if (what == "uniform") {
    emit(out, fr::measure_to_json_text(fr::DiscreteMeasure::uniform(n, axis)));
    return 0;
  }
  if (what == "square-wave") {
    emit(out, fr::family_json(fr::gen_square_wave(n)).dump(2) + "\n");
    return 0;
  }
  fr::FuzzyPredicate phi;
  if (what == "constant") phi = fr::gen_constant(n, value);
  else if (what == "identity") phi = fr::gen_identity(n);
  else if (what == "half-graph") phi = fr::gen_half_graph(n);
  else if (what == "threshold") phi = fr::gen_threshold(n);
  else if (what == "random") {
    if (!seed) throw fr::Error("gen random needs --seed");
    phi = fr::gen_random(n, *seed);
  } else {
    throw fr::Error("gen: unknown instance '" + what + "'");
  }
  emit(out, fr::predicate_to_csv(phi));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fr: finite regularity pipelines with checkable certificates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fr::kToolVersion);

  Options o;
  std::uint64_t seed_value = 0;
  std::vector<std::function<void()>> finish;
  std::map<CLI::App*, std::string> names;

  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    names[sub] = cmd.name;
    if (cmd.needs_phi) {
      sub->add_option("--phi", o.phi, "predicate file (.csv matrix or .json nested array)")->required();
      sub->add_option("--mu", o.mus, "measure file, one per axis in order, or AXIS=FILE");
    } else {
      sub->add_option("--family", o.family, "step-function family JSON")->required();
    }
    if (std::string(cmd.name) == "cutting-verify") sub->add_option("--in", o.in, "cutting or cutting certificate")->required();
    auto* seed = sub->add_option("--seed", seed_value, "random seed");
    finish.push_back([&o, &seed_value, seed] { if (seed->count()) o.seed = seed_value; });
    sub->add_option("--out", o.out, "output file (default stdout)");
    sub->add_option("--format", o.format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
    for (const char* p : cmd.params) add_param(sub, kParams.at(p), o.params, finish);
  }

  auto* verify = app.add_subcommand("verify-cert", "replay a certificate and compare");
  verify->add_option("--in", o.in, "certificate file")->required();
  verify->add_option("--out", o.out, "output file (default stdout)");
  verify->add_option("--format", o.format, "json|csv")->check(CLI::IsMember({"json", "csv"}));

  std::string gen_what, gen_axis = "x";
  std::size_t gen_n = 8;
  double gen_value = 0.5;
  auto* gen = app.add_subcommand("gen", "emit a canonical instance");
  gen->add_option("instance", gen_what, "constant|identity|half-graph|threshold|random|uniform|square-wave")->required();
  gen->add_option("--n", gen_n, "size (jumps for square-wave)");
  gen->add_option("--value", gen_value, "value for constant");
  gen->add_option("--axis", gen_axis, "axis name for uniform");
  auto* gen_seed = gen->add_option("--seed", seed_value, "seed for random");
  gen->add_option("--out", o.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  for (auto& f : finish) f();

  try {
    if (*gen) return run_gen(gen_what, gen_n, gen_value, gen_seed->count() ? std::optional(seed_value) : std::nullopt,
                             gen_axis, o.out);
    if (*verify) return run_verify(o);
    for (auto& [sub, name] : names)
      if (*sub) return run_command(name, o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
