#include <catch_amalgamated.hpp>

#include <sstream>

#include "helpers.hpp"

using namespace fr;
using Catch::Approx;

namespace {

Instance instance_of(const FuzzyPredicate& phi) { return Instance{phi, frt::uniform_measures(phi), {}, {}}; }

}  // namespace

TEST_CASE("generated half graph CSV") {
  const auto text = predicate_to_csv(gen_half_graph(3));
  CHECK(text == "x\\y,0,1,2\n0,0,1,1\n1,0,0,1\n2,0,0,0\n");
}

TEST_CASE("CSV round trip is byte identical") {
  for (const auto& phi : {gen_half_graph(8), gen_threshold(7), gen_random(6, 3), gen_identity(5), gen_constant(4, 0.1)}) {
    const auto text = predicate_to_csv(phi);
    const auto back = predicate_from_csv(text);
    CHECK(back.values() == phi.values());
    CHECK(back.axes() == phi.axes());
    CHECK(predicate_to_csv(back) == text);
  }
}

TEST_CASE("CSV errors name the offending line") {
  CHECK_THROWS_WITH(predicate_from_csv("x\\y,0,1\n0,0.5\n"), Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(predicate_from_csv("x\\y,0,1\n0,0.5,abc\n"), Catch::Matchers::ContainsSubstring("abc"));
  CHECK_THROWS_WITH(predicate_from_csv("x\\y,0\n0,1.5\n"), Catch::Matchers::ContainsSubstring("outside"));
  CHECK_NOTHROW(predicate_from_csv("a\\b,0,1\r\n0,0.5,1\r\n\r\n"));
}

TEST_CASE("nested JSON predicates") {
  json j = json::parse(R"({"axes":[{"name":"a","size":2},{"name":"b","size":1},{"name":"c","size":2}],
                          "values":[[[0.1,0.2]],[[0.3,0.4]]]})");
  auto phi = predicate_from_nested_json(j);
  CHECK(phi.arity() == 3);
  const Index p[] = {1, 0, 1};
  CHECK(phi.at(p) == 0.4);
  CHECK(predicate_to_nested_json(phi) == j);
  CHECK_THROWS_AS(predicate_from_nested_json(json::parse(R"({"values":[[0.1,0.2],[0.3]]})")), Error);
  auto named = predicate_from_nested_json(json::parse(R"({"axes":["u","v"],"values":[[0,1,0],[1,0,1]]})"));
  CHECK(named.axis(0) == Axis{"u", 2});
  CHECK(named.axis(1) == Axis{"v", 3});
  CHECK(named(1, 2) == 1.0);
  CHECK_THROWS_AS(predicate_from_nested_json(json::parse(R"({"axes":["u"],"values":[[0,1],[1,0]]})")), Error);
  CHECK_THROWS_AS(predicate_from_nested_json(json::parse(R"({"axes":["u","v"],"values":[[0,1.5],[1,0]]})")), Error);
}

TEST_CASE("measure files renormalize small drift and reject large drift") {
  std::ostringstream warn;
  auto mu = measure_from_file_json(json::parse(R"({"axis":"x","weights":[0.5,0.5000001]})"), &warn);
  CHECK(warn.str().find("renormalized") != std::string::npos);
  CHECK(mu[0] + mu[1] == Approx(1.0).margin(1e-15));
  std::ostringstream quiet;
  measure_from_file_json(json::parse(R"({"axis":"x","weights":[0.25,0.75]})"), &quiet);
  CHECK(quiet.str().empty());
  CHECK_THROWS_AS(measure_from_file_json(json::parse(R"({"axis":"x","weights":[0.5,0.6]})"), nullptr), Error);
  CHECK_THROWS_AS(measure_from_file_json(json::parse(R"({"axis":"x","weights":[1.5,-0.5]})"), nullptr), Error);
}

TEST_CASE("number formatting round trips") {
  std::mt19937_64 eng(61);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double v = u(eng);
    CHECK(parse_number(format_number(v), "t") == v);
  }
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0) == "1");
}

TEST_CASE("certificate JSON round trip") {
  auto c = run_pipeline("distal-reg", instance_of(gen_half_graph(8)),
                        {{"eps", 0.0}, {"delta", 0.5}, {"gamma", 0.25}}, 1);
  const json j = c;
  const auto back = j.get<Certificate>();
  CHECK(json(back) == j);
  CHECK(j["verdict"] == "pass");
  CHECK(j["tool"] == "fr");
}

TEST_CASE("replay of certificates") {
  const auto hg = instance_of(gen_half_graph(8));
  struct Case {
    std::string name;
    json params;
    std::optional<std::uint64_t> seed;
  };
  const std::vector<Case> cases{
      {"cover", {{"eps", 0.25}, {"n", 2}}, std::nullopt},
      {"cover-partition", {{"eps", 0.5}}, std::nullopt},
      {"approx", {{"eps", 0.25}, {"n", 72}}, 1},
      {"tail-check", {{"eps", 0.5}, {"sweep_n", {4, 8}}, {"trials", 200}}, 1},
      {"net", {{"sweep_eps", {0.5, 0.25}}}, std::nullopt},
      {"nip-reg", {{"eps", 0.3}, {"delta", 0.3}}, 1},
      {"seh", {{"eps", 0.0}, {"delta", 0.5}}, std::nullopt},
      {"distal-reg", {{"eps", 0.0}, {"delta", 0.5}, {"gamma", 0.25}}, 1},
      {"density-seh", {{"eps", 0.0}, {"delta", 0.5}, {"gamma", 0.1}}, std::nullopt},
      {"bucketed-seh", {{"s", 2}}, std::nullopt},
      {"cutting", {{"eps", 0.5}, {"sweep_delta", {0.5, 0.25}}}, 0},
      {"equipartition", {{"eps", 0.0}, {"delta", 0.5}, {"gamma", 0.25}}, std::nullopt},
  };
  for (const auto& k : cases) {
    INFO(k.name);
    auto c = run_pipeline(k.name, hg, k.params, k.seed);
    CHECK(c.passed());
    const auto v = verify_certificate(json(c));
    for (const auto& p : v.problems) UNSCOPED_INFO(p);
    CHECK(v.ok);
  }
  Instance fam;
  fam.family = gen_square_wave(6);
  auto g = run_pipeline("grid-approx", fam, {{"eps", 0.5}}, std::nullopt);
  CHECK(g.passed());
  CHECK(verify_certificate(json(g)).ok);
}

TEST_CASE("tampered certificates fail verification") {
  auto c = run_pipeline("distal-reg", instance_of(gen_half_graph(8)),
                        {{"eps", 0.0}, {"delta", 0.5}, {"gamma", 0.25}}, 1);
  json j = c;
  REQUIRE(verify_certificate(j).ok);

  json mass = j;
  for (auto& ch : mass["checks"])
    if (ch["name"] == "nonhomogeneous-mass") ch["measured"] = 0.0;
  CHECK_FALSE(verify_certificate(mass).ok);

  json input = j;
  input["instance"]["phi"]["values"][5] = 0.5;
  auto v = verify_certificate(input);
  CHECK_FALSE(v.ok);
  CHECK(std::any_of(v.problems.begin(), v.problems.end(),
                    [](const std::string& p) { return p.find("digest") != std::string::npos; }));

  json cells = j;
  cells["witness"]["cells"].erase(0);
  CHECK_FALSE(verify_certificate(cells).ok);
}

TEST_CASE("sweep CSV") {
  auto c = run_pipeline("tail-check", instance_of(gen_half_graph(8)),
                        {{"eps", 0.5}, {"sweep_n", {16, 32, 64}}, {"trials", 100}}, 1);
  const auto csv = sweep_to_csv(c);
  std::istringstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0].rfind("n,empirical_tail,bound", 0) == 0);
  CHECK(lines[1].rfind("16,", 0) == 0);

  auto n = run_pipeline("net", instance_of(gen_half_graph(8)), {{"sweep_eps", {0.5, 0.25, 0.125}}}, std::nullopt);
  CHECK(sweep_to_csv(n).find("reference") != std::string::npos);

  auto plain = run_pipeline("seh", instance_of(gen_half_graph(4)), {{"eps", 0.0}, {"delta", 0.5}}, std::nullopt);
  CHECK_THROWS_AS(sweep_to_csv(plain), Error);
}

TEST_CASE("randomized pipelines need a seed") {
  CHECK_THROWS_WITH(run_pipeline("approx", instance_of(gen_half_graph(4)), {{"eps", 0.5}}, std::nullopt),
                    Catch::Matchers::ContainsSubstring("--seed"));
  CHECK_THROWS_WITH(run_pipeline("distal-reg", instance_of(gen_half_graph(4)), {{"eps", 0.0}}, std::nullopt),
                    Catch::Matchers::ContainsSubstring("--delta"));
}
