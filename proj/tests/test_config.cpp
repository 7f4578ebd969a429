#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "elapsed/errors.hpp"
#include "elapsed/runners.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

using namespace elapsed;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("elapsed_test_" + name);
  fs::remove_all(p);
  return p;
}

json small_soft() {
  return json::parse(R"({
    "rate": {"kind": "soft_sigmoid", "a0": 1, "a1": 2, "lx": 1, "lmu": 1},
    "grid": {"x_max": 30, "n": 150}
  })");
}

} // namespace

TEST_CASE("config round trip") {
  const auto j = json::parse(R"({
    "rate": {"kind": "soft_sigmoid", "a0": 3, "a1": 4, "lx": 0.05, "lmu": 1},
    "delay": {"kind": "erlang", "k": 3, "tau": 0.4},
    "eps": {"from": 0, "to": 0.1, "steps": 5},
    "grid": {"x_max": 26, "n": 300},
    "initial": {"kind": "perturbed", "amplitude": 0.2, "shape": "bump"},
    "t_final": 12.5, "record_every": 2, "snapshot_every": 50,
    "fit_window": [2, 10], "scan": {"n_scan": 1024, "m_max": 9},
    "cut": -1.2, "compare_spectrum": false,
    "basin": {"amplitudes": [1, 0, 0.5], "bisections": 2},
    "output": "somewhere", "seed": 42
  })");
  const auto c = parse_config(j);
  CHECK(c.eps.size() == 5);
  CHECK(c.eps[4] == doctest::Approx(0.1));
  CHECK(c.basin_amplitudes == std::vector<double>{0, 0.5, 1});
  const auto emitted = to_json(c);
  CHECK(to_json(parse_config(emitted)) == emitted);
  CHECK(config_hash(emitted) == config_hash(to_json(parse_config(emitted))));

  const auto d = to_json(parse_config(small_soft()));
  CHECK(to_json(parse_config(d)) == d);
  CHECK(config_hash(d) != config_hash(emitted));
  CHECK(config_hash(d).size() == 16);
}

TEST_CASE("config validation") {
  auto bad = [](const char* text) {
    try {
      parse_config(json::parse(text));
    } catch (const ConfigError& e) {
      CHECK(e.exit_code() == 2);
      return true;
    }
    return false;
  };
  CHECK(bad(R"({"eps": [0]})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "eps": []})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "epsilon": [0]})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "eps": [-0.1]})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "grid": {"x_max": 10, "n": 4}})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "initial": {"kind": "atom"}})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "initial": {"amplitude": 1.5}})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "fit_window": [5, 2]})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "basin": {"amplitudes": [0, 2]}})"));
  CHECK(bad(R"({"rate": {"kind": "constant", "a": 1}, "t_final": "long"})"));
  CHECK_FALSE(bad(R"({"rate": {"kind": "constant", "a": 1}, "eps": 0.3})"));

  const auto p = scratch("malformed.json");
  std::ofstream(p) << "{ \"rate\": ";
  CHECK_THROWS_AS(load_config(p), ConfigError);
  std::ofstream(p) << "// comment\n{\"rate\": {\"kind\": \"constant\", \"a\": 1}}";
  CHECK(load_config(p).rate.a0() == 1.0);
}

TEST_CASE("error classes map to exit codes") {
  CHECK(DomainError("x").exit_code() == 2);
  CHECK(NoRootFound("x").exit_code() == 3);
  CHECK(ContractionViolated("x").exit_code() == 3);
  CHECK(NoConvergence("x").exit_code() == 4);
  CHECK(EigensolverFailure("x").exit_code() == 4);
}

TEST_CASE("initial densities") {
  const Grid g(20, 200);
  Vec F(g.n());
  for (int i = 0; i < g.n(); ++i) F[i] = std::exp(-g.center(i));
  F /= mass(F, g.dx());
  for (const char* shape : {"sine", "bump", "shift"}) {
    InitialSpec s;
    s.shape = shape;
    s.amplitude = 0.5;
    const Vec f = initial_density(s, F, g);
    CHECK(mass(f, g.dx()) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(f.minCoeff() >= 0);
  }
  InitialSpec u;
  u.kind = InitialSpec::Kind::Uniform;
  u.width = 2;
  CHECK(initial_density(u, F, g).maxCoeff() == doctest::Approx(0.5));
  InitialSpec neg;
  neg.amplitude = 3;
  CHECK_THROWS_AS(initial_density(neg, F, g), ConfigError);
}

TEST_CASE("parallel_for visits every index and rethrows in order") {
  std::vector<std::atomic<int>> hits(50);
  parallel_for(50, 4, [&](int i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);
  try {
    parallel_for(10, 3, [](int i) {
      if (i == 7) throw NoConvergence("seven");
      if (i == 3) throw DomainError("three");
    });
    FAIL("expected a throw");
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("three") != std::string::npos);
  }
}

TEST_CASE("steady sweep output is deterministic and fully indexed") {
  auto j = small_soft();
  j["eps"] = {0, 0.1, 0.2};
  const auto c = parse_config(j);
  const auto a = scratch("steady_a"), b = scratch("steady_b");
  const auto ma = run_steady_sweep(c, {a, 1, {}});
  const auto mb = run_steady_sweep(c, {b, 3, {}});
  CHECK(ma.ok);
  CHECK(ma.exit_code == 0);
  CHECK(ma.files == mb.files);
  for (const auto& f : ma.files) CHECK(slurp(a / f) == slurp(b / f));

  std::set<std::string> on_disk;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) on_disk.insert(fs::relative(e.path(), a).generic_string());
  std::set<std::string> listed(ma.files.begin(), ma.files.end());
  listed.insert("manifest.json");
  CHECK(on_disk == listed);

  const auto manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["config_hash"] == config_hash(to_json(c)));
  CHECK(manifest["version"] == kVersion);
  const auto table = slurp(a / "steady.csv");
  CHECK(table.rfind("eps,root_index,M,residual,margin\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
}

TEST_CASE("relaxation flags a stationary start") {
  auto j = small_soft();
  j["eps"] = {0.05};
  j["initial"] = {{"kind", "steady"}};
  j["t_final"] = 2;
  const auto out = scratch("relax_steady");
  const auto m = run_relaxation(parse_config(j), {out, 1, {}});
  CHECK(m.ok);
  const auto fit = json::parse(slurp(out / "fit.json"));
  CHECK(fit[0]["stationary"] == true);
  CHECK_FALSE(fit[0].contains("alpha"));
}

TEST_CASE("relaxation fits a decay and compares with the gap") {
  auto j = json::parse(R"({
    "rate": {"kind": "soft_sigmoid", "a0": 3, "a1": 4, "lx": 0.05, "lmu": 1},
    "eps": [0.05], "grid": {"x_max": 26, "n": 300}, "t_final": 30, "fit_window": [10, 30],
    "snapshot_every": 300
  })");
  const auto out = scratch("relax_fit");
  const auto m = run_relaxation(parse_config(j), {out, 1, {}});
  CHECK(m.ok);
  const auto fit = json::parse(slurp(out / "fit.json"))[0];
  CHECK(fit["r2"].get<double>() >= 0.99);
  CHECK(fit["relative_difference"].get<double>() <= 0.1);
  CHECK(fs::exists(out / "snapshots/eps0/snapshot_t0.csv"));
}

TEST_CASE("spectrum sweep reports and guards the cut") {
  auto j = small_soft();
  j["eps"] = {0.0, 0.05};
  const auto out = scratch("spectrum");
  const auto m = run_spectrum_sweep(parse_config(j), {out, 2, {}});
  CHECK(m.ok);
  const auto rep = json::parse(slurp(out / "spectrum_report.json"));
  CHECK(rep["krein_rutman"]["positive_eigvec"] == true);
  CHECK(rep["krein_rutman"]["simple_zero"] == true);
  CHECK(rep["per_eps"].size() == 2);

  j["cut"] = 0.5;
  const auto bad = run_spectrum_sweep(parse_config(j), {scratch("spectrum_cut"), 1, {}});
  CHECK_FALSE(bad.ok);
  CHECK(bad.exit_code == 3);
}

TEST_CASE("basin at eps = 0 saturates the ladder") {
  auto j = small_soft();
  j["eps"] = {0.0};
  j["t_final"] = 10;
  j["fit_window"] = {2, 10};
  j["basin"] = {{"amplitudes", {0, 0.5, 1}}, {"bisections", 1}};
  const auto out = scratch("basin");
  const auto m = run_basin(parse_config(j), {out, 1, {}});
  CHECK(m.ok);
  const auto csv = slurp(out / "basin.csv");
  CHECK(csv == "eps,amplitude_star,saturated\n0,1,1\n");
}

TEST_CASE("check suite passes on a smooth model and honours the seed") {
  auto j = small_soft();
  j["eps"] = {0.0, 0.1};
  // a 30-long grid drops more than 1e-6 of the steady mass
  const auto shortgrid = run_checks(parse_config(j), {scratch("check_short"), 1, 5});
  CHECK_FALSE(shortgrid.ok);
  CHECK(shortgrid.checks["truncation"]["pass"] == false);

  j["grid"] = {{"x_max", 40}, {"n", 200}};
  const auto a = run_checks(parse_config(j), {scratch("check_a"), 1, 5});
  CHECK(a.ok);
  const auto b = run_checks(parse_config(j), {scratch("check_b"), 1, 5});
  CHECK(a.checks["lipschitz"]["max_ratio"] == b.checks["lipschitz"]["max_ratio"]);
}
