#include "elapsed/config.hpp"
#include "elapsed/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace elapsed {

namespace {

using nlohmann::json;

template <class T> T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

void check(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

const std::vector<std::string> kKnownKeys = {
    "rate", "delay", "eps", "grid", "initial", "t_final", "record_every", "snapshot_every",
    "fit_window", "scan", "cut", "compare_spectrum", "basin", "output", "seed"};

std::vector<double> parse_eps(const json& j) {
  std::vector<double> eps;
  if (j.is_array()) {
    for (const auto& v : j) {
      check(v.is_number(), "eps entries must be numbers");
      eps.push_back(v.get<double>());
    }
  } else if (j.is_object()) {
    const double from = get(j, "from", 0.0), to = get(j, "to", 0.0);
    const int steps = get(j, "steps", 0);
    check(steps >= 1, "eps range needs steps >= 1");
    for (int k = 0; k < steps; ++k)
      eps.push_back(steps == 1 ? from : from + (to - from) * k / (steps - 1));
  } else if (j.is_number()) {
    eps.push_back(j.get<double>());
  } else {
    throw ConfigError("eps must be a number, a list, or {from,to,steps}");
  }
  check(!eps.empty(), "eps list is empty");
  for (double e : eps) check(std::isfinite(e) && e >= 0, "eps values must be finite and >= 0");
  return eps;
}

} // namespace

ExperimentConfig parse_config(const json& j) {
  check(j.is_object(), "config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const auto& k : kKnownKeys) known = known || k == key;
    check(known, "unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  check(j.contains("rate"), "config needs a 'rate' block");
  c.rate = rate_from_json(j.at("rate"));
  c.delay = delay_from_json(j.contains("delay") ? j.at("delay") : json());
  if (j.contains("eps")) c.eps = parse_eps(j.at("eps"));

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check(g.is_object(), "grid must be an object");
    const double x_max = get(g, "x_max", c.grid.x_max());
    const int n = get(g, "n", c.grid.n());
    check(x_max > 0 && std::isfinite(x_max), "grid.x_max must be > 0");
    check(n >= 16 && n <= 100000, "grid.n must lie in [16, 100000]");
    c.grid = Grid(x_max, n);
  }

  if (j.contains("initial")) {
    const auto& ic = j.at("initial");
    check(ic.is_object(), "initial must be an object");
    const auto kind = get<std::string>(ic, "kind", "perturbed");
    if (kind == "steady") c.initial.kind = InitialSpec::Kind::Steady;
    else if (kind == "perturbed") c.initial.kind = InitialSpec::Kind::Perturbed;
    else if (kind == "uniform") c.initial.kind = InitialSpec::Kind::Uniform;
    else throw ConfigError("unknown initial kind '" + kind + "' (atoms are not supported)");
    c.initial.amplitude = get(ic, "amplitude", c.initial.amplitude);
    c.initial.shape = get(ic, "shape", c.initial.shape);
    c.initial.width = get(ic, "width", c.initial.width);
    check(c.initial.shape == "sine" || c.initial.shape == "bump" || c.initial.shape == "shift",
          "initial.shape must be sine, bump or shift");
    check(c.initial.amplitude >= 0 && std::isfinite(c.initial.amplitude), "initial.amplitude must be >= 0");
    check(c.initial.shape != "sine" || c.initial.amplitude <= 1,
          "sine amplitude above 1 produces a negative density");
    check(c.initial.width > 0, "initial.width must be > 0");
  }

  c.t_final = get(j, "t_final", c.t_final);
  check(c.t_final > 0 && std::isfinite(c.t_final), "t_final must be > 0");
  c.record_every = get(j, "record_every", c.record_every);
  c.snapshot_every = get(j, "snapshot_every", c.snapshot_every);
  check(c.record_every >= 1, "record_every must be >= 1");
  check(c.snapshot_every >= 0, "snapshot_every must be >= 0");
  if (j.contains("fit_window")) {
    const auto& w = j.at("fit_window");
    check(w.is_array() && w.size() == 2 && w[0].is_number() && w[1].is_number(),
          "fit_window must be [t1, t2]");
    c.fit_window = {w[0].get<double>(), w[1].get<double>()};
    check(c.fit_window[1] > c.fit_window[0] && c.fit_window[0] >= 0, "fit_window needs 0 <= t1 < t2");
  }
  if (j.contains("scan")) {
    const auto& s = j.at("scan");
    c.n_scan = get(s, "n_scan", c.n_scan);
    c.m_max = get(s, "m_max", c.m_max);
    check(c.n_scan >= 64, "scan.n_scan must be >= 64");
    check(c.m_max <= 0 || c.m_max >= c.rate.a1(), "scan.m_max must be >= a1");
  }
  if (j.contains("cut") && !j.at("cut").is_null()) {
    check(j.at("cut").is_number(), "cut must be a number");
    c.cut = j.at("cut").get<double>();
  }
  c.compare_spectrum = get(j, "compare_spectrum", c.compare_spectrum);
  if (j.contains("basin")) {
    const auto& b = j.at("basin");
    if (b.contains("amplitudes")) {
      c.basin_amplitudes.clear();
      for (const auto& v : b.at("amplitudes")) {
        check(v.is_number() && v.get<double>() >= 0, "basin amplitudes must be numbers >= 0");
        c.basin_amplitudes.push_back(v.get<double>());
      }
      check(!c.basin_amplitudes.empty(), "basin.amplitudes is empty");
      std::sort(c.basin_amplitudes.begin(), c.basin_amplitudes.end());
    }
    c.basin_bisections = get(b, "bisections", c.basin_bisections);
    check(c.basin_bisections >= 0 && c.basin_bisections <= 30, "basin.bisections must lie in [0, 30]");
  }
  if (c.initial.shape == "sine")
    for (double a : c.basin_amplitudes)
      check(a <= 1, "basin amplitudes above 1 give a negative density for the sine shape");
  c.output = get(j, "output", c.output);
  if (j.contains("seed")) {
    check(j.at("seed").is_number_unsigned() || j.at("seed").is_number_integer(), "seed must be an integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["rate"] = c.rate;
  j["delay"] = c.delay;
  j["eps"] = c.eps;
  j["grid"] = {{"x_max", c.grid.x_max()}, {"n", c.grid.n()}};
  const char* kinds[] = {"steady", "perturbed", "uniform"};
  j["initial"] = {{"kind", kinds[int(c.initial.kind)]},
                  {"amplitude", c.initial.amplitude},
                  {"shape", c.initial.shape},
                  {"width", c.initial.width}};
  j["t_final"] = c.t_final;
  j["record_every"] = c.record_every;
  j["snapshot_every"] = c.snapshot_every;
  j["fit_window"] = c.fit_window;
  j["scan"] = {{"n_scan", c.n_scan}, {"m_max", c.m_max}};
  j["cut"] = c.cut ? json(*c.cut) : json();
  j["compare_spectrum"] = c.compare_spectrum;
  j["basin"] = {{"amplitudes", c.basin_amplitudes}, {"bisections", c.basin_bisections}};
  j["output"] = c.output;
  j["seed"] = c.seed;
  return j;
}

std::string config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vec initial_density(const InitialSpec& spec, const Vec& F, const Grid& grid) {
  const Vec x = grid.centers();
  const double dx = grid.dx();
  Vec f(grid.n());
  switch (spec.kind) {
  case InitialSpec::Kind::Steady: f = F; break;
  case InitialSpec::Kind::Uniform:
    check(spec.width <= grid.x_max(), "uniform width exceeds the grid");
    for (int i = 0; i < grid.n(); ++i) f[i] = x[i] < spec.width ? 1.0 : 0.0;
    break;
  case InitialSpec::Kind::Perturbed:
    if (spec.shape == "sine") {
      f = F.array() * (1 + spec.amplitude * x.array().sin());
    } else if (spec.shape == "bump") {
      f = F.array() * (1 + spec.amplitude * (-(x.array() - 2).square() / 0.5).exp());
    } else {
      // age shift of the profile by `amplitude`, emptying [0, amplitude)
      const int s = int(std::lround(spec.amplitude / dx));
      f.setZero();
      for (int i = s; i < grid.n(); ++i) f[i] = F[i - s];
    }
    break;
  }
  check(f.minCoeff() >= 0, "initial density is negative somewhere");
  const double m = mass(f, dx);
  check(m > 0, "initial density has no mass");
  return f / m;
}

double default_cut(const RateModel& m, const DelayKernel& b) {
  const double astar = -m.a0() / 2;
  return b.is_dirac() ? astar : std::max(astar, -b.delta());
}

} // namespace elapsed
