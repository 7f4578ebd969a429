#include "elapsed/runners.hpp"
#include "elapsed/dynamics.hpp"
#include "elapsed/errors.hpp"
#include "elapsed/spectrum.hpp"
#include "elapsed/steady.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace elapsed {

using nlohmann::json;
namespace fs = std::filesystem;

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(std::max(count, 0));
  const int k = std::max(1, std::min(workers, count));
  if (k == 1) {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < k; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

json to_json(const RunManifest& m) {
  return {{"command", m.command},   {"config_hash", m.config_hash}, {"version", m.version},
          {"files", m.files},       {"wall_clock_s", m.wall_clock_s}, {"checks", m.checks},
          {"ok", m.ok},             {"exit_code", m.exit_code}};
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Collects emitted files and writes the manifest last.
class Run {
public:
  Run(const std::string& command, const ExperimentConfig& c, const RunOptions& opt)
      : out_(opt.out), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_);
    m_.command = command;
    m_.config_hash = config_hash(to_json(c));
  }

  void write(const std::string& rel, const std::string& content) {
    const fs::path p = out_ / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + p.string());
    os << content;
    std::lock_guard<std::mutex> lock(mu_);
    m_.files.push_back(rel);
  }

  void check(const std::string& name, bool pass, json detail = json::object()) {
    detail["pass"] = pass;
    m_.checks[name] = detail;
    if (!pass) {
      m_.ok = false;
      if (m_.exit_code == 0) m_.exit_code = 3;
    }
  }

  RunManifest finish() {
    m_.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::sort(m_.files.begin(), m_.files.end());
    std::ofstream os(out_ / "manifest.json");
    os << to_json(m_).dump(2) << "\n";
    return m_;
  }

  RunManifest& manifest() { return m_; }

private:
  fs::path out_;
  std::chrono::steady_clock::time_point start_;
  RunManifest m_;
  std::mutex mu_;
};

std::string density_csv(const DensityState& f, const std::string& name) {
  std::ostringstream os;
  write_density_csv(os, f, name);
  return os.str();
}

SteadyState steady_for(const CellRates& cr, const ExperimentConfig& c, double eps) {
  return unique_steady(cr, eps, {c.m_max, c.n_scan});
}

GeneratorMatrix generator_for(const ExperimentConfig& c, double eps, const SteadyState& st) {
  return c.delay.is_dirac() ? assemble_nodelay(c.rate, eps, st)
                            : assemble_delay(c.rate, c.delay, eps, st);
}

SimulationSpec sim_spec(const ExperimentConfig& c, double eps, const Vec& f0, const Vec& F) {
  return {c.rate, c.delay, eps, c.grid, f0, c.t_final, c.record_every, c.snapshot_every, F};
}

double max_mass_drift(const Trajectory& tr) {
  double d = 0;
  for (const auto& r : tr.rows) d = std::max(d, std::abs(r.mass - 1));
  return d;
}

} // namespace

//----------------------------------------------------------------------------

RunManifest run_steady_sweep(const ExperimentConfig& c, const RunOptions& opt) {
  Run run("steady", c, opt);
  CellRates cr(c.rate, c.grid);
  const int K = int(c.eps.size());
  std::vector<std::vector<SteadyState>> roots(K);
  std::vector<std::vector<std::string>> warnings(K);
  parallel_for(K, opt.workers, [&](int k) {
    roots[k] = solve_steady(cr, c.eps[k], {c.m_max, c.n_scan}, &warnings[k]);
  });

  std::ostringstream table;
  table << "eps,root_index,M,residual,margin\n";
  double worst_mass = 0, worst_res = 0;
  double eps0 = -1;
  bool prefix = true;
  json warn = json::array();
  for (int k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < roots[k].size(); ++j) {
      const auto& s = roots[k][j];
      table << num(c.eps[k]) << "," << j << "," << num(s.M) << "," << num(s.residual) << ","
            << num(s.margin) << "\n";
      run.write("profiles/eps" + std::to_string(k) + "_root" + std::to_string(j) + ".csv",
                density_csv(s.F, "F"));
      worst_mass = std::max(worst_mass, std::abs(mass(s.F) - 1));
      worst_res = std::max(worst_res, s.residual);
    }
    const bool unique = roots[k].size() == 1 && roots[k][0].margin > 0;
    if (prefix && unique) eps0 = std::max(eps0, c.eps[k]);
    prefix = prefix && unique;
    for (const auto& w : warnings[k]) warn.push_back(w);
  }
  run.write("steady.csv", table.str());
  run.check("normalization", worst_mass <= 1e-10, {{"max_mass_error", worst_mass}});
  run.check("residual", worst_res <= 1e-12, {{"max_residual", worst_res}});
  run.manifest().checks["empirical_unique_eps"] = eps0;
  run.manifest().checks["warnings"] = warn;
  return run.finish();
}

RunManifest run_relaxation(const ExperimentConfig& c, const RunOptions& opt) {
  Run run("relax", c, opt);
  CellRates cr(c.rate, c.grid);
  const int K = int(c.eps.size());
  std::vector<json> fits(K);
  std::vector<double> drift(K);
  parallel_for(K, opt.workers, [&](int k) {
    const double eps = c.eps[k];
    const auto st = steady_for(cr, c, eps);
    const Vec f0 = initial_density(c.initial, st.F.values, c.grid);
    const auto tr = simulate(sim_spec(c, eps, f0, st.F.values));
    drift[k] = max_mass_drift(tr);

    std::ostringstream os;
    os << "t,mass,p,m,l1_dist\n";
    for (const auto& r : tr.rows)
      os << num(r.t) << "," << num(r.mass) << "," << num(r.p) << "," << num(r.m) << ","
         << num(r.l1_dist) << "\n";
    run.write("trajectory_eps" + std::to_string(k) + ".csv", os.str());
    for (const auto& [t, f] : tr.snapshots)
      run.write("snapshots/eps" + std::to_string(k) + "/snapshot_t" + tag(t) + ".csv",
                density_csv(DensityState(c.grid, f), "f"));

    json fit = {{"eps", eps}, {"M", st.M}, {"max_mass_drift", drift[k]}};
    const bool stationary = c.initial.kind == InitialSpec::Kind::Steady ||
                            tr.rows.front().l1_dist <= kNormFloor;
    fit["stationary"] = stationary;
    if (!stationary) {
      try {
        const auto d = fit_decay_rate(tr, c.fit_window[0], c.fit_window[1]);
        fit["alpha"] = d.alpha;
        fit["C"] = d.C;
        fit["r2"] = d.r2;
        if (c.compare_spectrum && c.grid.n() <= 3000) {
          const auto rep = spectrum_report(generator_for(c, eps, st), c.cut.value_or(default_cut(c.rate, c.delay)));
          fit["gap"] = rep.gap;
          fit["relative_difference"] = std::abs(d.alpha - rep.gap) / std::abs(rep.gap);
        }
      } catch (const WindowBelowFloor& e) {
        fit["fit_error"] = e.what();
      }
    }
    fits[k] = fit;
  });
  run.write("fit.json", json(fits).dump(2) + "\n");
  double worst = 0;
  for (double d : drift) worst = std::max(worst, d);
  run.check("mass_conservation", worst <= 1e-10, {{"max_mass_drift", worst}});
  return run.finish();
}

RunManifest run_spectrum_sweep(const ExperimentConfig& c, const RunOptions& opt) {
  Run run("spectrum", c, opt);
  const double cut = c.cut.value_or(default_cut(c.rate, c.delay));
  if (c.grid.n() > 3000) throw ConfigError("spectrum runs allow at most 3000 cells per block");
  CellRates cr(c.rate, c.grid);
  const int K = int(c.eps.size());
  std::vector<SpectrumReport> reps(K);
  std::vector<json> rows(K);
  int n_v = 0;
  parallel_for(K, opt.workers, [&](int k) {
    const double eps = c.eps[k];
    const auto st = steady_for(cr, c, eps);
    const auto G = generator_for(c, eps, st);
    reps[k] = spectrum_report(G, cut);
    const Vec colsum = G.full.transpose() * G.conserved;
    const double split = (G.A_mat + G.B_mat - G.full).cwiseAbs().maxCoeff();
    int near_zero = 0;
    for (const auto& l : reps[k].eigenvalues) near_zero += std::abs(l) < 1e-6;
    rows[k] = {{"eps", eps},
               {"gap", reps[k].gap},
               {"gap_eig", {reps[k].gap_eig.real(), reps[k].gap_eig.imag()}},
               {"zero_eig", {reps[k].zero_eig.real(), reps[k].zero_eig.imag()}},
               {"zero_residual", reps[k].zero_residual},
               {"count_above_cut", reps[k].count_above_cut},
               {"metzler", reps[k].metzler},
               {"positive_eigvec", reps[k].positive_eigvec},
               {"simple_zero", near_zero == 1},
               {"kappa", G.kappa},
               {"column_sum_max", colsum.cwiseAbs().maxCoeff()},
               {"split_error", split},
               {"dimension", reps[k].dim}};
    if (k == 0) n_v = G.n_v;
  });

  std::ostringstream csv;
  csv << "eps,re,im\n";
  for (int k = 0; k < K; ++k)
    for (const auto& l : reps[k].eigenvalues)
      csv << num(c.eps[k]) << "," << num(l.real()) << "," << num(l.imag()) << "\n";
  run.write("spectrum.csv", csv.str());

  // Follow the leading nonzero eigenvalue across eps by nearest-neighbour
  // matching and measure the largest relative jump of the gap.
  std::vector<cplx> tracked{reps[0].gap_eig};
  double max_jump = 0;
  for (int k = 1; k < K; ++k) {
    const auto& ev = reps[k].eigenvalues;
    cplx best = ev[0];
    double bestd = INFINITY;
    for (const auto& l : ev)
      if (l != reps[k].zero_eig && std::abs(l - tracked.back()) < bestd) {
        bestd = std::abs(l - tracked.back());
        best = l;
      }
    tracked.push_back(best);
    if (reps[k - 1].gap != 0)
      max_jump = std::max(max_jump, std::abs(reps[k].gap - reps[k - 1].gap) / std::abs(reps[k - 1].gap));
  }
  json track = json::array();
  for (int k = 0; k < K; ++k) track.push_back({c.eps[k], tracked[k].real(), tracked[k].imag()});

  const double alpha = reps[0].gap / 2;
  bool dominant_ok = true;
  double worst_zero = 0, worst_col = 0;
  for (int k = 0; k < K; ++k) {
    int above = 0;
    for (const auto& l : reps[k].eigenvalues) above += l.real() > alpha;
    dominant_ok = dominant_ok && above == 1;
    worst_zero = std::max(worst_zero, std::abs(reps[k].zero_eig));
    worst_col = std::max(worst_col, rows[k]["column_sum_max"].get<double>());
  }

  json report = {{"cut", cut},
                 {"grid", {{"x_max", c.grid.x_max()}, {"n", c.grid.n()}, {"dx", c.grid.dx()}, {"n_v", n_v}}},
                 {"model", c.rate.id()},
                 {"kernel", c.delay.id()},
                 {"per_eps", rows},
                 {"tracked_eigenvalue", track},
                 {"max_relative_gap_jump", max_jump},
                 {"dominant_alpha", alpha}};
  if (c.eps[0] == 0.0 && c.delay.is_dirac())
    report["krein_rutman"] = {{"metzler", reps[0].metzler},
                              {"positive_eigvec", reps[0].positive_eigvec},
                              {"simple_zero", rows[0]["simple_zero"]}};
  run.write("spectrum_report.json", report.dump(2) + "\n");

  run.check("cut_below_zero", cut < 0 && reps[0].count_above_cut > 0, {{"cut", cut}});
  run.check("zero_eigenvalue", worst_zero <= 1e-8, {{"max_abs", worst_zero}});
  run.check("conservation", worst_col <= 1e-10, {{"max_column_sum", worst_col}});
  run.check("dominant_count", dominant_ok, {{"alpha", alpha}});
  run.check("gap_continuity", max_jump <= 0.05, {{"max_relative_jump", max_jump}});
  return run.finish();
}

RunManifest run_basin(const ExperimentConfig& c, const RunOptions& opt) {
  Run run("basin", c, opt);
  CellRates cr(c.rate, c.grid);
  const int K = int(c.eps.size());
  std::vector<double> star(K);
  std::vector<int> saturated(K);
  parallel_for(K, opt.workers, [&](int k) {
    const double eps = c.eps[k];
    const auto st = steady_for(cr, c, eps);
    auto decays = [&](double amp) {
      if (amp == 0) return true;
      InitialSpec ic = c.initial;
      ic.kind = InitialSpec::Kind::Perturbed;
      ic.amplitude = amp;
      try {
        const Vec f0 = initial_density(ic, st.F.values, c.grid);
        SimulationSpec sp = sim_spec(c, eps, f0, st.F.values);
        sp.snapshot_every = 0;
        const auto tr = simulate(sp);
        return fit_decay_rate(tr, c.fit_window[0], c.fit_window[1]).alpha < 0;
      } catch (const WindowBelowFloor&) {
        return true; // fell below the floor inside the window
      } catch (const Error&) {
        return false;
      }
    };
    double lo = 0, hi = -1;
    for (double a : c.basin_amplitudes) {
      if (decays(a)) {
        lo = a;
      } else {
        hi = a;
        break;
      }
    }
    if (hi < 0) {
      star[k] = lo;
      saturated[k] = 1;
      return;
    }
    for (int b = 0; b < c.basin_bisections; ++b) {
      const double mid = 0.5 * (lo + hi);
      (decays(mid) ? lo : hi) = mid;
    }
    star[k] = lo;
  });
  std::ostringstream csv;
  csv << "eps,amplitude_star,saturated\n";
  bool monotone = true;
  for (int k = 0; k < K; ++k) {
    csv << num(c.eps[k]) << "," << num(star[k]) << "," << saturated[k] << "\n";
    if (k > 0 && c.eps[k] >= c.eps[k - 1] && star[k] > star[k - 1] + 1e-12) monotone = false;
  }
  run.write("basin.csv", csv.str());
  run.check("basin_nonincreasing", monotone);
  return run.finish();
}

//----------------------------------------------------------------------------

namespace {

// Smooth random mass-zero perturbation bounded by F/2 in absolute value.
Vec random_perturbation(std::mt19937_64& rng, const Vec& F, const Grid& g) {
  std::uniform_real_distribution<double> U(-1, 1);
  const Vec x = g.centers();
  Vec s = Vec::Zero(g.n());
  for (int k = 1; k <= 4; ++k) s += U(rng) * (k * 0.7 * x.array() + 3 * U(rng)).sin().matrix();
  s /= 4;
  Vec h = 0.25 * F.cwiseProduct(s);
  return h - F * mass(h, g.dx());
}

Vec random_density(std::mt19937_64& rng, const Grid& g, double support) {
  std::uniform_real_distribution<double> U(0, 1);
  const Vec x = g.centers();
  Vec f = Vec::Zero(g.n());
  for (int k = 0; k < 3; ++k) {
    const double c = U(rng) * support, w = 0.2 + U(rng);
    f += (U(rng) * (-(x.array() - c).square() / (w * w)).exp()).matrix();
  }
  return f / mass(f, g.dx());
}

} // namespace

RunManifest run_checks(const ExperimentConfig& c, const RunOptions& opt) {
  Run run("check", c, opt);
  std::mt19937_64 rng(opt.seed.value_or(c.seed));
  const Grid grid = c.grid;
  CellRates cr(c.rate, grid);
  const double eps_max = *std::max_element(c.eps.begin(), c.eps.end());

  const auto hyp = check_rate_hypotheses(c.rate, grid.x_max(), 2 * c.rate.a1());
  json wit = json::array();
  for (const auto& w : hyp.witnesses) wit.push_back({w.hypothesis, w.x, w.mu, w.detail});
  run.manifest().checks["rate_hypotheses"] = {
      {"a1", hyp.passes_a1}, {"a2", hyp.passes_a2}, {"a3", hyp.passes_a3}, {"witnesses", wit}};
  if (c.rate.smooth())
    run.check("rate_hypotheses_smooth", hyp.passes_a1 && hyp.passes_a2 && hyp.passes_a3);

  const auto dh = check_delay_hypothesis(c.delay);
  run.check("delay_hypothesis", dh.finite && std::abs(dh.mass - 1) <= 1e-8,
            {{"mass", dh.mass}, {"weighted_integral", dh.weighted_integral}, {"instantaneous", dh.instantaneous}});
  run.check("truncation", grid.covers(c.rate, 1e-6), {{"bound", truncation_bound(c.rate, grid)}});

  const auto st = steady_for(cr, c, eps_max);
  run.check("steady_normalization", std::abs(mass(st.F) - 1) <= 1e-10 && st.residual <= 1e-12,
            {{"mass", mass(st.F)}, {"residual", st.residual}, {"eps", eps_max}});

  SimulationSpec sp = sim_spec(c, eps_max, initial_density(c.initial, st.F.values, grid), st.F.values);
  sp.t_final = 200 * grid.dx();
  sp.snapshot_every = 0;
  const double drift = max_mass_drift(simulate(sp));
  run.check("mass_conservation", drift <= 1e-10, {{"max_drift", drift}});

  if (c.rate.smooth()) {
    const auto G = generator_for(c, eps_max, st);
    const double col = (G.full.transpose() * G.conserved).cwiseAbs().maxCoeff();
    const double split = (G.A_mat + G.B_mat - G.full).cwiseAbs().maxCoeff();
    run.check("generator_conservation", col <= 1e-10, {{"max_column_sum", col}});
    run.check("splitting_exact", split <= 1e-12 * G.full.cwiseAbs().maxCoeff(), {{"max_error", split}});

    if (eps_max > 0 && c.delay.is_dirac()) {
      double lo = INFINITY, hi = 0, worst_mean = 0;
      for (int k = 0; k < 5; ++k) {
        const Vec g = random_perturbation(rng, st.F.values, grid);
        const auto r1 = nonlinear_residual(cr, eps_max, st, g);
        const auto r2 = nonlinear_residual(cr, eps_max, st, Vec(g / 2));
        lo = std::min(lo, r1.l1 / r2.l1);
        hi = std::max(hi, r1.l1 / r2.l1);
        worst_mean = std::max(worst_mean, std::abs(r1.mean));
      }
      run.check("quadratic_remainder", lo >= 3.5 && hi <= 4.5 && worst_mean <= 1e-12,
                {{"min_ratio", lo}, {"max_ratio", hi}, {"max_mean", worst_mean}});
    }

    if (eps_max * c.rate.sup_dmu() < 1) {
      double worst = 0;
      for (int k = 0; k < 20; ++k) {
        const Vec f = random_density(rng, grid, grid.x_max() / 2);
        const Vec g = random_density(rng, grid, grid.x_max() / 2);
        const double lhs = std::abs(activity_fixed_point(cr, eps_max, f) - activity_fixed_point(cr, eps_max, g)) *
                           (1 - eps_max * c.rate.sup_dmu());
        const double rhs = c.rate.w1inf_norm() * w1_flat(DensityState(grid, f), DensityState(grid, g));
        worst = std::max(worst, lhs / rhs);
      }
      run.check("lipschitz", worst <= 1.0, {{"max_ratio", worst}});
    }
  }
  run.write("check.json", run.manifest().checks.dump(2) + "\n");
  return run.finish();
}

} // namespace elapsed
