#include "elapsed/dynamics.hpp"
#include "elapsed/errors.hpp"

#include <boost/math/statistics/linear_regression.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <cmath>

namespace elapsed {

FixedPointResult solve_activity(const CellRates& cr, double eps, const Vec& f, double w0, double H,
                                std::optional<double> warm) {
  require(eps >= 0 && std::isfinite(eps), "connectivity must be >= 0");
  const double dx = cr.grid().dx();
  FixedPointResult out;
  auto P = [&](double mu) {
    cr.rates(eps * mu, out.r, out.rho);
    return out.r.dot(f) * dx;
  };
  if (eps == 0.0) {
    out.p = P(0.0);
    out.mu = w0 * out.p + H;
    out.iterations = 1;
    return out;
  }
  if (eps * cr.model().sup_dmu() >= 1)
    throw ContractionViolated("eps * sup|d_mu a| = " + std::to_string(eps * cr.model().sup_dmu()) +
                              " >= 1");

  // Fixed-point map T(mu) = w0 P(mu) + H, contractive with constant
  // w0 eps sup|d_mu a| < 1, so R(mu) = T(mu) - mu is strictly decreasing with
  // R(0) >= 0. Secant steps from the warm start settle most calls in a few
  // evaluations. If they stall (noisy residuals near the roundoff floor, or a
  // contraction constant close to 1) the root is bracketed and polished with
  // TOMS 748.
  const double tol = 1e-14;
  double last_p = 0;
  auto R = [&](double mu) {
    last_p = P(mu);
    return w0 * last_p + H - mu;
  };
  auto done = [&](double mu, double p, int it) {
    out.mu = mu;
    out.p = p;
    out.iterations = it;
    return out;
  };
  double mu = warm.value_or(std::max(0.0, w0 * P(0.0) + H));
  double prev_mu = 0, prev_res = 0;
  int evals = 0;
  for (bool have_prev = false; evals < 30;) {
    const double res = R(mu);
    ++evals;
    if (std::abs(res) <= tol * std::max(1.0, std::abs(mu))) return done(mu, last_p, evals);
    double next = mu + res;
    if (have_prev && res != prev_res) {
      const double s = mu - res * (mu - prev_mu) / (res - prev_res);
      if (std::isfinite(s)) next = s;
    }
    prev_mu = mu;
    prev_res = res;
    have_prev = true;
    mu = std::max(0.0, next);
  }

  double lo = 0, r_lo = R(0.0);
  if (r_lo <= 0) return done(0.0, last_p, evals + 1);
  double hi = std::max({2 * r_lo, 2 * mu, 1e-300}), r_hi = R(hi);
  for (int k = 0; r_hi > 0; ++k) {
    if (k > 200) throw NoConvergence("could not bracket the activity fixed point");
    lo = hi;
    r_lo = r_hi;
    hi *= 2;
    r_hi = R(hi);
  }
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      R, lo, hi, r_lo, r_hi,
      [&](double x, double y) { return std::abs(y - x) <= 4e-16 * std::max(1.0, std::abs(x)); }, iters);
  if (iters >= 200) throw NoConvergence("activity fixed point did not converge in 200 iterations");
  mu = 0.5 * (a + b);
  const double res = R(mu);
  if (std::abs(res) > 1e-12 * std::max(1.0, mu))
    throw NoConvergence("activity fixed point residual " + std::to_string(res));
  return done(mu, last_p, evals + int(iters) + 1);
}

double activity_fixed_point(const CellRates& cr, double eps, const Vec& f) {
  return solve_activity(cr, eps, f).mu;
}

double activity_fixed_point(const RateModel& model, double eps, const DensityState& f) {
  return activity_fixed_point(CellRates(model, f.grid), eps, f.values);
}

//----------------------------------------------------------------------------

std::vector<double> kernel_cell_weights(const DelayKernel& b, double dt, double tail_tol) {
  require(dt > 0, "time step must be positive");
  if (b.is_dirac()) return {1.0};
  const int depth = std::max(1, int(std::ceil(b.quantile_tail(tail_tol) / dt)));
  std::vector<double> w(depth);
  double s = 0;
  for (int k = 0; k < depth; ++k) s += w[k] = b.tail(k * dt) - b.tail((k + 1) * dt);
  if (std::abs(s - 1) > 1e-8)
    throw KernelNotDensity("delay weights sum to " + std::to_string(s));
  for (auto& v : w) v /= s;
  return w;
}

HistoryBuffer::HistoryBuffer(const DelayKernel& b, double dt, double tail_tol)
    : w_(kernel_cell_weights(b, dt, tail_tol)), ring_(w_.size() - 1, 0.0) {}

double HistoryBuffer::past_part() const {
  const std::size_t N = ring_.size();
  double s = 0;
  for (std::size_t k = 1; k <= N; ++k) s += w_[k] * ring_[(head_ + k - 1) % N];
  return s;
}

void HistoryBuffer::fill(double p) { std::fill(ring_.begin(), ring_.end(), p); }

void HistoryBuffer::push(double p) {
  const std::size_t N = ring_.size();
  if (N == 0) return;
  head_ = (head_ + N - 1) % N;
  ring_[head_] = p;
}

//----------------------------------------------------------------------------

StepResult step(const CellRates& cr, double eps, Vec& f, HistoryBuffer& history, double dt,
                std::optional<double> warm) {
  const int n = cr.grid().n();
  const double dx = cr.grid().dx();
  if (std::abs(dt - dx) > 1e-12 * dx)
    throw CFLViolation("dt must equal dx for the exact-shift scheme");
  require(f.size() == n, "density size does not match the grid");

  const auto fp = solve_activity(cr, eps, f, history.w0(), history.past_part(), warm);
  const Vec& rho = fp.rho;

  // Cell i+1 receives f_i and keeps the fraction 1/(1 + r_{i+1} dx) of it; the
  // last cell also keeps its own content. The rest fires and re-enters cell 0.
  double fired = 0;
  {
    const double in = f[n - 2] + f[n - 1];
    const double keep = in / (1 + rho[n - 1]);
    fired += in - keep;
    f[n - 1] = keep;
  }
  for (int i = n - 2; i >= 1; --i) {
    const double in = f[i - 1];
    const double keep = in / rho[i];
    fired += in * fp.r[i] * dx / rho[i];
    f[i] = keep;
  }
  f[0] = fired;
  if ((f.array() < 0).any()) throw NegativeDensity("negative cell after a step");

  history.push(fp.p);
  return {fp.p, fp.mu, fp.iterations};
}

//----------------------------------------------------------------------------

Trajectory simulate(const SimulationSpec& spec) {
  const Grid& grid = spec.grid;
  const double dx = grid.dx();
  require(spec.f0.size() == grid.n(), "initial density size does not match the grid");
  require((spec.f0.array() >= 0).all(), "initial density must be nonnegative");
  require(std::abs(mass(spec.f0, dx) - 1) <= 1e-8, "initial density must have mass 1");
  require(spec.record_every >= 1 && spec.snapshot_every >= 0, "bad recording cadence");
  require(spec.t_final >= 0, "final time must be >= 0");
  if (spec.reference) require(spec.reference->size() == grid.n(), "reference size mismatch");

  CellRates cr(spec.model, grid);
  HistoryBuffer hist(spec.kernel, dx);
  Vec f = spec.f0;

  // Pre-history: the instantaneous discharge of the initial datum.
  const auto p0 = solve_activity(cr, spec.eps, f);
  hist.fill(p0.p);

  Trajectory traj{grid, {}, {}};
  auto l1 = [&](const Vec& v) { return spec.reference ? l1_norm(v - *spec.reference, dx) : 0.0; };
  const long steps = std::lround(spec.t_final / dx);
  double warm = p0.mu;
  for (long k = 0; k < steps; ++k) {
    const double t = k * dx;
    if (spec.snapshot_every > 0 && k % spec.snapshot_every == 0) traj.snapshots.emplace_back(t, f);
    const bool record = k % spec.record_every == 0;
    const double m_before = mass(f, dx), d_before = record ? l1(f) : 0.0;
    const auto res = step(cr, spec.eps, f, hist, dx, warm);
    warm = res.m;
    if (record) traj.rows.push_back({t, m_before, res.p, res.m, d_before});
  }
  const double T = steps * dx;
  const auto last = solve_activity(cr, spec.eps, f, hist.w0(), hist.past_part(), warm);
  traj.rows.push_back({T, mass(f, dx), last.p, last.mu, l1(f)});
  if (spec.snapshot_every > 0) traj.snapshots.emplace_back(T, f);
  return traj;
}

double sup_distance(const Trajectory& a, const Trajectory& b) {
  require(a.grid == b.grid, "trajectories live on different grids");
  require(a.snapshots.size() == b.snapshots.size(), "trajectories have different snapshot sets");
  double s = 0;
  for (std::size_t k = 0; k < a.snapshots.size(); ++k) {
    require(std::abs(a.snapshots[k].first - b.snapshots[k].first) < 1e-9, "snapshot times differ");
    s = std::max(s, l1_norm(a.snapshots[k].second - b.snapshots[k].second, a.grid.dx()));
  }
  return s;
}

DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& norm, double t1,
                        double t2) {
  require(t2 > t1, "fit window needs t2 > t1");
  require(t.size() == norm.size(), "time and norm series differ in length");
  std::vector<double> x, y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t1 || t[k] > t2) continue;
    if (!(norm[k] > kNormFloor))
      throw WindowBelowFloor("norm " + std::to_string(norm[k]) + " at t=" + std::to_string(t[k]));
    x.push_back(t[k]);
    y.push_back(std::log(norm[k]));
  }
  if (x.size() < 3) throw WindowBelowFloor("fewer than three samples in the fit window");
  auto [c0, c1, r2] = boost::math::statistics::simple_ordinary_least_squares_with_R_squared(x, y);
  return {c1, std::exp(c0), r2, int(x.size())};
}

DecayFit fit_decay_rate(const Trajectory& traj, double t1, double t2) {
  std::vector<double> t, n;
  for (const auto& row : traj.rows) {
    t.push_back(row.t);
    n.push_back(row.l1_dist);
  }
  return fit_decay_rate(t, n, t1, t2);
}

//----------------------------------------------------------------------------

namespace {
Vec transport(const Vec& f, double dx) {
  const auto n = f.size();
  Vec out(n);
  out[0] = -f[0] / dx;
  for (Eigen::Index i = 1; i + 1 < n; ++i) out[i] = (f[i - 1] - f[i]) / dx;
  out[n - 1] = f[n - 2] / dx;
  return out;
}
} // namespace

Vec rhs_nodelay(const CellRates& cr, double eps, const Vec& f) {
  const double dx = cr.grid().dx();
  const auto fp = solve_activity(cr, eps, f);
  Vec out = transport(f, dx) - fp.r.cwiseProduct(f);
  out[0] += fp.mu / dx;
  return out;
}

ResidualReport nonlinear_residual(const CellRates& cr, double eps, const SteadyState& st, const Vec& g) {
  const double dx = cr.grid().dx();
  const Vec& F = st.F.values;
  require(g.size() == F.size(), "perturbation size does not match the grid");
  if (std::abs(mass(g, dx)) > 1e-12 * std::max(1.0, l1_norm(g, dx)))
    throw MassNotZero("perturbation carries mass " + std::to_string(mass(g, dx)));
  const Vec f = F + g;
  require((f.array() >= 0).all(), "F + g must be nonnegative");

  const auto base = solve_activity(cr, eps, F, 1.0, 0.0, st.M);
  const double M = base.mu;
  Vec ap = Vec::Zero(F.size());
  if (eps > 0) ap = eps * cr.evaluate(eps * M, true).dr;
  const double kappa = ap.dot(F) * dx;
  if (kappa >= 1) throw KappaGeqOne("kappa = " + std::to_string(kappa));
  const double dmu_lin = base.r.dot(g) * dx / (1 - kappa);

  const auto pert = solve_activity(cr, eps, f, 1.0, 0.0, M);
  Vec Z = -(pert.r - base.r).cwiseProduct(f) + ap.cwiseProduct(F) * dmu_lin;
  Z[0] += (pert.mu - M - dmu_lin) / dx;
  return {l1_norm(Z, dx), mass(Z, dx)};
}

ResidualReport nonlinear_residual(const RateModel& model, double eps, const SteadyState& st,
                                  const DensityState& g) {
  return nonlinear_residual(CellRates(model, g.grid), eps, st, g.values);
}

double gronwall_bound(double C1, double C2, double a, double u0, double t) {
  const double s = a + 2 * C2 * u0;
  require(s < 0, "Gronwall bound needs a + 2 C2 u0 < 0");
  return (1 + C1 * u0 * C2 / std::abs(s)) * C1 * std::exp(a * t) * u0;
}

} // namespace elapsed
