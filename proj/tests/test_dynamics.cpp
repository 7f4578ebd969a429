#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "elapsed/dynamics.hpp"
#include "elapsed/errors.hpp"

#include <cmath>
#include <random>

using namespace elapsed;

namespace {

const RateModel soft = RateModel::soft_sigmoid(1, 2, 1, 1);
const Grid grid(40, 800);

Vec uniform_on(const Grid& g, double width) {
  Vec f(g.n());
  for (int i = 0; i < g.n(); ++i) f[i] = g.center(i) < width ? 1.0 : 0.0;
  return f / mass(f, g.dx());
}

Vec sine_perturbed(const Vec& F, const Grid& g, double amp) {
  Vec f(g.n());
  for (int i = 0; i < g.n(); ++i) f[i] = F[i] * (1 + amp * std::sin(g.center(i)));
  return f / mass(f, g.dx());
}

} // namespace

TEST_CASE("activity of the steady profile is its activity level") {
  const CellRates cr(soft, grid);
  for (double eps : {0.0, 0.1, 0.2}) {
    const auto st = unique_steady(cr, eps);
    CHECK(std::abs(activity_fixed_point(cr, eps, st.F.values) - st.M) <= 1e-10);
  }
}

TEST_CASE("eps = 0 needs no iteration") {
  const CellRates cr(soft, grid);
  const Vec f = uniform_on(grid, 2);
  const auto r = solve_activity(cr, 0, f);
  CHECK(r.iterations == 1);
  // continuous value: int_0^2 (1 - e^{-x}) dx / 2
  CHECK(r.mu == doctest::Approx((2 - (1 - std::exp(-2.0))) / 2).epsilon(2 * grid.dx()));
}

TEST_CASE("activity fixed point against bisection") {
  const CellRates cr(soft, grid);
  const double eps = 0.1;
  const Vec f = uniform_on(grid, 2);
  Vec r, rho;
  auto G = [&](double mu) {
    cr.rates(eps * mu, r, rho);
    return r.dot(f) * grid.dx() - mu;
  };
  double lo = 0, hi = soft.a1();
  REQUIRE(G(lo) > 0);
  REQUIRE(G(hi) < 0);
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (G(mid) > 0 ? lo : hi) = mid;
  }
  CHECK(std::abs(activity_fixed_point(cr, eps, f) - 0.5 * (lo + hi)) <= 1e-10);
}

TEST_CASE("fixed point near the contraction limit") {
  // contraction constant 0.99: plain and damped iteration crawl here
  const auto m = RateModel::soft_sigmoid(0.5, 10, 2, 0.1);
  const Grid g(40, 400);
  const CellRates cr(m, g);
  const double eps = 0.99 / m.sup_dmu();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 1);
  for (int k = 0; k < 20; ++k) {
    Vec f(g.n());
    const double c = 8 * U(rng);
    for (int i = 0; i < g.n(); ++i) f[i] = std::exp(-std::pow((g.center(i) - c) / 0.3, 2)) + 1e-3 * U(rng);
    f /= mass(f, g.dx());
    const auto r = solve_activity(cr, eps, f);
    CHECK(std::abs(r.p - r.mu) <= 1e-12 * std::max(1.0, r.mu));
  }
  CHECK_THROWS_AS(solve_activity(cr, 1.01 / m.sup_dmu(), uniform_on(g, 2)), ContractionViolated);
}

TEST_CASE("non-smooth model cannot be coupled") {
  const CellRates cr(RateModel::step_threshold(2, 0.5, 1), Grid(20, 200));
  CHECK_THROWS_AS(activity_fixed_point(cr, 0.1, uniform_on(Grid(20, 200), 2)), ContractionViolated);
  CHECK_NOTHROW(activity_fixed_point(cr, 0.0, uniform_on(Grid(20, 200), 2)));
}

TEST_CASE("delay kernel cell weights") {
  const double tau = 0.5, dt = 0.05;
  const auto w = kernel_cell_weights(DelayKernel::exp(tau), dt);
  double s = 0;
  for (double v : w) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  for (int k : {0, 3, 20})
    CHECK(w[k] == doctest::Approx(std::exp(-k * dt / tau) - std::exp(-(k + 1) * dt / tau)).epsilon(1e-9));
  CHECK(kernel_cell_weights(DelayKernel::dirac(), dt) == std::vector<double>{1.0});
}

TEST_CASE("history buffer") {
  HistoryBuffer h(DelayKernel::exp(0.2), 0.05);
  const auto& w = h.weights();
  h.fill(2.0);
  double s = 0;
  for (std::size_t k = 1; k < w.size(); ++k) s += w[k];
  CHECK(h.past_part() == doctest::Approx(2 * s).epsilon(1e-14));
  h.push(5.0);
  h.push(7.0); // p(t - dt) = 7, p(t - 2 dt) = 5
  CHECK(h.past_part() == doctest::Approx(7 * w[1] + 5 * w[2] + 2 * (s - w[1] - w[2])).epsilon(1e-14));
}

TEST_CASE("steady profile is a fixed point of the stepper") {
  const CellRates cr(soft, grid);
  const double eps = 0.1;
  const auto st = unique_steady(cr, eps);
  Vec f = st.F.values;
  HistoryBuffer h(DelayKernel::dirac(), grid.dx());
  for (int k = 0; k < 50; ++k) {
    const auto r = step(cr, eps, f, h, grid.dx());
    CHECK(std::abs(r.m - r.p) <= 1e-14 * r.p); // instantaneous kernel, up to the solver tolerance
    CHECK(std::abs(r.p - st.M) <= grid.dx());
  }
  CHECK(l1_norm(Vec(f - st.F.values), grid.dx()) <= 1e-12);
  Vec g = st.F.values;
  CHECK_THROWS_AS(step(cr, eps, g, h, 2 * grid.dx()), CFLViolation);
}

TEST_CASE("mass is conserved exactly up to rounding") {
  const auto c = RateModel::constant(1.3);
  const CellRates cr(c, grid);
  Vec f = uniform_on(grid, 3);
  HistoryBuffer h(DelayKernel::dirac(), grid.dx());
  for (int k = 0; k < 100; ++k) step(cr, 0.3, f, h, grid.dx());
  CHECK(std::abs(mass(f, grid.dx()) - 1) <= 1e-12);

  const CellRates cs(soft, grid);
  Vec g = uniform_on(grid, 3);
  HistoryBuffer hd(DelayKernel::erlang(3, 0.4), grid.dx());
  hd.fill(activity_fixed_point(cs, 0.1, g));
  for (int k = 0; k < 500; ++k) step(cs, 0.1, g, hd, grid.dx());
  CHECK(std::abs(mass(g, grid.dx()) - 1) <= 1e-12);
  CHECK(g.minCoeff() >= 0);
}

TEST_CASE("simulate stays at the steady state and is deterministic") {
  const CellRates cr(soft, grid);
  const auto st = unique_steady(cr, 0.05);
  SimulationSpec sp{soft, DelayKernel::dirac(), 0.05, grid, st.F.values, 5.0, 10, 0, st.F.values};
  const auto tr = simulate(sp);
  for (const auto& r : tr.rows) CHECK(r.l1_dist <= 1e-12);
  CHECK(tr.rows.back().t == doctest::Approx(5.0));

  sp.f0 = sine_perturbed(st.F.values, grid, 0.1);
  sp.snapshot_every = 20;
  const auto a = simulate(sp), b = simulate(sp);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) CHECK(a.rows[k].l1_dist == b.rows[k].l1_dist);
  CHECK(sup_distance(a, b) == 0.0);
  CHECK(a.snapshots.size() == 6); // t = 0 and the final time included
}

TEST_CASE("decay fit") {
  std::vector<double> t, y;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    y.push_back(3 * std::exp(-0.7 * t.back()));
  }
  const auto fit = fit_decay_rate(t, y, 1, 9);
  CHECK(std::abs(fit.alpha + 0.7) <= 1e-12);
  CHECK(std::abs(fit.C - 3) <= 1e-11);
  CHECK(std::abs(fit.r2 - 1) <= 1e-12);
  std::vector<double> tiny(t.size(), 1e-15);
  CHECK_THROWS_AS(fit_decay_rate(t, tiny, 1, 9), WindowBelowFloor);
}

TEST_CASE("constant rate relaxes at least at half the rate") {
  const double a = 1.0;
  const auto c = RateModel::constant(a);
  const Grid g(30, 600);
  const auto st = unique_steady(CellRates(c, g), 0);
  SimulationSpec sp{c, DelayKernel::dirac(), 0.0, g, sine_perturbed(st.F.values, g, 0.5), 20.0, 1, 0,
                    st.F.values};
  const auto fit = fit_decay_rate(simulate(sp), 4, 16);
  CHECK(fit.alpha <= -a / 2);
}

TEST_CASE("no-delay right-hand side vanishes at the steady state") {
  const CellRates cr(soft, grid);
  const auto st = unique_steady(cr, 0.1);
  CHECK(rhs_nodelay(cr, 0.1, st.F.values).cwiseAbs().maxCoeff() <= 1e-12);
  const Vec f = uniform_on(grid, 2);
  CHECK(std::abs(rhs_nodelay(cr, 0.1, f).sum() * grid.dx()) <= 1e-13);
}

TEST_CASE("nonlinear residual is quadratic") {
  const CellRates cr(soft, grid);
  const auto st = unique_steady(cr, 0.1);
  const Vec F = st.F.values;
  Vec g(grid.n());
  for (int i = 0; i < grid.n(); ++i) g[i] = F[i] * 0.3 * std::sin(1.3 * grid.center(i) + 0.4);
  g -= F * mass(g, grid.dx());

  CHECK(nonlinear_residual(cr, 0.1, st, Vec::Zero(grid.n())).l1 == 0.0);
  const auto r1 = nonlinear_residual(cr, 0.1, st, g), r2 = nonlinear_residual(cr, 0.1, st, Vec(g / 2));
  CHECK(r1.l1 / r2.l1 >= 3.5);
  CHECK(r1.l1 / r2.l1 <= 4.5);
  CHECK(std::abs(r1.mean) <= 1e-13);

  const auto st0 = unique_steady(cr, 0);
  CHECK(nonlinear_residual(cr, 0, st0, g).l1 <= 1e-15);
  Vec bad = g;
  bad[0] += 1;
  CHECK_THROWS_AS(nonlinear_residual(cr, 0.1, st, bad), MassNotZero);
}

TEST_CASE("gronwall majorant") {
  CHECK(gronwall_bound(1, 1, -1, 0.1, 0) >= 0.1); // a majorant, not an identity at t = 0
  CHECK_THROWS_AS(gronwall_bound(1, 1, -1, 0.5, 1), DomainError);
  double prev = INFINITY;
  for (double t : {0.5, 1.0, 2.0, 4.0}) {
    const double u = gronwall_bound(1, 1, -1, 0.1, t);
    CHECK(u < prev);
    prev = u;
  }
}
