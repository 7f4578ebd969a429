#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "elapsed/errors.hpp"
#include "elapsed/grid.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>
#include <sstream>

using namespace elapsed;

namespace {

// Brute-force W1: accumulate the CDF difference cell by cell in long double
// and integrate |.| with the trapezoid rule on cell edges.
double w1_oracle(const Vec& f, const Vec& g, double dx) {
  long double cdf = 0, acc = 0, prev = 0;
  for (int i = 0; i < f.size(); ++i) {
    cdf += (static_cast<long double>(f[i]) - g[i]) * dx;
    acc += 0.5L * (std::fabs(prev) + std::fabs(cdf)) * dx;
    prev = cdf;
  }
  return double(acc);
}

Vec random_density(std::mt19937_64& rng, const Grid& g) {
  std::uniform_real_distribution<double> U(0, 1);
  Vec f(g.n());
  for (auto& v : f) v = U(rng);
  return f / mass(f, g.dx());
}

} // namespace

TEST_CASE("grid geometry") {
  const Grid g(40, 800);
  CHECK(g.dx() == doctest::Approx(0.05));
  CHECK(g.center(0) == doctest::Approx(0.025));
  CHECK(g.left(800) == doctest::Approx(40));
  CHECK_THROWS_AS(Grid(40, 8), DomainError);
  CHECK_THROWS_AS(Grid(-1, 100), DomainError);
}

TEST_CASE("mass") {
  const Grid g(40, 800);
  CHECK(mass(DensityState(g)) == 0.0);
  const Vec f = cell_average(g, [](double x) { return std::exp(-x); });
  CHECK(mass(f, g.dx()) == doctest::Approx(1 - std::exp(-40.0)).epsilon(1e-6));
  // cell averages integrate exactly, midpoint values carry the dx^2/24 error
  Vec mid(g.n());
  for (int i = 0; i < g.n(); ++i) mid[i] = std::exp(-g.center(i));
  CHECK(std::abs(mass(mid, g.dx()) - 1) <= g.dx() * g.dx() / 24 * 1.01);
}

TEST_CASE("l1 norm") {
  const Grid g(10, 1000);
  CHECK(l1_norm(DensityState(g)) == 0.0);
  Vec ind = Vec::Zero(g.n());
  for (int i = 0; i < 100; ++i) ind[i] = (i % 2 ? 1.0 : -1.0);
  CHECK(l1_norm(ind, g.dx()) == doctest::Approx(1.0).epsilon(1e-12));
  const double w = l1_norm(ind, g.dx(), 1.0);
  CHECK(std::abs(w - (1 - std::exp(-1.0))) <= g.dx() * g.dx());
  CHECK(l1_norm(DensityState(g, ind), 1.0) == doctest::Approx(w));
}

TEST_CASE("w1 distance") {
  const Grid g(4, 400);
  Vec f = Vec::Zero(g.n()), h = Vec::Zero(g.n());
  f[50] = 1 / g.dx();  // centered at 0.505
  h[150] = 1 / g.dx(); // centered at 1.505
  const DensityState F(g, f), H(g, h);
  CHECK(w1_flat(F, F) == 0.0);
  CHECK(std::abs(w1_flat(F, H) - 1.0) <= g.dx());

  std::mt19937_64 rng(11);
  for (int k = 0; k < 10; ++k) {
    const Vec a = random_density(rng, g), b = random_density(rng, g);
    CHECK(std::abs(w1_flat(DensityState(g, a), DensityState(g, b)) - w1_oracle(a, b, g.dx())) <= 1e-12);
  }
  Vec heavy = 2 * f;
  CHECK_THROWS_AS(w1_flat(F, DensityState(g, heavy)), MassMismatch);
}

TEST_CASE("truncation bound") {
  const auto c = RateModel::constant(1);
  CHECK(truncation_bound(c, 40) <= 2 * std::exp(-20.0) * (1 + 1e-12));
  CHECK(truncation_bound(c, 40) >= std::exp(-40.0)); // the true tail mass of e^{-x}

  const auto s = RateModel::soft_sigmoid(1, 2, 1, 1);
  double prev = INFINITY;
  for (double X : {10.0, 20.0, 40.0, 80.0}) {
    const double b = truncation_bound(s, X);
    CHECK(b < prev);
    prev = b;
  }
  const double C = tail_constants(s).C * 2 / s.a0();
  const double e1 = truncation_bound(s, 15) / C, e2 = truncation_bound(s, 30) / C;
  CHECK(std::log(e2) == doctest::Approx(2 * std::log(e1)).epsilon(1e-12));
  CHECK(Grid(40, 800).covers(s, 1e-6));
  CHECK_FALSE(Grid(5, 100).covers(s, 1e-6));
}

TEST_CASE("gauss-legendre rules") {
  for (int n : {2, 3, 4, 6, 8, 10, 16}) {
    const auto gl = gauss_legendre_nodes(n);
    double w = 0, p = 0;
    for (auto [x, wt] : gl) {
      w += wt;
      p += wt * std::pow(x, 2 * n - 2);
    }
    CHECK(w == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(p == doctest::Approx(2.0 / (2 * n - 1)).epsilon(1e-13)); // exact up to degree 2n-1
  }
}

TEST_CASE("cell rates are well balanced") {
  const auto s = RateModel::soft_sigmoid(1, 2, 1, 1);
  const Grid g(40, 400);
  const CellRates cr(s, g);
  for (double mu : {0.0, 0.3, 1.7}) {
    const auto e = cr.evaluate(mu, true);
    Vec E = e.logE.array().exp();
    const double dx = g.dx();
    // upwind transport of E/dx is balanced by the loss term in every cell
    for (int i = 1; i < g.n() - 1; ++i)
      CHECK(std::abs((E[i - 1] - E[i]) / dx - e.r[i] * E[i]) <= 1e-12 * E[i - 1] / dx + 1e-300);
    CHECK(std::abs(E[g.n() - 2] / dx - e.r[g.n() - 1] * E[g.n() - 1]) <= 1e-12 * E[g.n() - 2] / dx + 1e-300);
    CHECK(std::abs((dx - E[0]) / dx - e.r[0] * E[0]) <= 1e-12);

    // the cell rates approximate a(x, mu) to first order
    for (int i : {3, 40, 150})
      CHECK(std::abs(e.r[i] - s.eval(g.center(i), mu)) <= 2 * dx * (s.a1() + s.sup_dx()));

    // analytic mu-derivative
    const double h = 1e-6;
    Vec rp, rm, rhop, rhom;
    cr.rates(mu + h, rp, rhop);
    cr.rates(std::max(0.0, mu - h), rm, rhom);
    const Vec fd = (rp - rm) / (mu + h - std::max(0.0, mu - h));
    CHECK((e.dr - fd).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("total integral against adaptive quadrature") {
  const auto s = RateModel::soft_sigmoid(1, 2, 1, 1);
  const CellRates cr(s, Grid(40, 800));
  for (double mu : {0.0, 0.5, 2.0}) {
    const double ref = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        [&](double x) { return std::exp(-s.primitive(x, mu)); }, 0.0,
        std::numeric_limits<double>::infinity(), 15, 1e-14);
    CHECK(cr.total_integral(mu) == doctest::Approx(ref).epsilon(1e-10));
    const double h = 1e-6;
    CHECK(cr.total_integral_dmu(mu + h) ==
          doctest::Approx((cr.total_integral(mu + 2 * h) - cr.total_integral(mu)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("density csv") {
  const Grid g(1, 16);
  std::ostringstream os;
  write_density_csv(os, DensityState(g, Vec::Ones(16)), "F");
  const auto s = os.str();
  CHECK(s.rfind("x,F\n0.03125,1\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 17);
}
