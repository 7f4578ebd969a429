#include "elapsed/grid.hpp"
#include "elapsed/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace elapsed {

Grid::Grid(double x_max, int n) : x_max_(x_max), n_(n) {
  require(std::isfinite(x_max) && x_max > 0, "grid needs x_max > 0");
  require(n >= 16, "grid needs at least 16 cells");
}

Vec Grid::centers() const {
  Vec x(n_);
  for (int i = 0; i < n_; ++i) x[i] = center(i);
  return x;
}

bool Grid::covers(const RateModel& m, double tol) const {
  return truncation_bound(m, x_max_) <= tol;
}

DensityState::DensityState(const Grid& g, Vec v) : grid(g), values(std::move(v)) {
  require(values.size() == g.n(), "density size does not match its grid");
}

double mass(const Vec& f, double dx) { return f.sum() * dx; }
double mass(const DensityState& f) { return mass(f.values, f.grid.dx()); }

double l1_norm(const Vec& f, double dx, double delta) {
  if (delta == 0.0) return f.cwiseAbs().sum() * dx;
  double s = 0;
  for (Eigen::Index i = 0; i < f.size(); ++i)
    s += std::abs(f[i]) * std::exp(-delta * (i + 0.5) * dx);
  return s * dx;
}

double l1_norm(const DensityState& f, std::optional<double> delta) {
  return l1_norm(f.values, f.grid.dx(), delta.value_or(0.0));
}

double w1_flat(const DensityState& f, const DensityState& g) {
  require(f.grid == g.grid, "w1_flat needs densities on the same grid");
  if (std::abs(mass(f) - mass(g)) > 1e-8) throw MassMismatch("w1_flat needs equal masses");
  const double dx = f.grid.dx();
  double D = 0, prev = 0, s = 0;
  for (int i = 0; i < f.grid.n(); ++i) {
    D += (f.values[i] - g.values[i]) * dx;
    s += 0.5 * (std::abs(prev) + std::abs(D)) * dx;
    prev = D;
  }
  return s;
}

TailConstants tail_constants(const RateModel& m) {
  const double x0 = m.level_age(0.5);
  return {x0, std::exp(m.a0() * x0 / 2) * m.a1()};
}

double truncation_bound(const RateModel& m, double x_max) {
  const auto tc = tail_constants(m);
  return tc.C * (2 / m.a0()) * std::exp(-m.a0() * x_max / 2);
}

double truncation_bound(const RateModel& m, const Grid& g) { return truncation_bound(m, g.x_max()); }

void write_density_csv(std::ostream& os, const DensityState& f, const std::string& value_name) {
  os << "x," << value_name << "\n";
  char buf[64];
  for (int i = 0; i < f.grid.n(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", f.grid.center(i), f.values[i]);
    os << buf;
  }
}

//----------------------------------------------------------------------------

namespace {
template <int N> std::vector<std::pair<double, double>> unfold() {
  using Q = boost::math::quadrature::gauss<double, N>;
  std::vector<std::pair<double, double>> out;
  const auto& x = Q::abscissa();
  const auto& w = Q::weights();
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (x[k] == 0) {
      out.emplace_back(0.0, w[k]);
    } else {
      out.emplace_back(-x[k], w[k]);
      out.emplace_back(x[k], w[k]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}
} // namespace

std::vector<std::pair<double, double>> gauss_legendre_nodes(int n) {
  switch (n) {
  case 2: return unfold<2>();
  case 3: return unfold<3>();
  case 4: return unfold<4>();
  case 6: return unfold<6>();
  case 8: return unfold<8>();
  case 10: return unfold<10>();
  case 16: return unfold<16>();
  default: throw DomainError("unsupported Gauss-Legendre order " + std::to_string(n));
  }
}

//----------------------------------------------------------------------------

CellRates::CellRates(const RateModel& m, const Grid& g, int nodes) : model_(m), grid_(g) {
  const auto gl = gauss_legendre_nodes(nodes);
  const double dx = g.dx();
  for (auto [x, w] : gl) w_.push_back(0.5 * dx * w);
  const int n = g.n();
  xn_.resize(std::size_t(n) * gl.size());
  for (int i = 0; i < n; ++i)
    for (std::size_t q = 0; q < gl.size(); ++q)
      xn_[i * gl.size() + q] = g.left(i) + 0.5 * dx * (gl[q].first + 1);
  if (m.separable()) {
    hl_.resize(n + 1);
    for (int i = 0; i <= n; ++i) hl_[i] = m.h(g.left(i));
    dh_.resize(xn_.size());
    for (int i = 0; i < n; ++i)
      for (std::size_t q = 0; q < gl.size(); ++q)
        dh_[i * gl.size() + q] = m.h(xn_[i * gl.size() + q]) - hl_[i];
  }
}

// logE receives log int_cell exp(-(A(x) - A(left))) (the "relative" log
// integral); meanDA, when requested, the exp(-A)-weighted mean of dA/dmu.
void CellRates::cell_logs(double mu, Vec& logI, Vec* meanDA) const {
  const int n = grid_.n();
  const std::size_t Q = w_.size();
  logI.resize(n);
  if (meanDA) meanDA->resize(n);
  const double X = grid_.x_max();
  const double aX = model_.eval(X, mu);
  if (!(aX > 0)) throw QuadratureUnderflow("rate vanishes at x_max; tail integral diverges");

  if (model_.separable()) {
    const double G = model_.g(mu);
    const double Gp = meanDA ? model_.g_prime(mu) : 0.0;
    for (int i = 0; i < n; ++i) {
      const double* dh = &dh_[i * Q];
      double I = 0, J = 0;
      for (std::size_t q = 0; q < Q; ++q) {
        const double e = w_[q] * std::exp(-G * dh[q]);
        I += e;
        J += e * dh[q];
      }
      double tailterm = 0;
      if (i == n - 1) {
        const double rel = std::exp(-G * (hl_[n] - hl_[i])) / aX;
        I += rel;
        if (meanDA)
          tailterm = rel * (Gp * (hl_[n] - hl_[i]) + model_.eval(X, mu, Deriv::Dmu) / aX);
      }
      logI[i] = std::log(I);
      if (meanDA) (*meanDA)[i] = Gp * (hl_[i] + J / I) + tailterm / I;
    }
    return;
  }

  if (meanDA) throw NonSmoothModel("rate derivatives requested for a non-smooth model");
  for (int i = 0; i < n; ++i) {
    const double Al = model_.primitive(grid_.left(i), mu);
    double I = 0;
    for (std::size_t q = 0; q < Q; ++q)
      I += w_[q] * std::exp(-(model_.primitive(xn_[i * Q + q], mu) - Al));
    if (i == n - 1) I += std::exp(-(model_.primitive(X, mu) - Al)) / aX;
    logI[i] = std::log(I);
  }
}

namespace {
// A(left_i) - A(left_{i-1}) for i >= 1.
inline double dA(const RateModel& m, const Grid& g, const std::vector<double>& hl, double G,
                 double mu, int i) {
  if (m.separable()) return G * (hl[i] - hl[i - 1]);
  return m.primitive(g.left(i), mu) - m.primitive(g.left(i - 1), mu);
}
} // namespace

void CellRates::rates(double mu, Vec& r, Vec& rho) const {
  const int n = grid_.n();
  const double dx = grid_.dx();
  Vec logI;
  cell_logs(mu, logI, nullptr);
  const double G = model_.separable() ? model_.g(mu) : 0.0;
  r.resize(n);
  rho.resize(n);
  for (int i = 0; i < n; ++i) {
    const double d = i == 0 ? std::log(dx) - logI[0]
                            : dA(model_, grid_, hl_, G, mu, i) + logI[i - 1] - logI[i];
    rho[i] = std::exp(d);
    r[i] = i == n - 1 ? rho[i] / dx : std::expm1(d) / dx;
  }
}

CellRates::Eval CellRates::evaluate(double mu, bool with_derivative) const {
  const int n = grid_.n();
  const double dx = grid_.dx();
  Eval ev;
  ev.mu = mu;
  Vec logI, meanDA;
  cell_logs(mu, logI, with_derivative ? &meanDA : nullptr);
  const double G = model_.separable() ? model_.g(mu) : 0.0;
  ev.r.resize(n);
  ev.rho.resize(n);
  ev.logE.resize(n);
  double Aleft = 0;
  for (int i = 0; i < n; ++i) {
    double d;
    if (i == 0) {
      d = std::log(dx) - logI[0];
    } else {
      const double step = dA(model_, grid_, hl_, G, mu, i);
      Aleft += step;
      d = step + logI[i - 1] - logI[i];
    }
    ev.logE[i] = logI[i] - Aleft;
    ev.rho[i] = std::exp(d);
    ev.r[i] = i == n - 1 ? ev.rho[i] / dx : std::expm1(d) / dx;
  }
  if (with_derivative) {
    ev.dr.resize(n);
    for (int i = 0; i < n; ++i) {
      const double prev = i == 0 ? 0.0 : meanDA[i - 1];
      ev.dr[i] = ev.rho[i] * (meanDA[i] - prev) / dx;
    }
  }
  return ev;
}

double CellRates::total_integral(double mu) const {
  double s = 0;
  if (model_.separable()) {
    // plain sum of exp(-A) at the nodes; terms that underflow contribute nothing anyway
    const int n = grid_.n();
    const std::size_t Q = w_.size();
    const double G = model_.g(mu);
    const double aX = model_.eval(grid_.x_max(), mu);
    if (!(aX > 0)) throw QuadratureUnderflow("rate vanishes at x_max; tail integral diverges");
    for (int i = 0; i < n; ++i) {
      const double* dh = &dh_[i * Q];
      double I = 0;
      for (std::size_t q = 0; q < Q; ++q) I += w_[q] * std::exp(-G * (hl_[i] + dh[q]));
      s += I;
    }
    s += std::exp(-G * hl_[n]) / aX;
  } else {
    s = evaluate(mu).logE.array().exp().sum();
  }
  if (!(s > 0) || !std::isfinite(s)) throw QuadratureUnderflow("all cell integrals underflow");
  return s;
}

double CellRates::total_integral_dmu(double mu) const {
  const int n = grid_.n();
  Vec logI, meanDA;
  cell_logs(mu, logI, &meanDA);
  const auto ev = evaluate(mu);
  double s = 0;
  for (int i = 0; i < n; ++i) s -= std::exp(ev.logE[i]) * meanDA[i];
  return s;
}

} // namespace elapsed
