#include "elapsed/steady.hpp"
#include "elapsed/errors.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <sstream>

namespace elapsed {

namespace {
void check_args(double eps, double m) {
  require(eps >= 0 && std::isfinite(eps), "connectivity must be >= 0");
  require(m >= 0 && std::isfinite(m), "activity must be >= 0");
}
} // namespace

DensityState steady_profile(const CellRates& cr, double eps, double m) {
  check_args(eps, m);
  const auto ev = cr.evaluate(eps * m);
  const double dx = cr.grid().dx();
  // Scale by the largest log first so the normalization cannot overflow.
  const double top = ev.logE.maxCoeff();
  Vec F = (ev.logE.array() - top).exp();
  const double s = F.sum();
  if (!(s > 0) || !std::isfinite(top)) throw QuadratureUnderflow("steady profile underflows");
  F /= s * dx;
  return DensityState(cr.grid(), std::move(F));
}

DensityState steady_profile(const RateModel& model, double eps, double m, const Grid& grid) {
  return steady_profile(CellRates(model, grid), eps, m);
}

double phi(const CellRates& cr, double eps, double m) {
  check_args(eps, m);
  if (m == 0) return 0.0;
  return m * cr.total_integral(eps * m);
}

double phi(const RateModel& model, double eps, double m, const Grid& grid) {
  return phi(CellRates(model, grid), eps, m);
}

double uniqueness_margin(const CellRates& cr, double eps, double M) {
  const double h = 1e-5 * std::max(1.0, M);
  const double lo = std::max(0.0, M - h);
  return (phi(cr, eps, M + h) - phi(cr, eps, lo)) / (M + h - lo);
}

double uniqueness_margin(const RateModel& model, double eps, double M, const Grid& grid) {
  return uniqueness_margin(CellRates(model, grid), eps, M);
}

std::vector<SteadyState> solve_steady(const CellRates& cr, double eps, const ScanOptions& scan,
                                      std::vector<std::string>* warnings) {
  const double a1 = cr.model().a1();
  const double m_max = scan.m_max > 0 ? scan.m_max : 2 * a1;
  require(m_max >= a1, "scan range must reach a1");
  require(scan.n_scan >= 64, "scan needs at least 64 cells");
  require(eps >= 0 && std::isfinite(eps), "connectivity must be >= 0");

  const int N = scan.n_scan;
  std::vector<double> res(N + 1);
  for (int k = 0; k <= N; ++k) res[k] = phi(cr, eps, m_max * k / N) - 1.0;

  std::vector<std::pair<double, double>> brackets;
  std::vector<int> cells;
  for (int k = 0; k < N; ++k) {
    const double lo = m_max * k / N, hi = m_max * (k + 1) / N;
    if (res[k] == 0) {
      brackets.emplace_back(lo, lo);
      cells.push_back(k);
    } else if (res[k] * res[k + 1] < 0) {
      brackets.emplace_back(lo, hi);
      cells.push_back(k);
    }
  }
  if (brackets.empty()) {
    std::ostringstream os;
    os << "Phi(" << eps << ", m) - 1 has no sign change on [0, " << m_max << "]";
    throw NoRootFound(os.str());
  }
  if (warnings)
    for (std::size_t k = 1; k < cells.size(); ++k)
      if (cells[k] - cells[k - 1] <= 1) warnings->push_back("ScanTooCoarse: adjacent roots near m=" +
                                                           std::to_string(brackets[k].first));

  std::vector<SteadyState> out;
  for (auto [lo, hi] : brackets) {
    double M = lo;
    if (hi > lo) {
      auto f = [&](double m) { return phi(cr, eps, m) - 1.0; };
      auto stop = [](double a, double b) { return std::abs(b - a) <= 4e-16 * std::max(1.0, std::abs(a)); };
      auto [a, b] = boost::math::tools::bisect(f, lo, hi, stop);
      const double fa = std::abs(f(a)), fb = std::abs(f(b));
      M = fa <= fb ? a : b;
    }
    SteadyState st{steady_profile(cr, eps, M), M, eps, 0, 0, 0};
    st.residual = std::abs(phi(cr, eps, M) - 1.0);
    st.Tm = 1.0 / cr.total_integral(eps * M);
    st.margin = uniqueness_margin(cr, eps, M);
    if (st.residual > 1e-12) throw NoConvergence("bisection left residual " + std::to_string(st.residual));
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<SteadyState> solve_steady(const RateModel& model, double eps, const Grid& grid,
                                      const ScanOptions& scan, std::vector<std::string>* warnings) {
  return solve_steady(CellRates(model, grid), eps, scan, warnings);
}

SteadyState unique_steady(const CellRates& cr, double eps, const ScanOptions& scan) {
  auto roots = solve_steady(cr, eps, scan);
  if (roots.size() != 1)
    throw NoRootFound("expected a unique steady state at eps=" + std::to_string(eps) + ", found " +
                      std::to_string(roots.size()));
  return std::move(roots.front());
}

} // namespace elapsed
