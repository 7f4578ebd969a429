#pragma once

#include "elapsed/model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace elapsed {

using Vec = Eigen::VectorXd;

// Uniform truncated age grid [0, x_max] with n cells; the last cell absorbs
// the tail [x_max - dx, inf).
class Grid {
public:
  Grid(double x_max, int n);
  double x_max() const { return x_max_; }
  int n() const { return n_; }
  double dx() const { return x_max_ / n_; }
  double center(int i) const { return (i + 0.5) * dx(); }
  double left(int i) const { return i * dx(); }
  Vec centers() const;
  // True when the truncation bound keeps the discarded steady mass below tol.
  bool covers(const RateModel& m, double tol) const;
  bool operator==(const Grid& o) const { return x_max_ == o.x_max_ && n_ == o.n_; }

private:
  double x_max_;
  int n_;
};

// Cell averages on a grid. Physical densities are nonnegative; perturbations
// may be signed.
struct DensityState {
  Grid grid;
  Vec values;
  DensityState(const Grid& g, Vec v);
  explicit DensityState(const Grid& g) : DensityState(g, Vec::Zero(g.n())) {}
};

double mass(const Vec& f, double dx);
double mass(const DensityState& f);
// Sum |f_i| w(x_i) dx with w = exp(-delta x); delta = 0 gives the plain L1 norm.
double l1_norm(const Vec& f, double dx, double delta = 0.0);
double l1_norm(const DensityState& f, std::optional<double> delta = {});
// Classical 1-D Wasserstein distance, trapezoid rule on edge values of the
// CDF difference. Majorizes the W1 of the truncated metric |x-y| ^ 1.
double w1_flat(const DensityState& f, const DensityState& g);

struct TailConstants {
  double x0; // smallest x with a(x,0) >= a0/2
  double C;  // exp(a0 x0 / 2) a1
};
TailConstants tail_constants(const RateModel& m);
double truncation_bound(const RateModel& m, double x_max);
double truncation_bound(const RateModel& m, const Grid& g);

// Cell averages of a function by Gauss-Legendre quadrature on every cell.
template <class F> Vec cell_average(const Grid& g, F&& f, int nodes = 8);

// Well-balanced cell quantities for a fixed activity level.
//
// E_i is int_{cell i} exp(-A(x,mu)) dx, with the last cell extended to
// infinity through the tail estimate exp(-A(X)) / a(X,mu). The cell rates are
//   r_i = (E_{i-1}/E_i - 1)/dx        (E_{-1} = dx),
//   r_{n-1} = E_{n-2} / (dx E_{n-1}),
// so that the profile E_i/dx is annihilated exactly by upwind transport with a
// closed right end. All ratios are evaluated in log-stable form.
class CellRates {
public:
  CellRates(const RateModel& m, const Grid& g, int nodes = 4);

  struct Eval {
    double mu = 0;
    Vec r;       // cell rates
    Vec rho;     // E_{i-1}/E_i, so r dx = rho - 1 except in the last cell
    Vec logE;    // log of cell integrals
    Vec dr;      // d r / d mu, filled only on request
  };

  Eval evaluate(double mu, bool with_derivative = false) const;
  // Only the rates, written into r (hot path of the time stepper).
  void rates(double mu, Vec& r, Vec& rho) const;
  // Sum_i E_i, including the tail.
  double total_integral(double mu) const;
  double total_integral_dmu(double mu) const;

  const Grid& grid() const { return grid_; }
  const RateModel& model() const { return model_; }

private:
  void cell_logs(double mu, Vec& logE, Vec* meanDA) const;

  RateModel model_;
  Grid grid_;
  std::vector<double> w_;   // quadrature weights times dx/2
  std::vector<double> dh_;  // h(node) - h(left edge), separable models
  std::vector<double> hl_;  // h(left edge), n+1 entries
  std::vector<double> xn_;  // node positions
};

void write_density_csv(std::ostream& os, const DensityState& f, const std::string& value_name = "value");

//----------------------------------------------------------------------------

std::vector<std::pair<double, double>> gauss_legendre_nodes(int n);

template <class F> Vec cell_average(const Grid& g, F&& f, int nodes) {
  const auto gl = gauss_legendre_nodes(nodes);
  Vec out(g.n());
  const double h = g.dx();
  for (int i = 0; i < g.n(); ++i) {
    double s = 0;
    for (auto [x, w] : gl) s += w * f(g.left(i) + 0.5 * h * (x + 1));
    out[i] = 0.5 * s;
  }
  return out;
}

} // namespace elapsed
