#pragma once

#include "elapsed/grid.hpp"
#include "elapsed/model.hpp"
#include "elapsed/steady.hpp"

#include <optional>
#include <vector>

namespace elapsed {

// Solves mu = w0 * sum_i r_i(eps mu) f_i dx + H by damped fixed-point
// iteration. With w0 = 1, H = 0 this is the instantaneous activity phi_eps[f].
struct FixedPointResult {
  double mu = 0;
  double p = 0; // sum_i r_i(eps mu) f_i dx
  int iterations = 0;
  Vec r, rho;   // rates at eps*mu
};

FixedPointResult solve_activity(const CellRates& cr, double eps, const Vec& f, double w0 = 1.0,
                                double H = 0.0, std::optional<double> warm = {});
double activity_fixed_point(const CellRates& cr, double eps, const Vec& f);
double activity_fixed_point(const RateModel& model, double eps, const DensityState& f);

// Past discharges p(t - k dt), k = 1..depth-1, and the kernel's cell masses
// w_k = b([k dt, (k+1) dt)), normalized. w_0 multiplies the current discharge.
class HistoryBuffer {
public:
  HistoryBuffer(const DelayKernel& b, double dt, double tail_tol = 1e-10);
  int depth() const { return int(w_.size()); }
  const std::vector<double>& weights() const { return w_; }
  double w0() const { return w_[0]; }
  // sum_{k >= 1} w_k p(t - k dt)
  double past_part() const;
  void fill(double p);
  void push(double p);

private:
  std::vector<double> w_;
  std::vector<double> ring_; // ring_[(head_ + k - 1) % size] = p(t - k dt)
  std::size_t head_ = 0;
};

// Cell weights of a delay kernel on [0, depth dt), shared with the block
// generator so spectra and trajectories use the same convolution.
std::vector<double> kernel_cell_weights(const DelayKernel& b, double dt, double tail_tol = 1e-10);

struct StepResult {
  double p = 0, m = 0;
  int iterations = 0;
};

// One characteristics-aligned step: exact shift by one cell, well-balanced
// survival, and reinjection into cell 0 of exactly the mass that fired.
StepResult step(const CellRates& cr, double eps, Vec& f, HistoryBuffer& history, double dt,
                std::optional<double> warm = {});

struct TrajectoryRow {
  double t, mass, p, m, l1_dist;
};

struct Trajectory {
  Grid grid;
  std::vector<TrajectoryRow> rows;
  std::vector<std::pair<double, Vec>> snapshots;
};

struct SimulationSpec {
  RateModel model;
  DelayKernel kernel = DelayKernel::dirac();
  double eps = 0;
  Grid grid;
  Vec f0;
  double t_final = 1;
  int record_every = 1;     // steps between diagnostic rows
  int snapshot_every = 0;   // steps between stored densities, 0 = none
  std::optional<Vec> reference; // F_eps for the l1 column
};

Trajectory simulate(const SimulationSpec& spec);
// sup over common snapshot times of the L1 distance.
double sup_distance(const Trajectory& a, const Trajectory& b);

struct DecayFit {
  double alpha = 0, C = 0, r2 = 0;
  int points = 0;
};
inline constexpr double kNormFloor = 1e-13;
DecayFit fit_decay_rate(const Trajectory& traj, double t1, double t2);
DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& norm, double t1,
                        double t2);

// Semi-discrete right-hand side of the nonlinear no-delay system, upwind
// transport plus boundary source, with the activity solved for f.
Vec rhs_nodelay(const CellRates& cr, double eps, const Vec& f);

struct ResidualReport {
  double l1 = 0;   // ||Z[g]||_{L1}
  double mean = 0; // <Z[g]>
};
// Z[g] = rhs(F+g) - Lambda g, evaluated in the cancellation-free form
// -(r(eps mu) - r(eps M))(F+g) + a'F dmu_lin + e0/dx (mu - M - dmu_lin).
ResidualReport nonlinear_residual(const CellRates& cr, double eps, const SteadyState& st, const Vec& g);
ResidualReport nonlinear_residual(const RateModel& model, double eps, const SteadyState& st,
                                  const DensityState& g);

// Closed-form majorant of the nonlinear Gronwall lemma; needs a + 2 C2 u0 < 0.
double gronwall_bound(double C1, double C2, double a, double u0, double t);

} // namespace elapsed
