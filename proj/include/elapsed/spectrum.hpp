#pragma once

#include "elapsed/grid.hpp"
#include "elapsed/model.hpp"
#include "elapsed/steady.hpp"

#include <complex>
#include <string>
#include <vector>

namespace elapsed {

using Mat = Eigen::MatrixXd;
using cplx = std::complex<double>;

// Dense linearized generator. Unknowns are cell values of g (n_g cells) and,
// in the delay case, of the discharge history v (n_v cells).
struct GeneratorMatrix {
  Mat full, A_mat, B_mat;
  double eps = 0;
  double kappa = 0;
  double delta = 0; // weight exponent of the v-block, 0 without delay
  int n_g = 0, n_v = 0;
  double dx = 0;
  std::string model_id, kernel_id;
  Vec norm_weights; // dx on g-cells, dx exp(-delta y_j) on v-cells
  Vec conserved;    // dx on g-cells, 0 on v-cells

  int dim() const { return n_g + n_v; }
  double norm(const Vec& z) const { return z.cwiseAbs().dot(norm_weights); }
};

// Lambda = T - diag(r) - (a'F) M_row + (e0/dx) M_row with M_row = r dx/(1-kappa).
GeneratorMatrix assemble_nodelay(const RateModel& model, double eps, const SteadyState& st);

// Grid for the discharge history: same dx, truncated where the kernel tail
// drops below tail_tol.
int delay_cells(const DelayKernel& b, double dx, double tail_tol = 1e-10);

// Block generator on (g, v):
//   g' = T g - r g - a'F D[v] + (e0/dx) O[g,v]
//   v' = -d_y v                + (e0/dx) O[g,v]
// with D[v] = sum w_j v_j, O[g,v] = sum r g dx + kappa D[v].
GeneratorMatrix assemble_delay(const RateModel& model, const DelayKernel& b, double eps,
                               const SteadyState& st, double tail_tol = 1e-10);

struct SpectrumReport {
  std::vector<cplx> eigenvalues; // sorted by decreasing real part
  double cut = 0;
  int count_above_cut = 0;
  cplx zero_eig;
  Vec zero_vec;             // normalized so that sum over g-cells of v dx = 1
  double zero_residual = 0; // ||Lambda v|| / ||v||
  double gap = 0;           // max Re over the other eigenvalues above cut, or cut
  cplx gap_eig;             // eigenvalue realizing the gap (cut if none)
  bool metzler = false;
  bool positive_eigvec = false;
  int dim = 0;
};

SpectrumReport spectrum_report(const GeneratorMatrix& mat, double cut);

struct MetzlerReport {
  bool metzler = true;
  int row = -1, col = -1;
  double value = 0;
};
MetzlerReport metzler_check(const Mat& m);

struct KatoReport {
  bool metzler = false;
  bool cone_invariant = false;
  double min_entry = 0; // most negative entry of exp(t Lambda) over all t
  double worst_t = 0;
};
// Metzler sign pattern plus invariance of the nonnegative cone under
// (I - h Lambda)^{-2^k}, h = t / 2^k, acting on all indicator vectors.
KatoReport kato_positivity_check(const GeneratorMatrix& mat,
                                 const std::vector<double>& t_list = {0.1, 1.0, 10.0},
                                 int squarings = 10);

struct DecayCurve {
  std::vector<double> t, norm;
  double alpha = 0, r2 = 0;
};
// Implicit Euler from zeta(0) = g0 (conserved functional must vanish) and a
// log-linear fit over [t_fit0, T] restricted to norms above the floor.
DecayCurve semigroup_decay(const GeneratorMatrix& mat, const Vec& g0, double T, double dt,
                           double t_fit0 = -1);

struct BSemigroupReport {
  std::vector<double> t, error; // L1 error per time, max over the test bundle
  double max_error = 0;
  double C = 0, beta = 0;       // bound C exp(3 beta t)
  double max_bound_ratio = 0;   // max ||S_B(t) g|| / (C e^{3 beta t} ||g||)
  bool bound_ok = false;
};
// Transport-with-loss part stepped by exact shifts against the closed form
// e^{A(x-t) - A(x)} g(x-t) 1_{x >= t}, both as cell averages.
BSemigroupReport validate_B_semigroup(const RateModel& model, double eps, double M, const Grid& grid,
                                      const std::vector<double>& t_list);

// Operator norm (weighted L1) of the exactly stepped history transport
// divided by e^{-delta t}; at most 1 up to rounding.
double v_block_decay_ratio(int n_v, double dx, double delta, double t);

} // namespace elapsed
