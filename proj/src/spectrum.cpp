#include "elapsed/spectrum.hpp"
#include "elapsed/dynamics.hpp"
#include "elapsed/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace elapsed {

namespace {

struct Linearization {
  Vec r, ap, F;
  double kappa;
};

Linearization linearize(const RateModel& model, double eps, const SteadyState& st) {
  require(eps >= 0 && std::isfinite(eps), "connectivity must be >= 0");
  const Grid& grid = st.F.grid;
  CellRates cr(model, grid);
  const bool coupled = eps > 0;
  const auto ev = cr.evaluate(eps * st.M, coupled);
  Linearization L{ev.r, Vec::Zero(grid.n()), st.F.values, 0.0};
  if (coupled) L.ap = eps * ev.dr;
  L.kappa = L.ap.dot(L.F) * grid.dx();
  if (L.kappa >= 1) throw KappaGeqOne("kappa = " + std::to_string(L.kappa) + " >= 1");
  return L;
}

// Upwind -d/dx on n cells starting at `off`; `closed` keeps the content of the
// last cell (age grid), otherwise it flows out (history grid).
void add_transport(Mat& B, int off, int n, double dx, bool closed) {
  for (int i = 0; i < n; ++i) {
    B(off + i, off + i) -= 1 / dx;
    if (i > 0) B(off + i, off + i - 1) += 1 / dx;
  }
  if (closed) B(off + n - 1, off + n - 1) += 1 / dx;
}

} // namespace

GeneratorMatrix assemble_nodelay(const RateModel& model, double eps, const SteadyState& st) {
  const Grid& grid = st.F.grid;
  const int n = grid.n();
  const double dx = grid.dx();
  const auto L = linearize(model, eps, st);

  GeneratorMatrix G;
  G.eps = eps;
  G.kappa = L.kappa;
  G.n_g = n;
  G.dx = dx;
  G.model_id = model.id();
  G.kernel_id = "dirac";
  G.norm_weights = Vec::Constant(n, dx);
  G.conserved = Vec::Constant(n, dx);

  G.B_mat = Mat::Zero(n, n);
  add_transport(G.B_mat, 0, n, dx, true);
  G.B_mat.diagonal() -= L.r;

  const Vec Mrow = L.r * dx / (1 - L.kappa);
  Vec gamma = -L.ap.cwiseProduct(L.F);
  gamma[0] += 1 / dx;
  G.A_mat = gamma * Mrow.transpose();
  G.full = G.A_mat + G.B_mat;
  return G;
}

int delay_cells(const DelayKernel& b, double dx, double tail_tol) {
  if (b.is_dirac()) throw KernelNotDensity("the Dirac kernel has no history block");
  return int(kernel_cell_weights(b, dx, tail_tol).size());
}

GeneratorMatrix assemble_delay(const RateModel& model, const DelayKernel& b, double eps,
                               const SteadyState& st, double tail_tol) {
  if (b.is_dirac()) throw KernelNotDensity("use assemble_nodelay for the Dirac kernel");
  const Grid& grid = st.F.grid;
  const int n = grid.n();
  const double dx = grid.dx();
  const auto L = linearize(model, eps, st);
  const auto wv = kernel_cell_weights(b, dx, tail_tol);
  const int nv = int(wv.size());
  const Vec w = Eigen::Map<const Vec>(wv.data(), nv);
  const int N = n + nv;

  GeneratorMatrix G;
  G.eps = eps;
  G.kappa = L.kappa;
  G.delta = b.delta();
  G.n_g = n;
  G.n_v = nv;
  G.dx = dx;
  G.model_id = model.id();
  G.kernel_id = b.id();
  G.norm_weights.resize(N);
  G.conserved = Vec::Zero(N);
  for (int i = 0; i < n; ++i) G.norm_weights[i] = G.conserved[i] = dx;
  for (int j = 0; j < nv; ++j) G.norm_weights[n + j] = dx * std::exp(-G.delta * (j + 0.5) * dx);

  G.B_mat = Mat::Zero(N, N);
  add_transport(G.B_mat, 0, n, dx, true);
  add_transport(G.B_mat, n, nv, dx, false);
  G.B_mat.diagonal().head(n) -= L.r;

  // O[g,v] row, injected at the first cell of both blocks.
  Vec O(N);
  O.head(n) = L.r * dx;
  O.tail(nv) = L.kappa * w;
  G.A_mat = Mat::Zero(N, N);
  // same operation order as the no-delay boundary row, so that at eps = 0 the
  // g-block reproduces that matrix bit for bit
  const double inv_dx = 1 / dx;
  G.A_mat.row(0) += inv_dx * O.transpose();
  G.A_mat.row(n) += inv_dx * O.transpose();
  G.A_mat.block(0, n, n, nv) -= L.ap.cwiseProduct(L.F) * w.transpose();
  G.full = G.A_mat + G.B_mat;
  return G;
}

//----------------------------------------------------------------------------

MetzlerReport metzler_check(const Mat& m) {
  MetzlerReport rep;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) < rep.value) {
        rep.metzler = false;
        rep.row = int(i);
        rep.col = int(j);
        rep.value = m(i, j);
      }
  return rep;
}

SpectrumReport spectrum_report(const GeneratorMatrix& mat, double cut) {
  const int N = mat.dim();
  require(N <= 6000, "matrix exceeds the dense eigensolver budget");
  SpectrumReport rep;
  rep.cut = cut;
  rep.dim = N;

  // Similarity with the norm weights: same spectrum, better balanced history
  // block.
  const Vec s = mat.norm_weights / mat.dx;
  Mat S = s.asDiagonal() * mat.full * s.cwiseInverse().asDiagonal();
  Eigen::EigenSolver<Mat> es(S, false);
  if (es.info() != Eigen::Success) throw EigensolverFailure("dense eigensolver did not converge");
  const auto& ev = es.eigenvalues();
  rep.eigenvalues.assign(ev.data(), ev.data() + ev.size());
  std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](cplx a, cplx b) {
    return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
  });

  std::size_t iz = 0;
  for (std::size_t k = 1; k < rep.eigenvalues.size(); ++k)
    if (std::abs(rep.eigenvalues[k]) < std::abs(rep.eigenvalues[iz])) iz = k;
  rep.zero_eig = rep.eigenvalues[iz];
  rep.gap = cut;
  rep.gap_eig = cut;
  bool found = false;
  for (std::size_t k = 0; k < rep.eigenvalues.size(); ++k) {
    const auto& l = rep.eigenvalues[k];
    if (l.real() <= cut) continue;
    ++rep.count_above_cut;
    if (k != iz && (!found || l.real() > rep.gap)) {
      rep.gap = l.real();
      rep.gap_eig = l;
      found = true;
    }
  }

  // Right eigenvector of the (real) eigenvalue nearest zero by shifted
  // inverse iteration on the unscaled matrix.
  const double scale = mat.full.diagonal().cwiseAbs().maxCoeff();
  const double shift = rep.zero_eig.real() - 1e-9 * std::max(1.0, scale);
  Eigen::PartialPivLU<Mat> lu(mat.full - shift * Mat::Identity(N, N));
  Vec x = Vec::Ones(N);
  for (int it = 0; it < 4; ++it) {
    x = lu.solve(x);
    x /= x.cwiseAbs().maxCoeff();
  }
  const double pairing = mat.conserved.dot(x);
  x /= pairing != 0 ? pairing : x.sum();
  rep.zero_vec = x;
  rep.zero_residual = mat.norm(mat.full * x) / mat.norm(x);
  rep.positive_eigvec = (x.array() > 0).all();
  rep.metzler = metzler_check(mat.full).metzler;
  return rep;
}

KatoReport kato_positivity_check(const GeneratorMatrix& mat, const std::vector<double>& t_list,
                                 int squarings) {
  KatoReport rep;
  rep.metzler = metzler_check(mat.full).metzler;
  const int N = mat.dim();
  double worst = std::numeric_limits<double>::infinity();
  bool ok = true;
  for (double t : t_list) {
    const double h = t / std::ldexp(1.0, squarings);
    Mat R = Eigen::PartialPivLU<Mat>(Mat::Identity(N, N) - h * mat.full).inverse();
    for (int k = 0; k < squarings; ++k) R = R * R;
    const double lo = R.minCoeff(), hi = R.cwiseAbs().maxCoeff();
    if (lo < worst) {
      worst = lo;
      rep.worst_t = t;
    }
    if (lo < -1e-12 * std::max(1.0, hi)) ok = false;
  }
  rep.min_entry = worst;
  rep.cone_invariant = ok;
  return rep;
}

DecayCurve semigroup_decay(const GeneratorMatrix& mat, const Vec& g0, double T, double dt,
                           double t_fit0) {
  require(g0.size() == mat.dim(), "initial vector size does not match the generator");
  require(dt > 0 && T > dt, "need 0 < dt < T");
  const double n0 = mat.norm(g0);
  if (std::abs(mat.conserved.dot(g0)) > 1e-10 * std::max(n0, 1e-300))
    throw MassNotZero("initial vector pairs to " + std::to_string(mat.conserved.dot(g0)));
  DecayCurve c;
  const long steps = std::lround(T / dt);
  c.t.push_back(0);
  c.norm.push_back(n0);
  if (n0 == 0) {
    for (long k = 1; k <= steps; ++k) {
      c.t.push_back(k * dt);
      c.norm.push_back(0.0);
    }
    return c;
  }
  const int N = mat.dim();
  Eigen::PartialPivLU<Mat> lu(Mat::Identity(N, N) - dt * mat.full);
  Vec z = g0;
  for (long k = 1; k <= steps; ++k) {
    z = lu.solve(z);
    c.t.push_back(k * dt);
    c.norm.push_back(mat.norm(z));
  }
  if (t_fit0 < 0) t_fit0 = T / 2;
  std::vector<double> ft, fn;
  for (std::size_t k = 0; k < c.t.size(); ++k)
    if (c.t[k] >= t_fit0 && c.norm[k] > std::max(1e-12 * n0, 10 * kNormFloor)) {
      ft.push_back(c.t[k]);
      fn.push_back(c.norm[k]);
    }
  if (ft.size() >= 3) {
    const auto fit = fit_decay_rate(ft, fn, ft.front(), ft.back());
    c.alpha = fit.alpha;
    c.r2 = fit.r2;
  }
  return c;
}

//----------------------------------------------------------------------------

namespace {
// One exact shift with cell-wise survival and no boundary inflow.
void shift_survive(Vec& f, const Vec& rho) {
  const auto n = f.size();
  f[n - 1] = (f[n - 2] + f[n - 1]) / (1 + rho[n - 1]);
  for (Eigen::Index i = n - 2; i >= 1; --i) f[i] = f[i - 1] / rho[i];
  f[0] = 0;
}
} // namespace

BSemigroupReport validate_B_semigroup(const RateModel& model, double eps, double M, const Grid& grid,
                                      const std::vector<double>& t_list) {
  const double dx = grid.dx();
  const double mu = eps * M;
  CellRates cr(model, grid);
  Vec r, rho;
  cr.rates(mu, r, rho);

  const std::vector<std::function<double(double)>> bundle = {
      [](double x) { return x * std::exp(-x); },
      [](double x) { return std::exp(-(x - 3) * (x - 3)); },
      [](double x) { return std::exp(-2 * x); },
  };

  BSemigroupReport rep;
  rep.beta = -model.a0() / 4;
  rep.C = std::exp(3 * model.a0() * model.level_age(0.75) / 4);
  for (double t : t_list) {
    const long k = std::lround(t / dx);
    require(std::abs(k * dx - t) <= 1e-9 * std::max(1.0, t), "B-semigroup times must be multiples of dx");
    double err = 0;
    for (const auto& g : bundle) {
      const Vec g0 = cell_average(grid, g, 8);
      Vec stepped = g0;
      for (long s = 0; s < k; ++s) shift_survive(stepped, rho);
      const Vec exact = cell_average(
          grid,
          [&](double x) {
            if (x < t) return 0.0;
            return std::exp(model.primitive(x - t, mu) - model.primitive(x, mu)) * g(x - t);
          },
          8);
      err = std::max(err, l1_norm(stepped - exact, dx));
      const double ratio =
          l1_norm(stepped, dx) / (rep.C * std::exp(3 * rep.beta * t) * l1_norm(g0, dx));
      rep.max_bound_ratio = std::max(rep.max_bound_ratio, ratio);
    }
    rep.t.push_back(t);
    rep.error.push_back(err);
    rep.max_error = std::max(rep.max_error, err);
  }
  rep.bound_ok = rep.max_bound_ratio <= 1.0;
  return rep;
}

double v_block_decay_ratio(int n_v, double dx, double delta, double t) {
  require(n_v >= 1 && dx > 0 && delta >= 0 && t >= 0, "bad history block parameters");
  const long k = std::lround(t / dx);
  double worst = 0;
  for (int j = 0; j < n_v; ++j) {
    Vec v = Vec::Zero(n_v);
    v[j] = 1;
    const double before = l1_norm(v, dx, delta);
    for (long s = 0; s < k; ++s) {
      for (int i = n_v - 1; i >= 1; --i) v[i] = v[i - 1];
      v[0] = 0;
    }
    worst = std::max(worst, l1_norm(v, dx, delta) / before);
  }
  return worst / std::exp(-delta * k * dx);
}

} // namespace elapsed
