#pragma once

#include "elapsed/grid.hpp"
#include "elapsed/model.hpp"

#include <string>
#include <vector>

namespace elapsed {

struct SteadyState {
  DensityState F;
  double M = 0;
  double eps = 0;
  double residual = 0; // |Phi(eps, M) - 1|
  double Tm = 0;       // normalization constant, equals M at a root
  double margin = 0;   // dPhi/dm at the root
};

// Normalized profile T_m exp(-A(x, eps m)) as exact cell averages.
DensityState steady_profile(const CellRates& cr, double eps, double m);
DensityState steady_profile(const RateModel& model, double eps, double m, const Grid& grid);

// Phi(eps, m) = m int exp(-A(x, eps m)) dx, tail included.
double phi(const CellRates& cr, double eps, double m);
double phi(const RateModel& model, double eps, double m, const Grid& grid);

// Central-difference dPhi/dm at (eps, M).
double uniqueness_margin(const CellRates& cr, double eps, double M);
double uniqueness_margin(const RateModel& model, double eps, double M, const Grid& grid);

struct ScanOptions {
  double m_max = -1; // <= 0 selects 2 a1
  int n_scan = 4096;
};

// All roots of Phi(eps, .) = 1 on [0, m_max], sorted by M. Adjacent-cell
// roots are reported through `warnings` (ScanTooCoarse).
std::vector<SteadyState> solve_steady(const CellRates& cr, double eps, const ScanOptions& scan = {},
                                      std::vector<std::string>* warnings = nullptr);
std::vector<SteadyState> solve_steady(const RateModel& model, double eps, const Grid& grid,
                                      const ScanOptions& scan = {},
                                      std::vector<std::string>* warnings = nullptr);

// The unique root, throwing NoRootFound / MathStructure errors otherwise.
SteadyState unique_steady(const CellRates& cr, double eps, const ScanOptions& scan = {});

} // namespace elapsed
