#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace elapsed {

enum class Deriv { Value, Dx, Dmu, Dmumu };

// Firing rate a(x, mu) as a function of age x and network activity mu.
//
// Constant and SoftSigmoid are separable, A(x,mu) = g(mu) h(x); the cell
// integrator exploits that to avoid re-evaluating h on every activity change.
class RateModel {
public:
  enum class Kind { Constant, SoftSigmoid, StepThreshold };

  static RateModel constant(double a);
  static RateModel soft_sigmoid(double a0, double a1, double lx, double lmu);
  // sigma(mu) = sigma_inf + (sigma0 - sigma_inf) exp(-k mu), decreasing in mu.
  static RateModel step_threshold(double sigma0, double sigma_inf, double k);

  Kind kind() const { return kind_; }
  bool smooth() const { return kind_ != Kind::StepThreshold; }
  bool separable() const { return kind_ != Kind::StepThreshold; }
  double a0() const { return a0_; }
  double a1() const { return a1_; }
  const std::vector<double>& params() const { return p_; }

  double eval(double x, double mu, Deriv order = Deriv::Value) const;
  double primitive(double x, double mu) const;     // A(x,mu) = int_0^x a
  double primitive_dmu(double x, double mu) const; // d/dmu A(x,mu)

  // Separable factors, only for separable models.
  double g(double mu) const;
  double g_prime(double mu) const;
  double h(double x) const;

  double sigma(double mu) const; // StepThreshold only

  // Exact suprema over the quadrant, used by contraction and Lipschitz checks.
  double sup_dmu() const;
  double sup_dx() const;
  double w1inf_norm() const { return a1_ + sup_dx(); }

  // Smallest x with a(x,0) >= frac*a0.
  double level_age(double frac) const;

  std::string id() const;

private:
  RateModel(Kind k, std::vector<double> p);
  Kind kind_;
  std::vector<double> p_;
  double a0_ = 0, a1_ = 0;
};

struct HypothesisWitness {
  std::string hypothesis;
  double x, mu;
  std::string detail;
};

struct RateHypothesisReport {
  bool passes_a1 = true; // monotone in both arguments
  bool passes_a2 = true; // positive asymptotic levels a0 <= a1
  bool passes_a3 = true; // bounded first and second difference quotients
  std::vector<HypothesisWitness> witnesses;
};

RateHypothesisReport check_rate_hypotheses(const RateModel& m, double x_max,
                                           double mu_max, int nx = 200,
                                           int nmu = 200);

class DelayKernel {
public:
  enum class Kind { Dirac, Exp, Erlang };

  static DelayKernel dirac();
  // delta defaults to 1/(2 tau).
  static DelayKernel exp(double tau, std::optional<double> delta = {});
  static DelayKernel erlang(int k, double tau, std::optional<double> delta = {});

  Kind kind() const { return kind_; }
  bool is_dirac() const { return kind_ == Kind::Dirac; }
  double tau() const { return tau_; }
  int shape() const { return k_; }
  double delta() const { return delta_; }

  double density(double y) const;
  double density_dy(double y) const;
  double cdf(double y) const;
  double tail(double y) const; // 1 - cdf, computed without cancellation
  // Smallest Y with tail(Y) <= tol.
  double quantile_tail(double tol) const;

  std::string id() const;

private:
  DelayKernel(Kind k, double tau, int shape, double delta);
  Kind kind_;
  double tau_ = 0;
  int k_ = 1;
  double delta_ = 0;
};

struct DelayHypothesisReport {
  bool instantaneous = false; // Dirac: m(t) = p(t)
  bool finite = true;
  double mass = 1;
  double weighted_integral = 0; // int e^{delta y}(b + |b'|)
  double tail_remainder = 0;
};

double delay_weight(const DelayKernel& b, double y);
DelayHypothesisReport check_delay_hypothesis(const DelayKernel& b);

void to_json(nlohmann::json& j, const RateModel& m);
RateModel rate_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const DelayKernel& b);
DelayKernel delay_from_json(const nlohmann::json& j);

} // namespace elapsed
