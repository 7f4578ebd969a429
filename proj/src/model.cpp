#include "elapsed/model.hpp"
#include "elapsed/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

namespace elapsed {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// u + expm1(-u) = u^2/2 - u^3/6 + ..., evaluated without cancellation.
double u_plus_expm1_neg(double u) {
  if (u < 1e-2) {
    double t = u * u / 2, s = t;
    for (int k = 3; k < 12; ++k) {
      t *= -u / k;
      s += t;
    }
    return s;
  }
  return u + std::expm1(-u);
}

} // namespace

RateModel::RateModel(Kind k, std::vector<double> p) : kind_(k), p_(std::move(p)) {}

RateModel RateModel::constant(double a) {
  require(std::isfinite(a) && a > 0, "constant rate must be positive");
  RateModel m(Kind::Constant, {a});
  m.a0_ = m.a1_ = a;
  return m;
}

RateModel RateModel::soft_sigmoid(double a0, double a1, double lx, double lmu) {
  require(a0 > 0 && std::isfinite(a1) && a1 >= a0, "soft_sigmoid needs 0 < a0 <= a1");
  require(lx > 0 && std::isfinite(lx), "soft_sigmoid needs lx > 0");
  require(lmu >= 0 && std::isfinite(lmu), "soft_sigmoid needs lmu >= 0");
  RateModel m(Kind::SoftSigmoid, {a0, a1, lx, lmu});
  m.a0_ = a0;
  m.a1_ = a1;
  return m;
}

RateModel RateModel::step_threshold(double sigma0, double sigma_inf, double k) {
  require(sigma_inf >= 0 && sigma0 >= sigma_inf && std::isfinite(sigma0),
          "step_threshold needs sigma0 >= sigma_inf >= 0");
  require(k >= 0 && std::isfinite(k), "step_threshold needs k >= 0");
  RateModel m(Kind::StepThreshold, {sigma0, sigma_inf, k});
  m.a0_ = m.a1_ = 1.0;
  return m;
}

double RateModel::g(double mu) const {
  switch (kind_) {
  case Kind::Constant: return p_[0];
  case Kind::SoftSigmoid: return p_[0] - (p_[1] - p_[0]) * std::expm1(-p_[3] * mu);
  default: throw NonSmoothModel("step_threshold is not separable");
  }
}

double RateModel::g_prime(double mu) const {
  switch (kind_) {
  case Kind::Constant: return 0.0;
  case Kind::SoftSigmoid: return (p_[1] - p_[0]) * p_[3] * std::exp(-p_[3] * mu);
  default: throw NonSmoothModel("step_threshold is not separable");
  }
}

double RateModel::h(double x) const {
  switch (kind_) {
  case Kind::Constant: return x;
  case Kind::SoftSigmoid: return u_plus_expm1_neg(p_[2] * x) / p_[2];
  default: throw NonSmoothModel("step_threshold is not separable");
  }
}

double RateModel::sigma(double mu) const {
  require(kind_ == Kind::StepThreshold, "sigma() is only defined for step_threshold");
  return p_[1] + (p_[0] - p_[1]) * std::exp(-p_[2] * mu);
}

double RateModel::eval(double x, double mu, Deriv order) const {
  require(x >= 0 && mu >= 0, "rate evaluated at negative age or activity");
  switch (kind_) {
  case Kind::Constant:
    return order == Deriv::Value ? p_[0] : 0.0;
  case Kind::SoftSigmoid: {
    const double s = -std::expm1(-p_[2] * x);
    switch (order) {
    case Deriv::Value: return g(mu) * s;
    case Deriv::Dx: return g(mu) * p_[2] * std::exp(-p_[2] * x);
    case Deriv::Dmu: return g_prime(mu) * s;
    case Deriv::Dmumu: return -p_[3] * g_prime(mu) * s;
    }
    break;
  }
  case Kind::StepThreshold:
    if (order != Deriv::Value)
      throw NonSmoothModel("derivatives of step_threshold are not defined");
    // right-open jump: a(sigma, mu) = 0
    return x > sigma(mu) ? 1.0 : 0.0;
  }
  return 0.0;
}

double RateModel::primitive(double x, double mu) const {
  require(x >= 0 && mu >= 0, "primitive evaluated at negative age or activity");
  if (kind_ == Kind::StepThreshold) return std::max(0.0, x - sigma(mu));
  return g(mu) * h(x);
}

double RateModel::primitive_dmu(double x, double mu) const {
  require(x >= 0 && mu >= 0, "primitive evaluated at negative age or activity");
  if (!smooth()) throw NonSmoothModel("d/dmu A is not defined for step_threshold");
  return g_prime(mu) * h(x);
}

double RateModel::sup_dmu() const {
  switch (kind_) {
  case Kind::Constant: return 0.0;
  case Kind::SoftSigmoid: return (p_[1] - p_[0]) * p_[3];
  default: return std::numeric_limits<double>::infinity();
  }
}

double RateModel::sup_dx() const {
  switch (kind_) {
  case Kind::Constant: return 0.0;
  case Kind::SoftSigmoid: return p_[1] * p_[2];
  default: return std::numeric_limits<double>::infinity();
  }
}

double RateModel::level_age(double frac) const {
  require(frac > 0 && frac < 1, "level fraction must lie in (0,1)");
  switch (kind_) {
  case Kind::Constant: return 0.0;
  case Kind::SoftSigmoid: return -std::log1p(-frac) / p_[2];
  default: return sigma(0.0);
  }
}

std::string RateModel::id() const {
  switch (kind_) {
  case Kind::Constant: return "constant(a=" + fmt(p_[0]) + ")";
  case Kind::SoftSigmoid:
    return "soft_sigmoid(a0=" + fmt(p_[0]) + ",a1=" + fmt(p_[1]) + ",lx=" + fmt(p_[2]) +
           ",lmu=" + fmt(p_[3]) + ")";
  default:
    return "step_threshold(sigma0=" + fmt(p_[0]) + ",sigma_inf=" + fmt(p_[1]) +
           ",k=" + fmt(p_[2]) + ")";
  }
}

//----------------------------------------------------------------------------

namespace {

// A difference quotient that keeps growing when the step shrinks means the
// function is not Lipschitz (first order) or not C^{1,1} (second order) there.
struct QuotientScan {
  double coarse = 0, fine = 0, x = 0, mu = 0;
};

QuotientScan scan_quotients(const RateModel& m, double x_max, double mu_max, int nx, int nmu,
                            bool along_x, int order) {
  const double hx = x_max / (nx - 1), hmu = mu_max / std::max(nmu - 1, 1);
  const double H = along_x ? hx : hmu;
  auto f = [&](double x, double mu, double s) {
    return along_x ? m.eval(x + s, mu) : m.eval(x, mu + s);
  };
  auto quotient = [&](double x, double mu, double step) {
    if (order == 1) return std::abs(f(x, mu, step) - f(x, mu, 0)) / step;
    return std::abs(f(x, mu, 2 * step) - 2 * f(x, mu, step) + f(x, mu, 0)) / (step * step);
  };
  QuotientScan out;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nmu; ++j) {
      const double x = i * hx, mu = j * hmu;
      out.coarse = std::max(out.coarse, quotient(x, mu, H));
      for (int k = 0; k < 4; ++k) {
        const double off = k * H / 4;
        const double xs = along_x ? x + off : x, ms = along_x ? mu : mu + off;
        const double q = quotient(xs, ms, H / 4);
        if (q > out.fine) {
          out.fine = q;
          out.x = xs;
          out.mu = ms;
        }
      }
    }
  return out;
}

} // namespace

RateHypothesisReport check_rate_hypotheses(const RateModel& m, double x_max, double mu_max,
                                           int nx, int nmu) {
  require(nx >= 2 && nmu >= 2 && x_max > 0 && mu_max > 0, "empty hypothesis lattice");
  RateHypothesisReport rep;
  const double hx = x_max / (nx - 1), hmu = mu_max / (nmu - 1);
  const double tol = 1e-12 * std::max(1.0, m.a1());

  double max_level0 = 0, max_all = 0;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nmu; ++j) {
      const double x = i * hx, mu = j * hmu, v = m.eval(x, mu);
      max_all = std::max(max_all, v);
      if (j == 0) max_level0 = std::max(max_level0, v);
      if (rep.passes_a1 && i + 1 < nx && m.eval(x + hx, mu) < v - tol) {
        rep.passes_a1 = false;
        rep.witnesses.push_back({"a1", x, mu, "decreasing in x"});
      }
      if (rep.passes_a1 && j + 1 < nmu && m.eval(x, mu + hmu) < v - tol) {
        rep.passes_a1 = false;
        rep.witnesses.push_back({"a1", x, mu, "decreasing in mu"});
      }
    }

  if (!(m.a0() > 0) || m.a0() > m.a1()) {
    rep.passes_a2 = false;
    rep.witnesses.push_back({"a2", 0, 0, "levels violate 0 < a0 <= a1"});
  }
  if (max_level0 > m.a0() + tol || max_level0 < 0.99 * m.a0()) {
    rep.passes_a2 = false;
    rep.witnesses.push_back({"a2", x_max, 0, "a(x,0) does not approach a0 on the lattice"});
  }
  if (max_all > m.a1() + tol) {
    rep.passes_a2 = false;
    rep.witnesses.push_back({"a2", x_max, mu_max, "a exceeds a1"});
  }

  for (int order = 1; order <= 2; ++order)
    for (bool along_x : {true, false}) {
      auto s = scan_quotients(m, x_max, mu_max, nx, nmu, along_x, order);
      if (s.fine > 2.0 * s.coarse + 1e-6) {
        rep.passes_a3 = false;
        rep.witnesses.push_back(
            {"a3", s.x, s.mu,
             std::string(order == 1 ? "first" : "second") + " difference quotient in " +
                 (along_x ? "x" : "mu") + " grows under refinement"});
      }
    }
  return rep;
}

//----------------------------------------------------------------------------

DelayKernel::DelayKernel(Kind k, double tau, int shape, double delta)
    : kind_(k), tau_(tau), k_(shape), delta_(delta) {}

DelayKernel DelayKernel::dirac() { return DelayKernel(Kind::Dirac, 0, 1, 0); }

DelayKernel DelayKernel::exp(double tau, std::optional<double> delta) {
  require(tau > 0 && std::isfinite(tau), "exp kernel needs tau > 0");
  const double d = delta.value_or(0.5 / tau);
  require(d > 0 && d * tau < 1, "exp kernel needs 0 < delta < 1/tau");
  return DelayKernel(Kind::Exp, tau, 1, d);
}

DelayKernel DelayKernel::erlang(int k, double tau, std::optional<double> delta) {
  require(k >= 2, "erlang kernel needs shape k >= 2");
  require(tau > 0 && std::isfinite(tau), "erlang kernel needs tau > 0");
  const double d = delta.value_or(0.5 / tau);
  require(d > 0 && d * tau < 1, "erlang kernel needs 0 < delta < 1/tau");
  return DelayKernel(Kind::Erlang, tau, k, d);
}

double DelayKernel::density(double y) const {
  require(y >= 0, "kernel evaluated at negative delay");
  switch (kind_) {
  case Kind::Dirac: throw DiracNotDensity("the Dirac kernel has no pointwise density");
  case Kind::Exp: return std::exp(-y / tau_) / tau_;
  case Kind::Erlang: return boost::math::gamma_p_derivative(double(k_), y / tau_) / tau_;
  }
  return 0;
}

double DelayKernel::density_dy(double y) const {
  require(y >= 0, "kernel evaluated at negative delay");
  switch (kind_) {
  case Kind::Dirac: throw DiracNotDensity("the Dirac kernel has no pointwise density");
  case Kind::Exp: return -density(y) / tau_;
  case Kind::Erlang:
    if (y == 0) return k_ == 2 ? 1.0 / (tau_ * tau_) : 0.0;
    return density(y) * ((k_ - 1) / y - 1 / tau_);
  }
  return 0;
}

double DelayKernel::cdf(double y) const {
  switch (kind_) {
  case Kind::Dirac: return y >= 0 ? 1.0 : 0.0;
  case Kind::Exp: return y <= 0 ? 0.0 : -std::expm1(-y / tau_);
  case Kind::Erlang: return y <= 0 ? 0.0 : boost::math::gamma_p(double(k_), y / tau_);
  }
  return 0;
}

double DelayKernel::tail(double y) const {
  switch (kind_) {
  case Kind::Dirac: return y >= 0 ? 0.0 : 1.0;
  case Kind::Exp: return y <= 0 ? 1.0 : std::exp(-y / tau_);
  case Kind::Erlang: return y <= 0 ? 1.0 : boost::math::gamma_q(double(k_), y / tau_);
  }
  return 0;
}

double DelayKernel::quantile_tail(double tol) const {
  require(tol > 0 && tol < 1, "tail tolerance must lie in (0,1)");
  switch (kind_) {
  case Kind::Dirac: return 0.0;
  case Kind::Exp: return tau_ * std::log(1 / tol);
  case Kind::Erlang: return tau_ * boost::math::gamma_q_inv(double(k_), tol);
  }
  return 0;
}

std::string DelayKernel::id() const {
  switch (kind_) {
  case Kind::Dirac: return "dirac";
  case Kind::Exp: return "exp(tau=" + fmt(tau_) + ",delta=" + fmt(delta_) + ")";
  case Kind::Erlang:
    return "erlang(k=" + std::to_string(k_) + ",tau=" + fmt(tau_) + ",delta=" + fmt(delta_) + ")";
  }
  return "";
}

double delay_weight(const DelayKernel& b, double y) { return b.density(y); }

DelayHypothesisReport check_delay_hypothesis(const DelayKernel& b) {
  DelayHypothesisReport rep;
  if (b.is_dirac()) {
    rep.instantaneous = true;
    rep.weighted_integral = 1.0;
    return rep;
  }
  using boost::math::quadrature::gauss_kronrod;
  const double tau = b.tau(), delta = b.delta();
  const double mode = (b.shape() - 1) * tau;
  const double Y = std::max(b.quantile_tail(1e-14), 2 * mode);

  auto integrate = [&](const std::function<double(double)>& f) {
    double total = 0;
    const double breaks[] = {0.0, mode, Y};
    for (int s = 0; s < 2; ++s)
      if (breaks[s + 1] > breaks[s])
        total += gauss_kronrod<double, 61>::integrate(f, breaks[s], breaks[s + 1], 15, 1e-13);
    return total;
  };

  rep.mass = integrate([&](double y) { return b.density(y); }) + b.tail(Y);
  rep.weighted_integral = integrate([&](double y) {
    return std::exp(delta * y) * (b.density(y) + std::abs(b.density_dy(y)));
  });
  // Beyond the mode |b'| <= b/tau, and int_Y^inf e^{delta y} b has a closed
  // form as a scaled upper incomplete gamma function.
  const double rate = 1 / tau - delta;
  const double k = b.shape();
  rep.tail_remainder = (1 + 1 / tau) * std::pow(1 - delta * tau, -k) *
                       boost::math::gamma_q(k, rate * Y);
  rep.finite = std::isfinite(rep.weighted_integral) && std::isfinite(rep.tail_remainder) &&
               delta * tau < 1;
  rep.weighted_integral += rep.tail_remainder;
  return rep;
}

//----------------------------------------------------------------------------

void to_json(nlohmann::json& j, const RateModel& m) {
  const auto& p = m.params();
  switch (m.kind()) {
  case RateModel::Kind::Constant: j = {{"kind", "constant"}, {"a", p[0]}}; break;
  case RateModel::Kind::SoftSigmoid:
    j = {{"kind", "soft_sigmoid"}, {"a0", p[0]}, {"a1", p[1]}, {"lx", p[2]}, {"lmu", p[3]}};
    break;
  case RateModel::Kind::StepThreshold:
    j = {{"kind", "step_threshold"}, {"sigma0", p[0]}, {"sigma_inf", p[1]}, {"k", p[2]}};
    break;
  }
}

namespace {
double num(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw ConfigError(std::string("missing or non-numeric field '") + key + "'");
  return j.at(key).get<double>();
}
} // namespace

RateModel rate_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError("rate block needs a string 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  try {
    if (kind == "constant") return RateModel::constant(num(j, "a"));
    if (kind == "soft_sigmoid")
      return RateModel::soft_sigmoid(num(j, "a0"), num(j, "a1"), num(j, "lx"), num(j, "lmu"));
    if (kind == "step_threshold")
      return RateModel::step_threshold(num(j, "sigma0"), num(j, "sigma_inf"), num(j, "k"));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown rate kind '" + kind + "'");
}

void to_json(nlohmann::json& j, const DelayKernel& b) {
  switch (b.kind()) {
  case DelayKernel::Kind::Dirac: j = {{"kind", "dirac"}}; break;
  case DelayKernel::Kind::Exp: j = {{"kind", "exp"}, {"tau", b.tau()}, {"delta", b.delta()}}; break;
  case DelayKernel::Kind::Erlang:
    j = {{"kind", "erlang"}, {"k", b.shape()}, {"tau", b.tau()}, {"delta", b.delta()}};
    break;
  }
}

DelayKernel delay_from_json(const nlohmann::json& j) {
  if (j.is_null()) return DelayKernel::dirac();
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw ConfigError("delay block needs a string 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  std::optional<double> delta;
  if (j.contains("delta")) delta = num(j, "delta");
  try {
    if (kind == "dirac") return DelayKernel::dirac();
    if (kind == "exp") return DelayKernel::exp(num(j, "tau"), delta);
    if (kind == "erlang") {
      const double k = num(j, "k");
      if (k != std::floor(k)) throw ConfigError("erlang shape must be an integer");
      return DelayKernel::erlang(int(k), num(j, "tau"), delta);
    }
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown delay kind '" + kind + "'");
}

} // namespace elapsed
