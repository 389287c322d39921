#include "quditspam/noise.hpp"

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

namespace quditspam {

void NoiseModel::validate() const {
  if (!(omega_0 > 0.0)) throw std::invalid_argument("noise model: omega_0 must be positive");
  if (h_a < 0.0 || h_b < 0.0 || h_peak < 0.0) throw std::invalid_argument("noise model: PSD levels must be >= 0");
  if (delta_omega_AC < 0.0 || omega_AC < 0.0) throw std::invalid_argument("noise model: mains parameters must be >= 0");
  if (delta_omega_AC > 0.0 && !(delta_omega_AC < omega_AC))
    throw std::invalid_argument("noise model: delta_omega_AC must be below omega_AC");
}

void to_json(nlohmann::json &j, const NoiseModel &m) {
  j = {{"h_a", m.h_a},         {"h_b", m.h_b},           {"h_peak", m.h_peak},
       {"omega_0", m.omega_0}, {"omega_AC", m.omega_AC}, {"delta_omega_AC", m.delta_omega_AC}};
}

void from_json(const nlohmann::json &j, NoiseModel &m) {
  for (const auto &[key, value] : j.items()) {
    if (key == "h_a") m.h_a = value.get<double>();
    else if (key == "h_b") m.h_b = value.get<double>();
    else if (key == "h_peak") m.h_peak = value.get<double>();
    else if (key == "omega_0") m.omega_0 = value.get<double>();
    else if (key == "omega_AC") m.omega_AC = value.get<double>();
    else if (key == "delta_omega_AC") m.delta_omega_AC = value.get<double>();
    else throw std::invalid_argument("noise model: unknown key '" + key + "'");
  }
  m.validate();
}

double TransitionNoiseParams::Omega() const {
  if (!(tau_pi > 0.0)) throw std::invalid_argument("tau_pi must be positive");
  return std::numbers::pi / tau_pi;
}

namespace {

bool in_peak(double omega, const NoiseModel &m) {
  return m.delta_omega_AC > 0.0 && omega > m.omega_AC - m.delta_omega_AC / 2 &&
         omega < m.omega_AC + m.delta_omega_AC / 2;
}

double base_psd(double omega, const NoiseModel &m) {
  if (omega < m.omega_0) return m.h_a / m.omega_0;
  if (in_peak(omega, m)) return m.h_peak;
  return m.h_a / omega + m.h_b;
}

} // namespace

double psd(double omega, const NoiseModel &model, double kappa) { return kappa * kappa * base_psd(omega, model); }

double filter_function_pi(double omega, double Omega) {
  return omega < Omega ? 4.0 * omega * omega / (Omega * Omega) : 4.0;
}

double chi_numeric(const NoiseModel &model, const TransitionNoiseParams &params) {
  model.validate();
  const double Omega = params.Omega();
  // F / omega^2 with the omega^2 cancelled analytically below Omega.
  auto integrand = [&](double w) {
    const double weight = w < Omega ? 4.0 / (Omega * Omega) : 4.0 / (w * w);
    return base_psd(w, model) * weight;
  };
  std::vector<double> cuts{0.0, model.omega_0, Omega};
  if (model.delta_omega_AC > 0.0) {
    cuts.push_back(model.omega_AC - model.delta_omega_AC / 2);
    cuts.push_back(model.omega_AC + model.delta_omega_AC / 2);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  const double lambda = cuts.back();

  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    if (b <= a) continue;
    double error = 0.0;
    const double piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, a, b, 20, 1e-12, &error);
    if (!std::isfinite(piece) || error > 1e-8 * std::abs(piece) + 1e-300)
      throw std::runtime_error(fmt::format("chi quadrature did not converge on [{:g}, {:g}] rad/s (error estimate {:g})",
                                           a, b, error));
    total += piece;
  }
  // Beyond every breakpoint: S = h_a/w + h_b and F/w^2 = 4/w^2.
  if (lambda >= model.omega_0 && lambda >= Omega && !in_peak(lambda, model))
    total += 2.0 * model.h_a / (lambda * lambda) + 4.0 * model.h_b / lambda;
  else
    throw std::logic_error("chi tail start is not in the generic PSD branch");
  return params.kappa * params.kappa * total / std::numbers::pi;
}

double chi_closed_form(const NoiseModel &model, const TransitionNoiseParams &params) {
  model.validate();
  const double Omega = params.Omega();
  if (!(model.omega_AC < Omega))
    throw std::invalid_argument("chi_closed_form assumes omega_AC < Omega (pulse too long for this form)");
  const double K = 1.5 * model.h_a + model.h_a * std::log(Omega / model.omega_0) + model.h_peak * model.delta_omega_AC;
  const double chi = 4.0 * K / (std::numbers::pi * Omega * Omega) + 8.0 * model.h_b / (std::numbers::pi * Omega);
  return params.kappa * params.kappa * chi;
}

double pi_pulse_error(double chi) {
  if (chi < 0.0) throw std::invalid_argument("chi must be >= 0");
  return 0.5 * (-std::expm1(-chi));
}

double spam_error_from_pi(double eps_pi) {
  if (eps_pi < 0.0 || eps_pi >= 1.0) throw std::invalid_argument("eps_pi must lie in [0, 1)");
  return eps_pi / (eps_pi + (1.0 - eps_pi) * (1.0 - eps_pi));
}

double ScalingFit::intercept_sigma() const { return std::sqrt(std::max(0.0, covariance(0, 0))); }
double ScalingFit::scale_sigma() const { return std::sqrt(std::max(0.0, covariance(1, 1))); }

namespace {

// Composite model value and derivatives without domain checks (the solver may
// probe c < 0 on its way to a flat optimum).
struct ModelValue {
  double value, d_dchi;
};

ModelValue composite(double chi) {
  const double e = 0.5 * (-std::expm1(-chi));
  const double de = 0.5 * std::exp(-chi);
  const double D = e + (1 - e) * (1 - e);
  return {e / D, (1 - e * e) / (D * D) * de};
}

// Inverse of spam_error_from_pi(pi_pulse_error(chi)) for y in (0, 2/3).
double invert_composite(double y) {
  y = std::clamp(y, 1e-9, 0.66);
  const double e = ((y + 1) - std::sqrt((y + 1) * (y + 1) - 4 * y * y)) / (2 * y);
  return -std::log1p(-2 * e);
}

} // namespace

double ScalingFit::predict(double x) const { return intercept + composite(scale * x).value; }

ScalingFit fit_error_scaling(const std::vector<ScalingPoint> &points) {
  if (points.size() < 3) throw FitError("error-scaling fit needs at least 3 points");
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::VectorXd x(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = points[static_cast<std::size_t>(i)].x();
    y[i] = points[static_cast<std::size_t>(i)].eps_spam;
  }
  Eigen::Index imin, imax;
  x.minCoeff(&imin);
  x.maxCoeff(&imax);
  const double b0 = y.minCoeff();
  double c0 = 0.0;
  if (x[imax] > x[imin]) {
    const double rise = y[imax] - b0;
    c0 = rise > 0.0 ? invert_composite(rise) / x[imax] : 0.0;
  }
  if (!(c0 > 0.0)) c0 = x[imax] > 0.0 ? 1e-3 / x[imax] : 1e-3;

  LeastSquaresProblem problem;
  problem.residual_count = n;
  problem.residuals = [&](const Eigen::VectorXd &p) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = p[0] + composite(p[1] * x[i]).value - y[i];
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd &p) {
    Eigen::MatrixXd J(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      J(i, 0) = 1.0;
      J(i, 1) = composite(p[1] * x[i]).d_dchi * x[i];
    }
    return J;
  };
  const auto result = solve_least_squares(problem, Eigen::Vector2d(b0, c0));
  ScalingFit fit;
  fit.intercept = result.parameters[0];
  fit.scale = result.parameters[1];
  fit.covariance = result.covariance;
  fit.rss = result.rss;
  return fit;
}

std::vector<ScalingPoint> read_scaling_points(const csv::Table &table) {
  const auto ck = table.column("kappa_MHz_per_G"), ct = table.column("tau_pi_us"), ce = table.column("eps_spam");
  std::vector<ScalingPoint> points;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.missing(r, ck) || table.missing(r, ct) || table.missing(r, ce)) continue;
    points.push_back({table.number(r, ck), table.number(r, ct), table.number(r, ce)});
  }
  return points;
}

ErrorBudget error_budget(const ErrorBudgetInputs &in) {
  if (!(in.shelf_time >= 0.0) || !(in.lifetime > 0.0)) throw std::invalid_argument("error budget: bad times");
  if (!(in.lambda_dark > 0.0) || !(in.lambda_bright > 0.0)) throw std::invalid_argument("error budget: bad rates");
  if (in.threshold < 0) throw std::invalid_argument("error budget: threshold must be >= 0");
  ErrorBudget b;
  b.decay = -std::expm1(-in.shelf_time / in.lifetime);
  const double o2 = in.omega_off * in.omega_off;
  b.off_resonant = o2 / (o2 + in.detuning * in.detuning);
  const boost::math::poisson_distribution<double> dark(in.lambda_dark), bright(in.lambda_bright);
  b.dark_read_bright = boost::math::cdf(boost::math::complement(dark, static_cast<double>(in.threshold)));
  b.bright_read_dark = boost::math::cdf(bright, static_cast<double>(in.threshold));
  return b;
}

} // namespace quditspam
