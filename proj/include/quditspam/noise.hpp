#pragma once
// Filter-function model of pi-pulse errors from magnetic-field noise.
//
// Angular frequencies are rad/s. The absolute PSD normalization is folded into
// the h parameters, so kappa (MHz/G) only enters as kappa^2.

#include <json.hpp>

#include <vector>

#include "quditspam/csv.hpp"
#include "quditspam/lsq.hpp"

namespace quditspam {

struct NoiseModel {
  double h_a = 0.0;            ///< 1/f coefficient: S = h_a / omega
  double h_b = 0.0;            ///< white floor
  double h_peak = 0.0;         ///< level inside the mains peak
  double omega_0 = 1.0;        ///< low-frequency cutoff
  double omega_AC = 0.0;       ///< mains angular frequency
  double delta_omega_AC = 0.0; ///< full width of the mains peak

  /// Throws std::invalid_argument on omega_0 <= 0, negative levels or delta_omega_AC >= omega_AC.
  void validate() const;
};

void to_json(nlohmann::json &j, const NoiseModel &m);
/// Rejects unknown keys.
void from_json(const nlohmann::json &j, NoiseModel &m);

struct TransitionNoiseParams {
  double kappa = 0.0;  ///< MHz/G
  double tau_pi = 0.0; ///< s

  double Omega() const; ///< pi / tau_pi, rad/s
};

/// kappa^2 S(omega).
double psd(double omega, const NoiseModel &model, double kappa);

/// 4 omega^2 / Omega^2 below Omega, 4 above.
double filter_function_pi(double omega, double Omega);

/// (1/pi) int_0^inf S F / omega^2 by adaptive Gauss-Kronrod on each smooth
/// piece, with the tail beyond the last breakpoint added analytically.
/// Throws std::runtime_error naming the sub-interval if a piece fails to converge.
double chi_numeric(const NoiseModel &model, const TransitionNoiseParams &params);

/// Approximate closed form valid for omega_0 << Omega, delta_omega_AC << omega_AC.
/// Throws std::invalid_argument unless omega_AC < Omega.
double chi_closed_form(const NoiseModel &model, const TransitionNoiseParams &params);

/// (1 - e^-chi) / 2
double pi_pulse_error(double chi);

/// Post-selected SPAM error of one prepared state: eps / (eps + (1 - eps)^2).
double spam_error_from_pi(double eps_pi);

struct ScalingPoint {
  double kappa = 0.0;  ///< MHz/G
  double tau_pi = 0.0; ///< us
  double eps_spam = 0.0;

  double x() const { return kappa * kappa * tau_pi * tau_pi; }
};

struct ScalingFit {
  double intercept = 0.0; ///< b
  double scale = 0.0;     ///< c, in 1 / (MHz/G * us)^2
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero(); ///< order (b, c)
  double rss = 0.0;

  double intercept_sigma() const;
  double scale_sigma() const;
  /// b + spam_error_from_pi(pi_pulse_error(c x))
  double predict(double x) const;
};

/// Rows of a table with columns kappa_MHz_per_G, tau_pi_us, eps_spam; rows with
/// a missing value in any of the three are skipped.
std::vector<ScalingPoint> read_scaling_points(const csv::Table &table);

/// Two-parameter fit of eps = b + spam_error_from_pi(pi_pulse_error(c kappa^2 tau^2)).
/// Requires at least 3 points.
ScalingFit fit_error_scaling(const std::vector<ScalingPoint> &points);

struct ErrorBudgetInputs {
  double shelf_time = 0.12;    ///< s
  double lifetime = 35.0;      ///< s
  double omega_off = 10e3;     ///< Hz, Rabi frequency of the driven transition
  double detuning = 475e3;     ///< Hz, to the nearest spectator transition
  double lambda_dark = 0.651;  ///< mean counts
  double lambda_bright = 27.87;
  int threshold = 11;          ///< counts above threshold read as bright
};

struct ErrorBudget {
  double decay = 0.0;
  double off_resonant = 0.0;
  double dark_read_bright = 0.0; ///< P[Poisson(lambda_dark) > threshold]
  double bright_read_dark = 0.0; ///< P[Poisson(lambda_bright) <= threshold]
  double discrimination() const { return dark_read_bright + bright_read_dark; }
};

ErrorBudget error_budget(const ErrorBudgetInputs &inputs);

} // namespace quditspam
