#pragma once
// Calibration procedures: Lorentzian line centres, the three-reference linear
// frequency model, field estimation from splittings, Rabi-flop fits and
// ratio-based pi-time prediction.

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "quditspam/atomstruct.hpp"
#include "quditspam/csv.hpp"
#include "quditspam/transitions.hpp"

namespace quditspam {

struct ScanPoint {
  double frequency = 0.0; ///< kHz
  double p_dark = 0.0;
  double shots = 0.0;
};

struct FrequencyScan {
  std::vector<ScanPoint> points;
  /// Throws std::invalid_argument unless frequencies increase strictly and probabilities lie in [0, 1].
  void validate() const;
};

/// Columns freq_kHz, p_dark, shots.
FrequencyScan read_frequency_scan(const csv::Table &table);

/// A w^2 / ((f - f0)^2 + w^2) + c
double lorentzian(double f, double center, double width, double amplitude, double offset);

struct LorentzianFit {
  double center = 0.0; ///< kHz
  double width = 0.0;  ///< half width at half maximum, kHz
  double amplitude = 0.0;
  double offset = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero(); ///< (center, width, amplitude, offset)
  double rss = 0.0;
  /// Highest sample at a scan edge or fitted centre outside the scanned range.
  bool peak_at_boundary = false;

  double center_sigma() const { return std::sqrt(covariance(0, 0)); }
};

/// Needs at least 5 points. Throws FitError on non-convergence.
LorentzianFit fit_lorentzian(const FrequencyScan &scan);

/// Frequencies center - half_span .. center + half_span in `step` increments.
std::vector<double> scan_plan(double center, double half_span, double step);
inline std::vector<double> coarse_scan_plan(double center) { return scan_plan(center, 50.0, 10.0); }
inline std::vector<double> fine_scan_plan(double center) { return scan_plan(center, 10.0, 1.0); }

/// The three measured reference transitions of the linear calibration model.
struct ReferenceSet {
  Transition offset;
  Transition low;
  Transition up;
};

/// offset: encoded transition with the smallest |kappa|. low / up: the smallest and
/// largest kappa among stretched-to-stretched transitions (|m| maximal in both
/// levels) with strength above the threshold. Overrides replace the automatic choices.
ReferenceSet select_references(const EigenSystem &ground, const EigenSystem &excited, const StrengthTable &table,
                               const std::vector<Transition> &encoded, double threshold = 0.03,
                               const std::optional<ReferenceSet> &overrides = std::nullopt);

/// One calibration run: reference frequencies and measured encoded frequencies (MHz).
struct CalibrationSnapshot {
  double f_offset = 0.0;
  double f_low = 0.0;
  double f_up = 0.0;
  std::map<std::size_t, double> f; ///< keyed by computational state

  double delta_f() const { return f_up - f_low; }
};

/// Noise-free snapshot generated from the level structure at `field`.
CalibrationSnapshot simulate_snapshot(const ReferenceSet &references, const std::vector<Transition> &encoded,
                                      double field, const LabelingOptions &options = {});

struct CalibrationLine {
  double a1 = 0.0; ///< slope against delta f
  double a2 = 0.0; ///< MHz
  double residual_rms = 0.0;
  std::size_t samples = 0;
};

struct CalibrationModel {
  std::map<std::size_t, CalibrationLine> lines;
  std::optional<ReferenceSet> references;
};

/// Ordinary least squares of f_n - f_offset against delta f for every state.
/// Throws std::invalid_argument for fewer than 2 snapshots or all delta f equal.
CalibrationModel fit_calibration(const std::vector<CalibrationSnapshot> &history);

/// a_n1 (f_up - f_low) + f_offset + a_n2. Throws std::out_of_range for unknown n.
double predict_frequency(const CalibrationModel &model, double f_offset, double f_low, double f_up, std::size_t n);

void to_json(nlohmann::json &j, const CalibrationModel &model);
void from_json(const nlohmann::json &j, CalibrationModel &model);

struct FieldSearchOptions {
  double lower = 0.0; ///< G
  double upper = 20.0;
  std::size_t grid_points = 201;
  double tolerance = 1e-7; ///< G, golden-section bracket width
  /// Another separated local minimum with RSS below best * (1 + ambiguity) + 1e-12 marks the result non-unique.
  double ambiguity = 1e-3;
  LabelingOptions labeling{};
};

struct FieldEstimate {
  double field = 0.0; ///< G
  double rss = 0.0;   ///< MHz^2
  /// Measured minus simulated, after removing the best common offset (MHz).
  std::map<Transition, double> residuals;
  bool unique = true;
  std::vector<double> alternatives; ///< other near-degenerate minima (G)
};

/// Measured transition frequencies share an unknown common offset (only
/// splittings carry information). Needs at least 2 transitions with distinct kappa.
FieldEstimate estimate_field(const std::map<Transition, double> &measured, const FieldSearchOptions &options = {});

struct RabiPoint {
  double time = 0.0; ///< us
  double p = 0.0;
  double shots = 0.0;
};

struct RabiTrace {
  std::vector<RabiPoint> points;
  /// Throws std::invalid_argument unless times are non-negative and strictly increasing.
  void validate() const;
};

/// Columns t_us, p_transition, shots.
RabiTrace read_rabi_trace(const csv::Table &table);

/// A cos^2(pi (t - t_peak) / (2 t_scale)) + C
double rabi_model(double t, double A, double C, double t_peak, double t_scale);

struct RabiFitOptions {
  bool smooth = true; ///< 3-point moving average for peak location only
  std::size_t min_points = 5;
};

struct RabiFit {
  double A = 0.0;
  double C = 0.0;
  double t_peak = 0.0;
  double t_scale = 0.0;
  double eps_pi = 0.0; ///< 1 - A - C
  double eps_pi_sigma = 0.0;
  /// False when the window only constrains the peak curvature; A, C and t_scale are then NaN.
  bool shape_resolved = true;
  double t_peak_raw = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t points_used = 0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero(); ///< (A, C, t_peak, t_scale)
  double rss = 0.0;
};

/// Fits the first flop peak on the window [t0 + (tp - t0)/2, t0 + 3(tp - t0)/2],
/// t0 the first sample time and tp the empirical first-peak time.
/// Throws FitError if no peak can be identified or the window holds too few points.
RabiFit fit_rabi_flop(const RabiTrace &trace, const RabiFitOptions &options = {});

struct RabiAnchor {
  Transition transition;
  double omega = 0.0; ///< angular Rabi frequency
};

struct PiCalibration {
  double omega = 0.0;
  double tau_pi = 0.0; ///< pi / omega
};

/// Delta m of a transition (m_D - m_S) as an integer.
int transition_q(const Transition &t);

/// K_target / K_anchor from the table. Throws std::invalid_argument if the two
/// transitions have different q or the anchor strength is zero.
double strength_ratio(const StrengthTable &table, const Transition &target, const Transition &anchor);

/// Predicts Omega and tau_pi for each target from the anchor sharing its q.
/// Throws std::invalid_argument for a missing q anchor, an anchor filed under
/// the wrong q or a zero-strength anchor.
std::map<Transition, PiCalibration> ratio_pi_calibration(const std::map<int, RabiAnchor> &anchors,
                                                         const StrengthTable &table,
                                                         const std::vector<Transition> &targets);

/// sqrt(Omega^2 + delta^2)
double detuned_rabi(double omega, double delta);

} // namespace quditspam
