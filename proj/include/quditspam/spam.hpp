#pragma once
// Shelve / de-shelve SPAM protocol: encodings, pulse plans, a classical
// Monte-Carlo shot simulator and confusion-matrix analysis.
//
// Each pi-pulse is a Bernoulli swap between its two states and each
// fluorescence check a Bernoulli misread; no coherences are tracked.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quditspam/atomstruct.hpp"
#include "quditspam/csv.hpp"
#include "quditspam/rng.hpp"
#include "quditspam/transitions.hpp"

namespace quditspam {

enum class Manifold { S12, D52 };

struct AtomicState {
  Manifold manifold = Manifold::S12;
  StateLabel label;

  auto operator<=>(const AtomicState &) const = default;
  bool bright() const { return manifold == Manifold::S12; }
  /// "6S1/2 F=2 m=2"
  std::string str() const;
  static AtomicState parse(const std::string &text);
  static AtomicState s(int F, int m) { return {Manifold::S12, {HalfInt(F), HalfInt(m)}}; }
  static AtomicState d(int F, int m) { return {Manifold::D52, {HalfInt(F), HalfInt(m)}}; }
  /// A 6S1/2 population no pulse addresses (failed pumping, decay products).
  static AtomicState unaddressed_ground() { return {Manifold::S12, {HalfInt(0), HalfInt(0)}}; }
};

/// Pulse transitions are keyed as Transition{6S1/2 label, 5D5/2 label}.
Transition transition_between(const AtomicState &a, const AtomicState &b);

struct QuditEncoding {
  std::string name;
  /// Index = computational state. states[0] must be in 6S1/2.
  std::vector<AtomicState> states;
  /// Unencoded 5D5/2 parking states, one per 6S1/2-encoded state other than |0>, in index order.
  std::vector<AtomicState> reserved;

  std::size_t d() const { return states.size(); }
  /// Throws std::invalid_argument on duplicate labels, d > 25, a non-6S1/2 |0> or a reserved-set mismatch.
  void validate() const;

  /// The 13-level experiment: |0> = 6S1/2 |2,2>, |1>..|12> as in the bundled state table.
  static QuditEncoding paper13();
  /// First d states of paper13 (1 <= d <= 13).
  static QuditEncoding paper_prefix(std::size_t d);
  /// 25 levels: all 8 ground states plus 17 metastable states, with 7 metastable
  /// states reserved as shelving targets. Choices follow the strength table.
  static QuditEncoding generalized25(const StrengthTable &table);
};

struct PlanStep {
  enum class Kind { Pulse, Check };
  Kind kind = Kind::Check;
  Transition transition; ///< pulses only
  std::size_t reports = 0; ///< checks only: state measured if this is the first bright read
};

struct Protocol {
  QuditEncoding encoding;
  std::vector<PlanStep> measurement;
  /// preparation[n]: pulse transitions taking |0> to state n (empty for n = 0).
  std::vector<std::vector<Transition>> preparation;
  std::size_t max_preparation_pulses() const;
};

/// Transitions usable for pulses: |delta m| <= 2 and, if a table is given, strength > threshold.
struct Connectivity {
  const StrengthTable *table = nullptr;
  double threshold = 0.03;
  bool allowed(const AtomicState &s, const AtomicState &d) const;
};

/// Shelving pulses for 6S1/2-encoded states, the |0> check, then (de-shelve, check)
/// for n = 1..d-1. Throws std::invalid_argument if a state cannot be prepared in
/// at most three pulses or lacks a usable de-shelving transition.
std::vector<PlanStep> build_measurement_sequence(const QuditEncoding &encoding, const Connectivity &links = {});
Protocol build_protocol(const QuditEncoding &encoding, const Connectivity &links = {});

struct ErrorParams {
  std::map<Transition, double> eps_pi;
  /// Overrides eps_pi for preparation pulses only.
  std::map<Transition, double> eps_pi_prep;
  double prep_error = 0.0;       ///< optical pumping leaves the ion in an unaddressed ground state
  double p_dark_given_S = 0.0;   ///< bright ion read as dark
  double p_bright_given_D = 0.0; ///< dark ion read as bright
  double decay_rate = 0.0;       ///< 1/s, shelved states
  /// Time elapsed before each check (s), one per check; empty disables decay.
  std::vector<double> check_intervals;
  struct Leak {
    Transition spectator;
    double probability = 0.0;
  };
  /// Off-resonant drive of a spectator transition while pulsing the key transition.
  std::map<Transition, Leak> crosstalk;

  /// Throws std::invalid_argument for probabilities outside [0, 1].
  void validate() const;
  /// Every pulse transition of the protocol set to eps.
  static ErrorParams uniform(const Protocol &protocol, double eps);
  double eps(const Transition &t, bool preparation) const;
};

/// Leak of every pulse onto the other protocol pulse nearest in frequency, with
/// probability Omega^2 / (Omega^2 + Delta^2). Frequencies in MHz, rabi in Hz.
std::map<Transition, ErrorParams::Leak> nearest_spectator_crosstalk(const Protocol &protocol,
                                                                    const std::map<Transition, double> &frequency,
                                                                    double rabi);

struct ShotRecord {
  std::size_t prepared = 0;
  std::vector<bool> reads; ///< true = bright, one per check
};

/// Throws std::out_of_range if a required eps_pi entry is missing.
ShotRecord simulate_shot(std::size_t prepared, const Protocol &protocol, const ErrorParams &errors, SubStream &rng);

enum class Interpretation { FirstBright, StrictSingleBright };

/// Checks run in index order, so read i reports state i.
/// Index of the first bright read, or nullopt (Null). Strict mode also returns
/// nullopt when more than one read is bright.
std::optional<std::size_t> interpret(const ShotRecord &record, Interpretation mode);

class ConfusionMatrix {
public:
  /// values: d rows x (d or d+1) columns; shots: per-row sample sizes.
  ConfusionMatrix(Eigen::MatrixXd values, bool has_null, bool probabilities, std::vector<double> shots);

  std::size_t d() const { return static_cast<std::size_t>(values_.rows()); }
  bool has_null() const { return has_null_; }
  bool is_probability() const { return probabilities_; }
  const Eigen::MatrixXd &values() const { return values_; }
  const std::vector<double> &shots() const { return shots_; }
  double null_value(std::size_t row) const;

  ConfusionMatrix to_probabilities() const;
  bool operator==(const ConfusionMatrix &) const = default;

private:
  Eigen::MatrixXd values_;
  bool has_null_;
  bool probabilities_;
  std::vector<double> shots_;
};

struct RunOptions {
  std::size_t shots_per_state = 1000;
  std::uint64_t seed = 1;
  Interpretation mode = Interpretation::FirstBright;
  unsigned workers = 1; ///< 0 = hardware concurrency; results do not depend on it
};

/// Raw counts with a Null column. Shot k of prepared state n uses substream (seed, k, n).
ConfusionMatrix run_experiment(const Protocol &protocol, const ErrorParams &errors, const RunOptions &options);

/// Rows renormalized over non-Null outcomes. Throws std::domain_error for an all-Null row.
ConfusionMatrix post_select(const ConfusionMatrix &raw);

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

/// Mean diagonal probability with binomial uncertainty from the per-row shots.
Estimate average_fidelity(const ConfusionMatrix &matrix);
/// 1 - average_fidelity; Null outcomes count as errors.
Estimate average_error(const ConfusionMatrix &matrix);

struct ScalingRow {
  std::size_t d = 0;
  double optimal = 0.0;
  double worst = 0.0;
};

/// fidelities[0] is |0>; for each d, |0> plus the best (worst) d-1 other states.
/// Ties are broken by ascending index. Throws std::invalid_argument if d exceeds the data.
std::vector<ScalingRow> scaling_analysis(const std::vector<double> &fidelities, std::size_t d_min, std::size_t d_max);

struct TimingParams {
  double fluorescence_check = 5e-3; ///< s
  double awg_trigger = 4e-3;        ///< s
  double loop_optical_pump = 0.0;   ///< s, optical pumping inside the measurement loop
  double cooling = 0.0;             ///< s, preparation
  double optical_pump = 0.0;        ///< s, preparation
};

struct TimingBudget {
  double preparation = 0.0; ///< for the prepared state passed in
  double measurement = 0.0;
  std::map<std::string, double> phases; ///< measurement breakdown
  /// Time before each check, for decay modelling (first entry is the arming trigger).
  std::vector<double> check_intervals;
};

/// tau_pi[n] is the de-shelving pi time of state n (s); tau_pi[0] is ignored.
/// Measurement: d checks, d AWG triggers (one arms the list), d-1 pulses and loop pumps.
TimingBudget timing_budget(const std::vector<double> &tau_pi, const TimingParams &params, std::size_t prepared = 0);

/// Confusion-matrix CSV: header "prepared,0,..,d-1[,Null]", first column the prepared index.
ConfusionMatrix read_confusion_csv(const csv::Table &table, double shots_per_row = 1000.0);
void write_csv(std::ostream &out, const ConfusionMatrix &matrix, int precision = 6);
void to_json(nlohmann::json &j, const ConfusionMatrix &matrix);

} // namespace quditspam
