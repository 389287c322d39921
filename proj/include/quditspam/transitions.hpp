#pragma once
// Quadrupole (k = 2) transition strengths between a ground level and a
// metastable level in the intermediate-field eigenbasis.
//
// Strengths are relative: the reduced matrix element <J_D||Q||J_S> is the unit.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "quditspam/atomstruct.hpp"

namespace quditspam {

/// Angles in degrees. phi: wavevector to field; gamma: polarization to the k-B plane.
struct LaserGeometry {
  double phi = 45.0;
  double gamma = 58.0;

  /// Both angles wrapped into [0, 180).
  LaserGeometry normalized() const;
};

/// g^(q)(gamma, phi) for q in [-2, 2]; 0 for any other q.
double geometric_factor(int q, const LaserGeometry &geometry);

/// |g^(q) sum c*_D c_S <J_S m_J,S; 2 q | J_D m_J,D>| with q = m_D - m_S and m_I conserved.
double relative_strength(const LevelConstants &ground_level, const LabeledEigenstate &ground,
                         const LevelConstants &excited_level, const LabeledEigenstate &excited,
                         const LaserGeometry &geometry);

/// Same, looking both states up by label. The systems must share one field.
double relative_strength(const EigenSystem &ground_system, StateLabel ground, const EigenSystem &excited_system,
                         StateLabel excited, const LaserGeometry &geometry);

class StrengthTable {
public:
  StrengthTable(LaserGeometry geometry, double field, std::vector<StateLabel> ground_states,
                std::vector<StateLabel> excited_states, std::vector<std::vector<double>> values);

  const LaserGeometry &geometry() const { return geometry_; }
  double field() const { return field_; }
  /// Columns: F ascending, m ascending.
  const std::vector<StateLabel> &ground_states() const { return ground_; }
  /// Rows: F ascending, m descending.
  const std::vector<StateLabel> &excited_states() const { return excited_; }
  /// values()[row][column]
  const std::vector<std::vector<double>> &values() const { return values_; }

  /// Throws std::out_of_range for labels outside the table.
  double at(StateLabel ground, StateLabel excited) const;
  bool has_ground(StateLabel ground) const;

private:
  LaserGeometry geometry_;
  double field_;
  std::vector<StateLabel> ground_;
  std::vector<StateLabel> excited_;
  std::vector<std::vector<double>> values_;
};

/// Full ground x excited table at one field.
StrengthTable strength_table(const LevelConstants &ground_level, const LevelConstants &excited_level, double field,
                             const LaserGeometry &geometry, const LabelingOptions &options = {});

/// 6S1/2 -> 5D5/2 table for 137Ba+.
StrengthTable strength_table(double field, const LaserGeometry &geometry, const LabelingOptions &options = {});

/// Excited states reachable from `ground` with strength > threshold, ordered F descending then m descending.
std::vector<StateLabel> encodable_states(const StrengthTable &table, StateLabel ground, double threshold = 0.03);

/// Computational-state assignment of the 13-level experiment: index 0 is the
/// ground |F=2, m=2>, indices 1..12 are 5D5/2 states.
struct EncodingPreset {
  std::string name;
  StateLabel ground;
  std::vector<StateLabel> excited;
};
EncodingPreset paper13_preset();

/// Rabi frequency of a transition given its relative strength and the
/// calibration scalar Omega_ref (units of the result follow Omega_ref).
inline double rabi_frequency(double strength, double omega_ref) { return strength * omega_ref; }

/// Table layout: header "state_5D5/2,<ground labels>", one row per excited state.
void write_csv(std::ostream &out, const StrengthTable &table, int precision = 4);
/// Reads the CSV layout written by write_csv (geometry and field are not stored in it).
StrengthTable read_strength_csv(std::istream &in, double field = 0.0, LaserGeometry geometry = {});

void to_json(nlohmann::json &j, const StrengthTable &table);

} // namespace quditspam
