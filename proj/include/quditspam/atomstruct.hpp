#pragma once
// Hyperfine + Zeeman structure of a single fine-structure level.
//
// Energies are in MHz (frequency units, h = 1) relative to the level centroid;
// the Hamiltonian is traceless so the centroid sits at zero. Fields are in gauss.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quditspam/angmom.hpp"

namespace quditspam {

struct PhysicalConstants {
  /// Bohr magneton over Planck constant, MHz/G.
  static constexpr double mu_B_over_h = 1.3996245;
};

struct LevelConstants {
  std::string name;
  HalfInt I;
  HalfInt J;
  double A_D = 0.0; ///< magnetic-dipole hyperfine constant, MHz
  double B_Q = 0.0; ///< electric-quadrupole hyperfine constant, MHz
  double g_J = 0.0;
  double g_I = 0.0;

  /// Throws std::invalid_argument when the constants cannot define a Hamiltonian.
  void validate() const;
  std::size_t dimension() const {
    return static_cast<std::size_t>((I.twice() + 1) * (J.twice() + 1));
  }

  /// 137Ba+ 6S1/2 with Lande g_J = 2 and g_I = 0.
  static LevelConstants ba137_s12();
  /// 137Ba+ 5D5/2 with Lande g_J = 6/5 and g_I = 0.
  static LevelConstants ba137_d52();
};

/// (F~, m_F~) label of an intermediate-field eigenstate, or (F, m_F) of a
/// zero-field basis state.
struct StateLabel {
  HalfInt F;
  HalfInt m;

  auto operator<=>(const StateLabel &) const = default;
  /// "F=4 m=-1"
  std::string str() const;
  /// Accepts "F=4 m=-1", "F=4,m=-1", "4,-1" and "F4m-1".
  static StateLabel parse(const std::string &text);
};

class LabelingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// |m_I, m_J> product basis; index = iI * (2J+1) + iJ with both projections descending.
struct ProductState {
  HalfInt m_I;
  HalfInt m_J;
  HalfInt m() const { return m_I + m_J; }
};
std::vector<ProductState> product_basis(const LevelConstants &level);

/// All |F, m_F> labels of the level, F ascending then m_F descending.
std::vector<StateLabel> coupled_basis(const LevelConstants &level);

/// |F, m_F> expressed in the product basis (real Clebsch-Gordan amplitudes).
Eigen::VectorXd coupled_state(const LevelConstants &level, StateLabel label);

/// Closed-form zero-field energy of hyperfine level F.
double zero_field_energy(const LevelConstants &level, HalfInt F);

struct LabeledEigenstate {
  StateLabel label;
  double energy = 0.0;       ///< MHz relative to the level centroid
  Eigen::VectorXcd amp_mImJ; ///< over product_basis(level)
  Eigen::VectorXd amp_FmF;   ///< over coupled_basis(level)
};

class EigenSystem {
public:
  EigenSystem(LevelConstants level, double field, std::vector<LabeledEigenstate> states);

  const LevelConstants &level() const { return level_; }
  double field() const { return field_; }
  const std::vector<LabeledEigenstate> &states() const { return states_; }
  /// Throws std::out_of_range for labels not present in the level.
  const LabeledEigenstate &state(StateLabel label) const;
  bool contains(StateLabel label) const;

private:
  LevelConstants level_;
  double field_;
  std::vector<LabeledEigenstate> states_;
};

/// Hermitian Hamiltonian over product_basis(level) for field B >= 0.
Eigen::MatrixXcd build_hamiltonian(const LevelConstants &level, double field);

struct LabelingOptions {
  double initial_step = 0.01;   ///< G
  double minimum_step = 1e-3;   ///< G, refinement floor
  double overlap_threshold = 0.7;
};

/// Diagonalises each m block and labels eigenstates by adiabatic continuation
/// from B = 0. Throws LabelingError if continuation fails at the step floor.
EigenSystem diagonalize(const LevelConstants &level, double field, const LabelingOptions &options = {});

/// Continues labels of `start` to a new field (upward or downward).
EigenSystem continue_to(const EigenSystem &start, double field, const LabelingOptions &options = {});

/// Labeled eigensystems at each of `fields` (any order), sharing one continuation sweep.
std::vector<EigenSystem> diagonalize_scan(const LevelConstants &level, std::span<const double> fields,
                                          const LabelingOptions &options = {});

struct DecompositionScan {
  StateLabel state;
  std::vector<double> fields;
  std::vector<StateLabel> components; ///< |F, m_F> components that are ever non-zero
  Eigen::MatrixXd amplitudes;         ///< fields.size() x components.size()
};

/// Amplitudes of one eigenstate in the |F, m_F> basis along increasing fields.
DecompositionScan decomposition_scan(const LevelConstants &level, StateLabel state,
                                     std::span<const double> fields, const LabelingOptions &options = {});

/// E_excited - E_ground + optical_offset (MHz). Both systems must share one field.
double transition_frequency(const EigenSystem &ground_system, StateLabel ground,
                            const EigenSystem &excited_system, StateLabel excited,
                            double optical_offset = 0.0);

/// A ground-level to excited-level transition, identified by its two labels.
struct Transition {
  StateLabel ground;
  StateLabel excited;
  auto operator<=>(const Transition &) const = default;
  std::string str() const;
};

struct SensitivityOptions {
  double step = 1e-3; ///< G
  LabelingOptions labeling{};
};

/// dF/dB of the transition frequency by central difference (MHz/G).
double field_sensitivity(const LevelConstants &ground_level, const LevelConstants &excited_level,
                         const Transition &transition, double field, const SensitivityOptions &options = {});

/// Same, reusing eigensystems already labeled at `field` as continuation seeds.
double field_sensitivity(const EigenSystem &ground_system, const EigenSystem &excited_system,
                         const Transition &transition, const SensitivityOptions &options = {});

} // namespace quditspam
