#include "quditspam/transitions.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "quditspam/csv.hpp"

namespace quditspam {

namespace {

double wrap_degrees(double angle) {
  double a = std::fmod(angle, 180.0);
  if (a < 0.0) a += 180.0;
  return a == 180.0 ? 0.0 : a;
}

constexpr double kDeg = std::numbers::pi / 180.0;

} // namespace

LaserGeometry LaserGeometry::normalized() const { return {wrap_degrees(phi), wrap_degrees(gamma)}; }

double geometric_factor(int q, const LaserGeometry &geometry) {
  const double phi = geometry.phi * kDeg, gamma = geometry.gamma * kDeg;
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  const double inv_sqrt6 = 1.0 / std::sqrt(6.0);
  switch (q) {
  case 0:
    return 0.5 * std::abs(cg * std::sin(2 * phi));
  case 1:
  case -1:
    return inv_sqrt6 * std::abs(std::complex<double>(-q * cg * std::cos(2 * phi), sg * std::cos(phi)));
  case 2:
  case -2:
    return inv_sqrt6 * std::abs(std::complex<double>(0.5 * cg * std::sin(2 * phi), -(q / 2) * sg * std::sin(phi)));
  default:
    return 0.0;
  }
}

double relative_strength(const LevelConstants &ground_level, const LabeledEigenstate &ground,
                         const LevelConstants &excited_level, const LabeledEigenstate &excited,
                         const LaserGeometry &geometry) {
  if (ground_level.I != excited_level.I) throw std::invalid_argument("levels have different nuclear spin");
  const HalfInt q_half = excited.label.m - ground.label.m;
  if (!q_half.is_integer()) throw std::invalid_argument("transition changes m by a half-integer");
  const int q = q_half.twice() / 2;
  if (std::abs(q) > 2) return 0.0;

  const auto gbasis = product_basis(ground_level);
  const auto ebasis = product_basis(excited_level);
  std::complex<double> sum = 0.0;
  for (std::size_t a = 0; a < gbasis.size(); ++a) {
    const auto cs = ground.amp_mImJ[static_cast<Eigen::Index>(a)];
    if (cs == 0.0) continue;
    for (std::size_t b = 0; b < ebasis.size(); ++b) {
      if (ebasis[b].m_I != gbasis[a].m_I) continue;
      const auto cd = excited.amp_mImJ[static_cast<Eigen::Index>(b)];
      if (cd == 0.0) continue;
      const double cg = clebsch_gordan(ground_level.J, gbasis[a].m_J, HalfInt(2), HalfInt(q), excited_level.J,
                                       ebasis[b].m_J);
      sum += std::conj(cd) * cs * cg;
    }
  }
  return geometric_factor(q, geometry) * std::abs(sum);
}

double relative_strength(const EigenSystem &ground_system, StateLabel ground, const EigenSystem &excited_system,
                         StateLabel excited, const LaserGeometry &geometry) {
  if (std::abs(ground_system.field() - excited_system.field()) > 1e-12)
    throw std::invalid_argument("relative_strength: eigensystems were computed at different fields");
  return relative_strength(ground_system.level(), ground_system.state(ground), excited_system.level(),
                           excited_system.state(excited), geometry);
}

StrengthTable::StrengthTable(LaserGeometry geometry, double field, std::vector<StateLabel> ground_states,
                             std::vector<StateLabel> excited_states, std::vector<std::vector<double>> values)
    : geometry_(geometry), field_(field), ground_(std::move(ground_states)), excited_(std::move(excited_states)),
      values_(std::move(values)) {
  if (values_.size() != excited_.size()) throw std::invalid_argument("strength table row count mismatch");
  for (const auto &row : values_)
    if (row.size() != ground_.size()) throw std::invalid_argument("strength table column count mismatch");
}

double StrengthTable::at(StateLabel ground, StateLabel excited) const {
  const auto c = std::find(ground_.begin(), ground_.end(), ground);
  const auto r = std::find(excited_.begin(), excited_.end(), excited);
  if (c == ground_.end() || r == excited_.end())
    throw std::out_of_range("strength table has no entry " + ground.str() + " -> " + excited.str());
  return values_[static_cast<std::size_t>(r - excited_.begin())][static_cast<std::size_t>(c - ground_.begin())];
}

bool StrengthTable::has_ground(StateLabel ground) const {
  return std::find(ground_.begin(), ground_.end(), ground) != ground_.end();
}

StrengthTable strength_table(const LevelConstants &ground_level, const LevelConstants &excited_level, double field,
                             const LaserGeometry &geometry, const LabelingOptions &options) {
  const auto gsys = diagonalize(ground_level, field, options);
  const auto esys = diagonalize(excited_level, field, options);
  auto columns = coupled_basis(ground_level);
  std::stable_sort(columns.begin(), columns.end(), [](auto a, auto b) { return a.F != b.F ? a.F < b.F : a.m < b.m; });
  const auto rows = coupled_basis(excited_level);
  std::vector<std::vector<double>> values(rows.size(), std::vector<double>(columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < columns.size(); ++c)
      values[r][c] = relative_strength(gsys, columns[c], esys, rows[r], geometry);
  return StrengthTable(geometry, field, columns, rows, std::move(values));
}

StrengthTable strength_table(double field, const LaserGeometry &geometry, const LabelingOptions &options) {
  return strength_table(LevelConstants::ba137_s12(), LevelConstants::ba137_d52(), field, geometry, options);
}

std::vector<StateLabel> encodable_states(const StrengthTable &table, StateLabel ground, double threshold) {
  if (!table.has_ground(ground)) throw std::out_of_range("strength table has no ground state " + ground.str());
  std::vector<StateLabel> out;
  for (const auto &e : table.excited_states())
    if (table.at(ground, e) > threshold) out.push_back(e);
  std::sort(out.begin(), out.end(), [](auto a, auto b) { return a.F != b.F ? a.F > b.F : a.m > b.m; });
  return out;
}

EncodingPreset paper13_preset() {
  auto L = [](int F, int m) { return StateLabel{HalfInt(F), HalfInt(m)}; };
  return {"paper13",
          L(2, 2),
          {L(4, 4), L(4, 3), L(4, 2), L(4, 1), L(4, 0), L(3, 2), L(3, 1), L(3, 0), L(2, 2), L(2, 1), L(2, 0), L(1, 0)}};
}

void write_csv(std::ostream &out, const StrengthTable &table, int precision) {
  out << "state_5D5/2";
  for (const auto &g : table.ground_states()) out << ',' << g.str();
  out << '\n';
  for (std::size_t r = 0; r < table.excited_states().size(); ++r) {
    out << table.excited_states()[r].str();
    for (double v : table.values()[r]) out << ',' << fmt::format("{:.{}f}", v, precision);
    out << '\n';
  }
}

StrengthTable read_strength_csv(std::istream &in, double field, LaserGeometry geometry) {
  const auto csv = csv::read(in);
  if (csv.header.size() < 2) throw std::runtime_error("strength table CSV needs at least two columns");
  std::vector<StateLabel> ground, excited;
  for (std::size_t c = 1; c < csv.header.size(); ++c) ground.push_back(StateLabel::parse(csv.header[c]));
  std::vector<std::vector<double>> values;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    excited.push_back(StateLabel::parse(csv.rows[r][0]));
    std::vector<double> row;
    for (std::size_t c = 1; c < csv.header.size(); ++c) row.push_back(csv.number(r, c));
    values.push_back(std::move(row));
  }
  return StrengthTable(geometry, field, std::move(ground), std::move(excited), std::move(values));
}

void to_json(nlohmann::json &j, const StrengthTable &table) {
  j = nlohmann::json{{"field_G", table.field()},
                     {"phi_deg", table.geometry().phi},
                     {"gamma_deg", table.geometry().gamma},
                     {"unit", "reduced matrix element <J_D||Q||J_S>"},
                     {"entries", nlohmann::json::array()}};
  for (std::size_t r = 0; r < table.excited_states().size(); ++r)
    for (std::size_t c = 0; c < table.ground_states().size(); ++c) {
      const auto &g = table.ground_states()[c];
      const auto &e = table.excited_states()[r];
      j["entries"].push_back({{"ground", {{"F", g.F.value()}, {"m", g.m.value()}}},
                              {"excited", {{"F", e.F.value()}, {"m", e.m.value()}}},
                              {"strength", table.values()[r][c]}});
    }
}

} // namespace quditspam
