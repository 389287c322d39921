#include "quditspam/atomstruct.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <regex>

namespace quditspam {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

void LevelConstants::validate() const {
  if (I.twice() < 0 || J.twice() < 0) throw std::invalid_argument(name + ": I and J must be non-negative");
  if (B_Q != 0.0 && (I.twice() < 2 || J.twice() < 2))
    throw std::invalid_argument(name + ": quadrupole constant requires I >= 1 and J >= 1");
}

LevelConstants LevelConstants::ba137_s12() {
  return {"6S1/2", HalfInt::half(3), HalfInt::half(1), 4018.871, 0.0, 2.0, 0.0};
}

LevelConstants LevelConstants::ba137_d52() {
  return {"5D5/2", HalfInt::half(3), HalfInt::half(5), -12.028, 59.533, 1.2, 0.0};
}

std::string StateLabel::str() const { return "F=" + F.str() + " m=" + m.str(); }

StateLabel StateLabel::parse(const std::string &text) {
  static const std::regex named(R"(^\s*F\s*=?\s*(-?\d+(?:/2)?)\s*[,;_ ]?\s*m\s*=?\s*(-?\d+(?:/2)?)\s*$)",
                                std::regex::icase);
  static const std::regex bare(R"(^\s*(-?\d+(?:/2)?)\s*,\s*(-?\d+(?:/2)?)\s*$)");
  std::smatch match;
  if (std::regex_match(text, match, named) || std::regex_match(text, match, bare))
    return {HalfInt::parse(match[1]), HalfInt::parse(match[2])};
  throw std::invalid_argument("cannot parse state label '" + text + "'");
}

std::string Transition::str() const { return ground.str() + " -> " + excited.str(); }

std::vector<ProductState> product_basis(const LevelConstants &level) {
  std::vector<ProductState> basis;
  for (int tmi = level.I.twice(); tmi >= -level.I.twice(); tmi -= 2)
    for (int tmj = level.J.twice(); tmj >= -level.J.twice(); tmj -= 2)
      basis.push_back({HalfInt::from_twice(tmi), HalfInt::from_twice(tmj)});
  return basis;
}

std::vector<StateLabel> coupled_basis(const LevelConstants &level) {
  std::vector<StateLabel> labels;
  const int lo = std::abs(level.I.twice() - level.J.twice());
  const int hi = level.I.twice() + level.J.twice();
  for (int tf = lo; tf <= hi; tf += 2)
    for (int tm = tf; tm >= -tf; tm -= 2) labels.push_back({HalfInt::from_twice(tf), HalfInt::from_twice(tm)});
  return labels;
}

VectorXd coupled_state(const LevelConstants &level, StateLabel label) {
  const auto basis = product_basis(level);
  VectorXd v = VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i)
    v[static_cast<Eigen::Index>(i)] =
        clebsch_gordan(level.I, basis[i].m_I, level.J, basis[i].m_J, label.F, label.m);
  return v;
}

double zero_field_energy(const LevelConstants &level, HalfInt F) {
  const double i = level.I.value(), j = level.J.value(), f = F.value();
  const double K = f * (f + 1) - i * (i + 1) - j * (j + 1);
  double energy = 0.5 * level.A_D * K;
  if (level.B_Q != 0.0) {
    energy += level.B_Q * (0.75 * K * (K + 1) - i * (i + 1) * j * (j + 1)) /
              (2 * i * (2 * i - 1) * j * (2 * j - 1));
  }
  return energy;
}

namespace {

// Spin matrices for one angular momentum, projections descending.
struct SpinMatrices {
  MatrixXd z, plus;
};

SpinMatrices spin_matrices(HalfInt j) {
  const int n = j.twice() + 1;
  SpinMatrices s{MatrixXd::Zero(n, n), MatrixXd::Zero(n, n)};
  const double jj = j.value();
  for (int k = 0; k < n; ++k) {
    const double m = jj - k;
    s.z(k, k) = m;
    if (k > 0) s.plus(k - 1, k) = std::sqrt(jj * (jj + 1) - m * (m + 1));
  }
  return s;
}

MatrixXd kron(const MatrixXd &a, const MatrixXd &b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

struct Block {
  int twice_m;
  std::vector<Eigen::Index> indices;
  std::vector<StateLabel> labels; // coupled labels living in this block
};

std::vector<Block> blocks_of(const LevelConstants &level) {
  const auto basis = product_basis(level);
  std::map<int, Block> by_m;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    auto &b = by_m[basis[i].m().twice()];
    b.twice_m = basis[i].m().twice();
    b.indices.push_back(static_cast<Eigen::Index>(i));
  }
  for (const auto &label : coupled_basis(level)) by_m[label.m.twice()].labels.push_back(label);
  std::vector<Block> out;
  for (auto &[m, b] : by_m) {
    if (b.labels.size() != b.indices.size()) throw std::logic_error("block dimension mismatch");
    out.push_back(std::move(b));
  }
  return out;
}

// Labeled vectors of one block, in the block's coordinates; order follows Block::labels.
struct BlockState {
  std::vector<VectorXcd> vectors;
  std::vector<double> energies;
};

MatrixXcd block_of(const MatrixXcd &h, const Block &b) {
  const auto n = static_cast<Eigen::Index>(b.indices.size());
  MatrixXcd out(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) out(r, c) = h(b.indices[r], b.indices[c]);
  return out;
}

void fix_phase(VectorXcd &v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best]) + 1e-12) best = i;
  const std::complex<double> a = v[best];
  v *= std::conj(a) / std::abs(a);
}

// Zero-field eigenvectors are the coupled states themselves.
std::vector<BlockState> zero_field_states(const LevelConstants &level, const std::vector<Block> &blocks) {
  const MatrixXcd h = build_hamiltonian(level, 0.0);
  std::vector<BlockState> out;
  for (const auto &b : blocks) {
    BlockState s;
    const MatrixXcd hb = block_of(h, b);
    for (const auto &label : b.labels) {
      const VectorXd full = coupled_state(level, label);
      VectorXcd v(static_cast<Eigen::Index>(b.indices.size()));
      for (std::size_t k = 0; k < b.indices.size(); ++k) v[static_cast<Eigen::Index>(k)] = full[b.indices[k]];
      fix_phase(v);
      s.energies.push_back((v.adjoint() * hb * v)(0, 0).real());
      s.vectors.push_back(std::move(v));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// One continuation step for one block. Returns false if the overlap test fails.
bool step_block(const MatrixXcd &hb, const BlockState &previous, double threshold, BlockState &next) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> solver(hb);
  if (solver.info() != Eigen::Success) return false;
  const auto n = static_cast<std::size_t>(hb.rows());
  std::vector<bool> taken(n, false);
  next.vectors.assign(n, VectorXcd());
  next.energies.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double best = -1.0;
    Eigen::Index arg = 0;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) {
      const double overlap = std::abs(previous.vectors[k].dot(solver.eigenvectors().col(j)));
      if (overlap > best) {
        best = overlap;
        arg = j;
      }
    }
    if (best <= threshold || taken[static_cast<std::size_t>(arg)]) return false;
    taken[static_cast<std::size_t>(arg)] = true;
    VectorXcd v = solver.eigenvectors().col(arg);
    fix_phase(v);
    next.vectors[k] = std::move(v);
    next.energies[k] = solver.eigenvalues()[arg];
  }
  return true;
}

// Carries block states from field `from` to field `to`, refining steps on failure.
std::vector<BlockState> continue_blocks(const LevelConstants &level, const std::vector<Block> &blocks,
                                        std::vector<BlockState> states, double from, double to,
                                        const LabelingOptions &options) {
  double field = from;
  double step = options.initial_step;
  while (field != to) {
    const double direction = to > field ? 1.0 : -1.0;
    double target = field + direction * step;
    if ((to - target) * direction <= 0.0) target = to;
    const MatrixXcd h = build_hamiltonian(level, target);
    std::vector<BlockState> next(blocks.size());
    bool ok = true;
    for (std::size_t b = 0; b < blocks.size() && ok; ++b)
      ok = step_block(block_of(h, blocks[b]), states[b], options.overlap_threshold, next[b]);
    if (!ok) {
      step *= 0.5;
      if (step < options.minimum_step) {
        throw LabelingError(level.name + ": adiabatic labeling failed near B = " + std::to_string(field) +
                            " G (no overlap above threshold at the minimum step)");
      }
      continue;
    }
    states = std::move(next);
    field = target;
    step = std::min(options.initial_step, 2.0 * step);
  }
  return states;
}

EigenSystem assemble(const LevelConstants &level, double field, const std::vector<Block> &blocks,
                     const std::vector<BlockState> &states) {
  const auto dim = static_cast<Eigen::Index>(level.dimension());
  const auto labels = coupled_basis(level);
  std::vector<VectorXd> coupled;
  for (const auto &label : labels) coupled.push_back(coupled_state(level, label));

  std::vector<LabeledEigenstate> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t k = 0; k < blocks[b].labels.size(); ++k) {
      LabeledEigenstate s;
      s.label = blocks[b].labels[k];
      s.energy = states[b].energies[k];
      s.amp_mImJ = VectorXcd::Zero(dim);
      for (std::size_t i = 0; i < blocks[b].indices.size(); ++i)
        s.amp_mImJ[blocks[b].indices[i]] = states[b].vectors[k][static_cast<Eigen::Index>(i)];
      s.amp_FmF = VectorXd::Zero(static_cast<Eigen::Index>(labels.size()));
      for (std::size_t c = 0; c < labels.size(); ++c) {
        if (labels[c].m != s.label.m) continue;
        s.amp_FmF[static_cast<Eigen::Index>(c)] = coupled[c].cast<std::complex<double>>().dot(s.amp_mImJ).real();
      }
      out.push_back(std::move(s));
    }
  }
  std::sort(out.begin(), out.end(), [&](const auto &a, const auto &b) {
    auto pos = [&](StateLabel l) { return std::find(labels.begin(), labels.end(), l) - labels.begin(); };
    return pos(a.label) < pos(b.label);
  });
  return EigenSystem(level, field, std::move(out));
}

std::vector<BlockState> split(const EigenSystem &system, const std::vector<Block> &blocks) {
  std::vector<BlockState> out;
  for (const auto &b : blocks) {
    BlockState s;
    for (const auto &label : b.labels) {
      const auto &state = system.state(label);
      VectorXcd v(static_cast<Eigen::Index>(b.indices.size()));
      for (std::size_t i = 0; i < b.indices.size(); ++i) v[static_cast<Eigen::Index>(i)] = state.amp_mImJ[b.indices[i]];
      s.vectors.push_back(std::move(v));
      s.energies.push_back(state.energy);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void check_field(double field) {
  if (!(field >= 0.0) || !std::isfinite(field)) throw std::invalid_argument("magnetic field must be finite and >= 0");
}

} // namespace

EigenSystem::EigenSystem(LevelConstants level, double field, std::vector<LabeledEigenstate> states)
    : level_(std::move(level)), field_(field), states_(std::move(states)) {}

const LabeledEigenstate &EigenSystem::state(StateLabel label) const {
  for (const auto &s : states_)
    if (s.label == label) return s;
  throw std::out_of_range(level_.name + " has no state " + label.str());
}

bool EigenSystem::contains(StateLabel label) const {
  return std::any_of(states_.begin(), states_.end(), [&](const auto &s) { return s.label == label; });
}

MatrixXcd build_hamiltonian(const LevelConstants &level, double field) {
  level.validate();
  check_field(field);
  const auto si = spin_matrices(level.I);
  const auto sj = spin_matrices(level.J);
  const MatrixXd idI = MatrixXd::Identity(si.z.rows(), si.z.cols());
  const MatrixXd idJ = MatrixXd::Identity(sj.z.rows(), sj.z.cols());

  // I.J = Iz Jz + (I+ J- + I- J+) / 2
  const MatrixXd IdotJ = kron(si.z, sj.z) + 0.5 * (kron(si.plus, sj.plus.transpose()) +
                                                    kron(si.plus.transpose(), sj.plus));
  const auto dim = IdotJ.rows();
  MatrixXd h = level.A_D * IdotJ;
  if (level.B_Q != 0.0) {
    const double i = level.I.value(), j = level.J.value();
    const MatrixXd numerator =
        3.0 * IdotJ * IdotJ + 1.5 * IdotJ - i * (i + 1) * j * (j + 1) * MatrixXd::Identity(dim, dim);
    h += level.B_Q * numerator / (2 * i * (2 * i - 1) * j * (2 * j - 1));
  }
  const double zeeman = field * PhysicalConstants::mu_B_over_h;
  h += zeeman * (level.g_J * kron(idI, sj.z) + level.g_I * kron(si.z, idJ));
  return h.cast<std::complex<double>>();
}

EigenSystem diagonalize(const LevelConstants &level, double field, const LabelingOptions &options) {
  check_field(field);
  level.validate();
  const auto blocks = blocks_of(level);
  auto states = continue_blocks(level, blocks, zero_field_states(level, blocks), 0.0, field, options);
  return assemble(level, field, blocks, states);
}

EigenSystem continue_to(const EigenSystem &start, double field, const LabelingOptions &options) {
  check_field(field);
  const auto blocks = blocks_of(start.level());
  auto states = continue_blocks(start.level(), blocks, split(start, blocks), start.field(), field, options);
  return assemble(start.level(), field, blocks, states);
}

std::vector<EigenSystem> diagonalize_scan(const LevelConstants &level, std::span<const double> fields,
                                          const LabelingOptions &options) {
  level.validate();
  for (double f : fields) check_field(f);
  std::vector<std::size_t> order(fields.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fields[a] < fields[b]; });

  const auto blocks = blocks_of(level);
  auto states = zero_field_states(level, blocks);
  double at = 0.0;
  std::vector<std::optional<EigenSystem>> results(fields.size());
  for (auto idx : order) {
    states = continue_blocks(level, blocks, std::move(states), at, fields[idx], options);
    at = fields[idx];
    results[idx] = assemble(level, at, blocks, states);
  }
  std::vector<EigenSystem> out;
  out.reserve(results.size());
  for (auto &r : results) out.push_back(std::move(*r));
  return out;
}

DecompositionScan decomposition_scan(const LevelConstants &level, StateLabel state, std::span<const double> fields,
                                     const LabelingOptions &options) {
  const auto labels = coupled_basis(level);
  if (std::find(labels.begin(), labels.end(), state) == labels.end())
    throw std::invalid_argument(level.name + " has no state " + state.str());
  if (!std::is_sorted(fields.begin(), fields.end()))
    throw std::invalid_argument("decomposition scan fields must be increasing");

  const auto systems = diagonalize_scan(level, fields, options);
  DecompositionScan scan{state, {fields.begin(), fields.end()}, {}, {}};
  std::vector<Eigen::Index> keep;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    if (labels[c].m != state.m) continue;
    const bool nonzero = std::any_of(systems.begin(), systems.end(), [&](const EigenSystem &s) {
      return std::abs(s.state(state).amp_FmF[static_cast<Eigen::Index>(c)]) > 1e-12;
    });
    if (nonzero) {
      keep.push_back(static_cast<Eigen::Index>(c));
      scan.components.push_back(labels[c]);
    }
  }
  scan.amplitudes = MatrixXd::Zero(static_cast<Eigen::Index>(systems.size()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < systems.size(); ++r)
    for (std::size_t k = 0; k < keep.size(); ++k)
      scan.amplitudes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
          systems[r].state(state).amp_FmF[keep[k]];
  return scan;
}

double transition_frequency(const EigenSystem &ground_system, StateLabel ground, const EigenSystem &excited_system,
                            StateLabel excited, double optical_offset) {
  if (std::abs(ground_system.field() - excited_system.field()) > 1e-12)
    throw std::invalid_argument("transition_frequency: eigensystems were computed at different fields");
  return excited_system.state(excited).energy - ground_system.state(ground).energy + optical_offset;
}

double field_sensitivity(const EigenSystem &ground_system, const EigenSystem &excited_system,
                         const Transition &transition, const SensitivityOptions &options) {
  const double field = ground_system.field();
  if (std::abs(excited_system.field() - field) > 1e-12)
    throw std::invalid_argument("field_sensitivity: eigensystems were computed at different fields");
  if (!(options.step > 0.0)) throw std::invalid_argument("field_sensitivity: step must be positive");
  if (field - options.step < 0.0)
    throw std::invalid_argument("field_sensitivity: finite-difference step crosses B = 0");
  auto frequency_at = [&](double b) {
    return transition_frequency(continue_to(ground_system, b, options.labeling), transition.ground,
                                continue_to(excited_system, b, options.labeling), transition.excited);
  };
  return (frequency_at(field + options.step) - frequency_at(field - options.step)) / (2.0 * options.step);
}

double field_sensitivity(const LevelConstants &ground_level, const LevelConstants &excited_level,
                         const Transition &transition, double field, const SensitivityOptions &options) {
  if (field - options.step < 0.0)
    throw std::invalid_argument("field_sensitivity: finite-difference step crosses B = 0");
  return field_sensitivity(diagonalize(ground_level, field, options.labeling),
                           diagonalize(excited_level, field, options.labeling), transition, options);
}

} // namespace quditspam
