#include "quditspam/spam.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>

namespace quditspam {

namespace {

const std::string kGroundName = "6S1/2";
const std::string kMetastableName = "5D5/2";

void check_probability(double p, const std::string &what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(fmt::format("{} must lie in [0, 1], got {}", what, p));
}

} // namespace

std::string AtomicState::str() const {
  if (*this == unaddressed_ground()) return kGroundName + " unaddressed";
  return (bright() ? kGroundName : kMetastableName) + " " + label.str();
}

AtomicState AtomicState::parse(const std::string &text) {
  const auto space = text.find(' ');
  if (space == std::string::npos) throw std::invalid_argument("expected '<level> <label>': '" + text + "'");
  const std::string level = text.substr(0, space), rest = text.substr(space + 1);
  if (level == kGroundName || level == "S") {
    if (rest == "unaddressed") return unaddressed_ground();
    return {Manifold::S12, StateLabel::parse(rest)};
  }
  if (level == kMetastableName || level == "D") return {Manifold::D52, StateLabel::parse(rest)};
  throw std::invalid_argument("unknown level '" + level + "' in '" + text + "'");
}

Transition transition_between(const AtomicState &a, const AtomicState &b) {
  if (a.manifold == b.manifold) throw std::invalid_argument("pulse must connect 6S1/2 and 5D5/2: " + a.str() + ", " + b.str());
  return a.bright() ? Transition{a.label, b.label} : Transition{b.label, a.label};
}

void QuditEncoding::validate() const {
  if (states.empty()) throw std::invalid_argument("encoding '" + name + "' has no states");
  if (states.size() > 25) throw std::invalid_argument("encoding '" + name + "' exceeds 25 states");
  if (!states[0].bright()) throw std::invalid_argument("state |0> must lie in 6S1/2");
  std::set<AtomicState> seen;
  std::size_t ground_encoded = 0;
  for (const auto &s : states) {
    if (s == AtomicState::unaddressed_ground()) throw std::invalid_argument("unaddressed state cannot be encoded");
    if (!seen.insert(s).second) throw std::invalid_argument("duplicate encoded state " + s.str());
    if (s.bright()) ++ground_encoded;
  }
  if (reserved.size() != ground_encoded - 1)
    throw std::invalid_argument(fmt::format("encoding '{}' needs {} reserved 5D5/2 states, has {}", name,
                                            ground_encoded - 1, reserved.size()));
  for (const auto &r : reserved) {
    if (r.bright()) throw std::invalid_argument("reserved state " + r.str() + " is not in 5D5/2");
    if (!seen.insert(r).second) throw std::invalid_argument("reserved state " + r.str() + " is also encoded");
  }
}

QuditEncoding QuditEncoding::paper13() {
  const auto preset = paper13_preset();
  QuditEncoding e;
  e.name = preset.name;
  e.states.push_back({Manifold::S12, preset.ground});
  for (const auto &label : preset.excited) e.states.push_back({Manifold::D52, label});
  return e;
}

QuditEncoding QuditEncoding::paper_prefix(std::size_t d) {
  auto e = paper13();
  if (d < 1 || d > e.states.size()) throw std::invalid_argument(fmt::format("prefix dimension {} not in [1, 13]", d));
  e.states.resize(d);
  e.name = fmt::format("{}[:{}]", e.name, d);
  return e;
}

QuditEncoding QuditEncoding::generalized25(const StrengthTable &table) {
  auto by_f_desc = [](const StateLabel &a, const StateLabel &b) {
    return a.F != b.F ? a.F > b.F : a.m > b.m;
  };
  std::vector<StateLabel> grounds = table.ground_states();
  std::vector<StateLabel> excited = table.excited_states();
  if (grounds.size() != 8 || excited.size() != 24)
    throw std::invalid_argument("generalized encoding needs the full 8 x 24 strength table");
  std::sort(grounds.begin(), grounds.end(), by_f_desc);
  std::sort(excited.begin(), excited.end(), by_f_desc);

  QuditEncoding e;
  e.name = "generalized25";
  for (const auto &g : grounds) e.states.push_back({Manifold::S12, g});
  std::set<StateLabel> used;
  for (std::size_t k = 1; k < grounds.size(); ++k) {
    const StateLabel *best = nullptr;
    double best_strength = 0.0;
    for (const auto &x : excited) {
      if (used.count(x)) continue;
      const double s = table.at(grounds[k], x);
      if (s > best_strength) best_strength = s, best = &x;
    }
    if (!best) throw std::invalid_argument("no shelving partner for " + grounds[k].str());
    used.insert(*best);
    e.reserved.push_back({Manifold::D52, *best});
  }
  for (const auto &x : excited)
    if (!used.count(x)) e.states.push_back({Manifold::D52, x});
  return e;
}

std::size_t Protocol::max_preparation_pulses() const {
  std::size_t n = 0;
  for (const auto &p : preparation) n = std::max(n, p.size());
  return n;
}

bool Connectivity::allowed(const AtomicState &s, const AtomicState &d) const {
  if (s.manifold == d.manifold) return false;
  const auto t = transition_between(s, d);
  if (std::abs((t.excited.m - t.ground.m).twice()) > 4) return false;
  if (!table) return true;
  if (!table->has_ground(t.ground)) return false;
  try {
    return table->at(t.ground, t.excited) > threshold;
  } catch (const std::out_of_range &) {
    return false;
  }
}

namespace {

std::vector<AtomicState> all_levels() {
  std::vector<AtomicState> out;
  for (const auto &l : coupled_basis(LevelConstants::ba137_s12())) out.push_back({Manifold::S12, l});
  for (const auto &l : coupled_basis(LevelConstants::ba137_d52())) out.push_back({Manifold::D52, l});
  return out;
}

// Fewest-pulse path from `from` to every reachable state.
std::map<AtomicState, std::vector<Transition>> shortest_paths(const AtomicState &from, const Connectivity &links) {
  const auto levels = all_levels();
  std::map<AtomicState, std::vector<Transition>> paths{{from, {}}};
  std::deque<AtomicState> queue{from};
  while (!queue.empty()) {
    const auto cur = queue.front();
    queue.pop_front();
    for (const auto &next : levels) {
      if (paths.count(next) || !links.allowed(cur, next)) continue;
      auto p = paths[cur];
      p.push_back(transition_between(cur, next));
      paths[next] = std::move(p);
      queue.push_back(next);
    }
  }
  return paths;
}

double link_strength(const Connectivity &links, const Transition &t) {
  return links.table ? links.table->at(t.ground, t.excited) : 0.0;
}

} // namespace

std::vector<PlanStep> build_measurement_sequence(const QuditEncoding &encoding, const Connectivity &links) {
  encoding.validate();
  std::vector<PlanStep> plan;
  auto pulse = [&](const Transition &t) { plan.push_back({PlanStep::Kind::Pulse, t, 0}); };

  std::map<std::size_t, Transition> shelve;
  std::size_t r = 0;
  for (std::size_t n = 1; n < encoding.d(); ++n) {
    if (!encoding.states[n].bright()) continue;
    const auto &parking = encoding.reserved[r++];
    if (!links.allowed(encoding.states[n], parking))
      throw std::invalid_argument("no usable shelving transition " + encoding.states[n].str() + " -> " + parking.str());
    shelve[n] = transition_between(encoding.states[n], parking);
    pulse(shelve[n]);
  }
  plan.push_back({PlanStep::Kind::Check, {}, 0});

  for (std::size_t n = 1; n < encoding.d(); ++n) {
    const auto &target = encoding.states[n];
    if (target.bright()) {
      pulse(shelve.at(n));
    } else if (links.allowed(encoding.states[0], target)) {
      pulse(transition_between(encoding.states[0], target));
    } else {
      std::optional<Transition> best;
      for (std::size_t k = 1; k < encoding.d(); ++k) {
        if (!encoding.states[k].bright() || !links.allowed(encoding.states[k], target)) continue;
        const auto t = transition_between(encoding.states[k], target);
        if (!best || link_strength(links, t) > link_strength(links, *best)) best = t;
      }
      if (!best) throw std::invalid_argument("no de-shelving transition for " + target.str());
      pulse(*best);
    }
    plan.push_back({PlanStep::Kind::Check, {}, n});
  }
  return plan;
}

Protocol build_protocol(const QuditEncoding &encoding, const Connectivity &links) {
  Protocol p;
  p.encoding = encoding;
  p.measurement = build_measurement_sequence(encoding, links);
  const auto paths = shortest_paths(encoding.states[0], links);
  for (const auto &s : encoding.states) {
    const auto it = paths.find(s);
    if (it == paths.end()) throw std::invalid_argument("state " + s.str() + " cannot be prepared from |0>");
    if (it->second.size() > 3)
      throw std::invalid_argument(fmt::format("state {} needs {} preparation pulses (limit 3)", s.str(), it->second.size()));
    p.preparation.push_back(it->second);
  }
  return p;
}

void ErrorParams::validate() const {
  for (const auto &[t, e] : eps_pi) check_probability(e, "eps_pi " + t.str());
  for (const auto &[t, e] : eps_pi_prep) check_probability(e, "eps_pi_prep " + t.str());
  check_probability(prep_error, "prep_error");
  check_probability(p_dark_given_S, "p_dark_given_S");
  check_probability(p_bright_given_D, "p_bright_given_D");
  if (!(decay_rate >= 0.0)) throw std::invalid_argument("decay_rate must be non-negative");
  for (double t : check_intervals)
    if (!(t >= 0.0)) throw std::invalid_argument("check intervals must be non-negative");
  for (const auto &[t, leak] : crosstalk) check_probability(leak.probability, "crosstalk " + t.str());
}

ErrorParams ErrorParams::uniform(const Protocol &protocol, double eps) {
  ErrorParams e;
  for (const auto &step : protocol.measurement)
    if (step.kind == PlanStep::Kind::Pulse) e.eps_pi[step.transition] = eps;
  for (const auto &path : protocol.preparation)
    for (const auto &t : path) e.eps_pi[t] = eps;
  e.validate();
  return e;
}

double ErrorParams::eps(const Transition &t, bool preparation) const {
  if (preparation) {
    if (auto it = eps_pi_prep.find(t); it != eps_pi_prep.end()) return it->second;
  }
  const auto it = eps_pi.find(t);
  if (it == eps_pi.end()) throw std::out_of_range("missing eps_pi for transition " + t.str());
  return it->second;
}

std::map<Transition, ErrorParams::Leak> nearest_spectator_crosstalk(const Protocol &protocol,
                                                                    const std::map<Transition, double> &frequency,
                                                                    double rabi) {
  std::set<Transition> pulses;
  for (const auto &step : protocol.measurement)
    if (step.kind == PlanStep::Kind::Pulse) pulses.insert(step.transition);
  for (const auto &path : protocol.preparation) pulses.insert(path.begin(), path.end());
  auto freq = [&](const Transition &t) {
    const auto it = frequency.find(t);
    if (it == frequency.end()) throw std::out_of_range("no frequency for transition " + t.str());
    return it->second;
  };
  std::map<Transition, ErrorParams::Leak> out;
  for (const auto &t : pulses) {
    std::optional<Transition> nearest;
    double gap = INFINITY;
    for (const auto &other : pulses) {
      if (other == t) continue;
      const double d = std::abs(freq(other) - freq(t));
      if (d < gap) gap = d, nearest = other;
    }
    if (!nearest) continue;
    const double delta = gap * 1e6;
    out[t] = {*nearest, rabi * rabi / (rabi * rabi + delta * delta)};
  }
  return out;
}

namespace {

// One uniform per pulse keeps the random stream aligned across parameter changes.
void apply_pulse(AtomicState &state, const Transition &t, double eps, const ErrorParams &errors, SubStream &rng) {
  const AtomicState s{Manifold::S12, t.ground}, d{Manifold::D52, t.excited};
  const double u = rng.uniform();
  if (state == s || state == d) {
    if (u >= eps) state = (state == s) ? d : s;
    return;
  }
  const auto it = errors.crosstalk.find(t);
  if (it == errors.crosstalk.end()) return;
  const AtomicState ls{Manifold::S12, it->second.spectator.ground}, ld{Manifold::D52, it->second.spectator.excited};
  if ((state == ls || state == ld) && u < it->second.probability) state = (state == ls) ? ld : ls;
}

} // namespace

ShotRecord simulate_shot(std::size_t prepared, const Protocol &protocol, const ErrorParams &errors, SubStream &rng) {
  if (prepared >= protocol.encoding.d())
    throw std::out_of_range(fmt::format("prepared state {} outside dimension {}", prepared, protocol.encoding.d()));
  const std::size_t checks = protocol.encoding.d();
  if (!errors.check_intervals.empty() && errors.check_intervals.size() != checks)
    throw std::invalid_argument(
        fmt::format("{} check intervals given for {} checks", errors.check_intervals.size(), checks));

  AtomicState state = protocol.encoding.states[0];
  if (rng.bernoulli(errors.prep_error)) state = AtomicState::unaddressed_ground();
  for (const auto &t : protocol.preparation[prepared]) apply_pulse(state, t, errors.eps(t, true), errors, rng);

  ShotRecord record{prepared, {}};
  record.reads.reserve(checks);
  for (const auto &step : protocol.measurement) {
    if (step.kind == PlanStep::Kind::Pulse) {
      apply_pulse(state, step.transition, errors.eps(step.transition, false), errors, rng);
      continue;
    }
    const double interval = errors.check_intervals.empty() ? 0.0 : errors.check_intervals[record.reads.size()];
    const double p_decay = -std::expm1(-errors.decay_rate * interval);
    if (rng.uniform() < p_decay && !state.bright()) state = AtomicState::unaddressed_ground();
    const double u = rng.uniform();
    const bool bright = state.bright() ? !(u < errors.p_dark_given_S) : (u < errors.p_bright_given_D);
    record.reads.push_back(bright);
  }
  return record;
}

std::optional<std::size_t> interpret(const ShotRecord &record, Interpretation mode) {
  std::optional<std::size_t> first;
  for (std::size_t i = 0; i < record.reads.size(); ++i) {
    if (!record.reads[i]) continue;
    if (!first) {
      first = i;
      if (mode == Interpretation::FirstBright) break;
    } else {
      return std::nullopt;
    }
  }
  return first;
}

ConfusionMatrix::ConfusionMatrix(Eigen::MatrixXd values, bool has_null, bool probabilities, std::vector<double> shots)
    : values_(std::move(values)), has_null_(has_null), probabilities_(probabilities), shots_(std::move(shots)) {
  const auto d = values_.rows();
  if (d == 0) throw std::invalid_argument("empty confusion matrix");
  if (values_.cols() != d + (has_null_ ? 1 : 0))
    throw std::invalid_argument(fmt::format("confusion matrix with {} rows needs {} columns, has {}", d,
                                            d + (has_null_ ? 1 : 0), values_.cols()));
  if (shots_.size() != static_cast<std::size_t>(d)) throw std::invalid_argument("one shot count per row required");
  if ((values_.array() < 0.0).any()) throw std::invalid_argument("confusion matrix entries must be non-negative");
}

double ConfusionMatrix::null_value(std::size_t row) const {
  return has_null_ ? values_(static_cast<Eigen::Index>(row), values_.cols() - 1) : 0.0;
}

ConfusionMatrix ConfusionMatrix::to_probabilities() const {
  if (probabilities_) return *this;
  Eigen::MatrixXd p = values_;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const double total = p.row(r).sum();
    if (total <= 0.0) throw std::domain_error(fmt::format("row {} has no shots", r));
    p.row(r) /= total;
  }
  return ConfusionMatrix(std::move(p), has_null_, true, shots_);
}

ConfusionMatrix run_experiment(const Protocol &protocol, const ErrorParams &errors, const RunOptions &options) {
  errors.validate();
  const std::size_t d = protocol.encoding.d();
  const std::size_t total = d * options.shots_per_state;
  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(total, 1)));

  // Fail on missing eps_pi entries before spawning threads.
  for (const auto &step : protocol.measurement)
    if (step.kind == PlanStep::Kind::Pulse) errors.eps(step.transition, false);
  for (const auto &path : protocol.preparation)
    for (const auto &t : path) errors.eps(t, true);

  std::vector<Eigen::MatrixXd> partial(workers, Eigen::MatrixXd::Zero(d, d + 1));
  auto work = [&](unsigned w) {
    const std::size_t begin = total * w / workers, end = total * (w + 1) / workers;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t prepared = i / options.shots_per_state, shot = i % options.shots_per_state;
      SubStream rng(options.seed, shot, static_cast<std::uint32_t>(prepared));
      const auto outcome = interpret(simulate_shot(prepared, protocol, errors, rng), options.mode);
      partial[w](prepared, outcome ? *outcome : d) += 1.0;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto &t : threads) t.join();
  }
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(d, d + 1);
  for (const auto &p : partial) counts += p;
  return ConfusionMatrix(std::move(counts), true, false,
                         std::vector<double>(d, static_cast<double>(options.shots_per_state)));
}

ConfusionMatrix post_select(const ConfusionMatrix &raw) {
  const auto p = raw.to_probabilities();
  const auto d = static_cast<Eigen::Index>(p.d());
  Eigen::MatrixXd kept = p.values().leftCols(d);
  std::vector<double> shots(p.shots());
  for (Eigen::Index r = 0; r < d; ++r) {
    const double keep = kept.row(r).sum();
    if (keep <= 0.0) throw std::domain_error(fmt::format("row {} is entirely Null; post-selection undefined", r));
    kept.row(r) /= keep;
    shots[static_cast<std::size_t>(r)] *= keep;
  }
  return ConfusionMatrix(std::move(kept), false, true, std::move(shots));
}

Estimate average_fidelity(const ConfusionMatrix &matrix) {
  const auto p = matrix.to_probabilities();
  const std::size_t d = p.d();
  double sum = 0.0, var = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double f = p.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    sum += f;
    if (p.shots()[i] > 0.0) var += f * (1.0 - f) / p.shots()[i];
  }
  return {sum / static_cast<double>(d), std::sqrt(var) / static_cast<double>(d)};
}

Estimate average_error(const ConfusionMatrix &matrix) {
  const auto f = average_fidelity(matrix);
  return {1.0 - f.value, f.sigma};
}

std::vector<ScalingRow> scaling_analysis(const std::vector<double> &fidelities, std::size_t d_min, std::size_t d_max) {
  if (d_min < 1 || d_min > d_max) throw std::invalid_argument(fmt::format("invalid dimension range [{}, {}]", d_min, d_max));
  if (d_max > fidelities.size())
    throw std::invalid_argument(fmt::format("dimension {} exceeds the {} measured states", d_max, fidelities.size()));
  std::vector<std::size_t> order(fidelities.size() - 1);
  std::iota(order.begin(), order.end(), std::size_t{1});
  auto best = order, worst = order;
  std::stable_sort(best.begin(), best.end(), [&](auto a, auto b) { return fidelities[a] > fidelities[b]; });
  std::stable_sort(worst.begin(), worst.end(), [&](auto a, auto b) { return fidelities[a] < fidelities[b]; });

  std::vector<ScalingRow> rows;
  for (std::size_t d = d_min; d <= d_max; ++d) {
    double hi = fidelities[0], lo = fidelities[0];
    for (std::size_t k = 0; k + 1 < d; ++k) hi += fidelities[best[k]], lo += fidelities[worst[k]];
    rows.push_back({d, hi / static_cast<double>(d), lo / static_cast<double>(d)});
  }
  return rows;
}

TimingBudget timing_budget(const std::vector<double> &tau_pi, const TimingParams &params, std::size_t prepared) {
  const std::size_t d = tau_pi.size();
  if (d == 0) throw std::invalid_argument("timing budget needs at least one state");
  if (prepared >= d) throw std::out_of_range(fmt::format("prepared state {} outside dimension {}", prepared, d));
  for (std::size_t n = 1; n < d; ++n)
    if (!(tau_pi[n] >= 0.0)) throw std::invalid_argument(fmt::format("pi time of state {} must be non-negative", n));

  TimingBudget b;
  const double pulses = std::accumulate(tau_pi.begin() + 1, tau_pi.end(), 0.0);
  const double loops = static_cast<double>(d - 1);
  b.phases["fluorescence"] = static_cast<double>(d) * params.fluorescence_check;
  b.phases["awg_trigger"] = static_cast<double>(d) * params.awg_trigger;
  b.phases["pi_pulses"] = pulses;
  b.phases["optical_pump"] = loops * params.loop_optical_pump;
  for (const auto &[_, t] : b.phases) b.measurement += t;
  b.preparation = params.cooling + params.optical_pump + (prepared > 0 ? tau_pi[prepared] : 0.0);

  b.check_intervals.push_back(params.awg_trigger);
  for (std::size_t n = 1; n < d; ++n)
    b.check_intervals.push_back(params.fluorescence_check + params.awg_trigger + params.loop_optical_pump + tau_pi[n]);
  return b;
}

ConfusionMatrix read_confusion_csv(const csv::Table &table, double shots_per_row) {
  const auto &h = table.header;
  if (h.size() < 2 || h[0] != "prepared") throw csv::CsvError(table.source + ": first column must be 'prepared'");
  const bool has_null = h.back() == "Null";
  const std::size_t d = h.size() - 1 - (has_null ? 1 : 0);
  for (std::size_t k = 0; k < d; ++k)
    if (h[k + 1] != std::to_string(k))
      throw csv::CsvError(fmt::format("{}: column {} should be '{}', found '{}'", table.source, k + 1, k, h[k + 1]));
  if (table.rows.size() != d)
    throw csv::CsvError(fmt::format("{}: {} outcome columns but {} rows", table.source, d, table.rows.size()));
  Eigen::MatrixXd values(d, h.size() - 1);
  for (std::size_t r = 0; r < d; ++r) {
    if (table.number(r, 0) != static_cast<double>(r))
      throw csv::CsvError(fmt::format("{}: row {} is labelled '{}'", table.source, r, table.rows[r][0]));
    for (std::size_t c = 1; c < h.size(); ++c) values(r, c - 1) = table.number(r, c);
  }
  return ConfusionMatrix(std::move(values), has_null, true, std::vector<double>(d, shots_per_row));
}

void write_csv(std::ostream &out, const ConfusionMatrix &matrix, int precision) {
  out << "prepared";
  for (std::size_t k = 0; k < matrix.d(); ++k) out << ',' << k;
  if (matrix.has_null()) out << ",Null";
  out << '\n';
  for (Eigen::Index r = 0; r < matrix.values().rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < matrix.values().cols(); ++c) {
      const double v = matrix.values()(r, c);
      out << ',' << (matrix.is_probability() ? fmt::format("{:.{}f}", v, precision) : fmt::format("{:.0f}", v));
    }
    out << '\n';
  }
}

void to_json(nlohmann::json &j, const ConfusionMatrix &matrix) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < matrix.values().rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < matrix.values().cols(); ++c) row.push_back(matrix.values()(r, c));
    rows.push_back(std::move(row));
  }
  j = {{"d", matrix.d()},
       {"has_null", matrix.has_null()},
       {"probabilities", matrix.is_probability()},
       {"shots", matrix.shots()},
       {"values", std::move(rows)}};
}

} // namespace quditspam
