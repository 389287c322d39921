#include "quditspam/calib.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

#include "quditspam/lsq.hpp"

namespace quditspam {

void FrequencyScan::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto &p = points[i];
    if (!(p.p_dark >= 0.0 && p.p_dark <= 1.0))
      throw std::invalid_argument(fmt::format("scan point {}: probability {} outside [0, 1]", i, p.p_dark));
    if (i > 0 && !(p.frequency > points[i - 1].frequency))
      throw std::invalid_argument(fmt::format("scan point {}: frequencies must increase strictly", i));
  }
}

FrequencyScan read_frequency_scan(const csv::Table &table) {
  const auto f = table.column("freq_kHz"), p = table.column("p_dark"), n = table.column("shots");
  FrequencyScan scan;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    scan.points.push_back({table.number(r, f), table.number(r, p), table.number(r, n)});
  scan.validate();
  return scan;
}

double lorentzian(double f, double center, double width, double amplitude, double offset) {
  const double d = f - center, w2 = width * width;
  return amplitude * w2 / (d * d + w2) + offset;
}

LorentzianFit fit_lorentzian(const FrequencyScan &scan) {
  scan.validate();
  const auto &pts = scan.points;
  if (pts.size() < 5) throw FitError(fmt::format("Lorentzian fit needs at least 5 points, got {}", pts.size()));
  const auto n = static_cast<Eigen::Index>(pts.size());

  std::size_t imax = 0;
  double lo = pts[0].p_dark;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].p_dark > pts[imax].p_dark) imax = i;
    lo = std::min(lo, pts[i].p_dark);
  }
  const double half = 0.5 * (pts[imax].p_dark + lo);
  std::size_t left = imax, right = imax;
  while (left > 0 && pts[left - 1].p_dark > half) --left;
  while (right + 1 < pts.size() && pts[right + 1].p_dark > half) ++right;
  const double spacing = (pts.back().frequency - pts.front().frequency) / static_cast<double>(pts.size() - 1);
  const double w0 = std::max(0.5 * (pts[right].frequency - pts[left].frequency), spacing);

  LeastSquaresProblem problem;
  problem.residual_count = n;
  problem.residuals = [&](const Eigen::VectorXd &q) {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto &p = pts[static_cast<std::size_t>(i)];
      r[i] = lorentzian(p.frequency, q[0], q[1], q[2], q[3]) - p.p_dark;
    }
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd &q) {
    Eigen::MatrixXd J(n, 4);
    const double w = q[1], a = q[2];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = pts[static_cast<std::size_t>(i)].frequency - q[0];
      const double den = d * d + w * w;
      J(i, 0) = 2.0 * a * w * w * d / (den * den);
      J(i, 1) = 2.0 * a * w * d * d / (den * den);
      J(i, 2) = w * w / den;
      J(i, 3) = 1.0;
    }
    return J;
  };
  Eigen::VectorXd start(4);
  start << pts[imax].frequency, w0, pts[imax].p_dark - lo, lo;
  const auto result = solve_least_squares(problem, start);

  LorentzianFit fit;
  fit.center = result.parameters[0];
  fit.width = std::abs(result.parameters[1]);
  fit.amplitude = result.parameters[2];
  fit.offset = result.parameters[3];
  fit.covariance = result.covariance;
  fit.rss = result.rss;
  fit.peak_at_boundary = imax == 0 || imax + 1 == pts.size() || fit.center < pts.front().frequency ||
                         fit.center > pts.back().frequency;
  return fit;
}

std::vector<double> scan_plan(double center, double half_span, double step) {
  if (!(step > 0.0) || !(half_span >= 0.0)) throw std::invalid_argument("scan plan needs step > 0 and span >= 0");
  const auto count = static_cast<long>(std::floor(half_span / step + 1e-9));
  std::vector<double> out;
  for (long k = -count; k <= count; ++k) out.push_back(center + static_cast<double>(k) * step);
  return out;
}

namespace {

// Central-difference sensitivities of many transitions sharing two continuations.
std::map<Transition, double> sensitivities(const EigenSystem &ground, const EigenSystem &excited,
                                           const std::vector<Transition> &transitions, double step = 1e-3) {
  const double b = ground.field();
  if (b - step < 0.0) throw std::invalid_argument("reference selection needs B >= 1 mG");
  const auto gp = continue_to(ground, b + step), gm = continue_to(ground, b - step);
  const auto ep = continue_to(excited, b + step), em = continue_to(excited, b - step);
  std::map<Transition, double> out;
  for (const auto &t : transitions)
    out[t] = (transition_frequency(gp, t.ground, ep, t.excited) - transition_frequency(gm, t.ground, em, t.excited)) /
             (2.0 * step);
  return out;
}

} // namespace

ReferenceSet select_references(const EigenSystem &ground, const EigenSystem &excited, const StrengthTable &table,
                               const std::vector<Transition> &encoded, double threshold,
                               const std::optional<ReferenceSet> &overrides) {
  if (overrides) {
    const auto &r = *overrides;
    if (r.offset == r.low || r.offset == r.up || r.low == r.up)
      throw std::invalid_argument("reference transitions must be distinct");
    return r;
  }
  if (encoded.empty()) throw std::invalid_argument("reference selection needs encoded transitions");
  // Stretched-to-stretched transitions connect pure states, so their frequencies
  // are exactly linear in B.
  auto stretched = [](const std::vector<StateLabel> &labels) {
    int top = 0;
    for (const auto &l : labels) top = std::max(top, l.m.twice());
    std::vector<StateLabel> out;
    for (const auto &l : labels)
      if (std::abs(l.m.twice()) == top) out.push_back(l);
    return out;
  };
  std::vector<Transition> candidates;
  for (const auto &g : stretched(table.ground_states()))
    for (const auto &e : stretched(table.excited_states()))
      if (table.at(g, e) > threshold) candidates.push_back({g, e});
  if (candidates.size() < 2) throw std::invalid_argument("fewer than two stretched reference transitions above threshold");

  std::vector<Transition> all = encoded;
  all.insert(all.end(), candidates.begin(), candidates.end());
  const auto kappa = sensitivities(ground, excited, all);

  ReferenceSet r;
  r.offset = *std::min_element(encoded.begin(), encoded.end(), [&](const auto &a, const auto &b) {
    return std::abs(kappa.at(a)) < std::abs(kappa.at(b));
  });
  auto by_kappa = [&](const auto &a, const auto &b) { return kappa.at(a) < kappa.at(b); };
  r.low = *std::min_element(candidates.begin(), candidates.end(), by_kappa);
  r.up = *std::max_element(candidates.begin(), candidates.end(), by_kappa);
  if (r.offset == r.low || r.offset == r.up)
    throw std::invalid_argument("offset reference coincides with a field-sensitive reference");
  return r;
}

CalibrationSnapshot simulate_snapshot(const ReferenceSet &references, const std::vector<Transition> &encoded,
                                      double field, const LabelingOptions &options) {
  const auto g = diagonalize(LevelConstants::ba137_s12(), field, options);
  const auto d = diagonalize(LevelConstants::ba137_d52(), field, options);
  auto freq = [&](const Transition &t) { return transition_frequency(g, t.ground, d, t.excited); };
  CalibrationSnapshot s;
  s.f_offset = freq(references.offset);
  s.f_low = freq(references.low);
  s.f_up = freq(references.up);
  for (std::size_t i = 0; i < encoded.size(); ++i) s.f[i + 1] = freq(encoded[i]);
  return s;
}

CalibrationModel fit_calibration(const std::vector<CalibrationSnapshot> &history) {
  if (history.size() < 2) throw std::invalid_argument("calibration needs at least 2 snapshots");
  std::map<std::size_t, std::vector<std::pair<double, double>>> samples;
  for (const auto &s : history)
    for (const auto &[n, f] : s.f) samples[n].push_back({s.delta_f(), f - s.f_offset});

  CalibrationModel model;
  for (const auto &[n, xy] : samples) {
    double mx = 0.0, my = 0.0;
    for (const auto &[x, y] : xy) mx += x, my += y;
    const double count = static_cast<double>(xy.size());
    mx /= count, my /= count;
    double sxx = 0.0, sxy = 0.0;
    for (const auto &[x, y] : xy) sxx += (x - mx) * (x - mx), sxy += (x - mx) * (y - my);
    if (xy.size() < 2 || sxx <= 1e-24 * std::max(1.0, mx * mx))
      throw std::invalid_argument(
          fmt::format("calibration of state {} is rank deficient: delta f takes a single value", n));
    CalibrationLine line;
    line.a1 = sxy / sxx;
    line.a2 = my - line.a1 * mx;
    double rss = 0.0;
    for (const auto &[x, y] : xy) rss += std::pow(y - line.a1 * x - line.a2, 2);
    line.residual_rms = std::sqrt(rss / count);
    line.samples = xy.size();
    model.lines[n] = line;
  }
  return model;
}

double predict_frequency(const CalibrationModel &model, double f_offset, double f_low, double f_up, std::size_t n) {
  const auto it = model.lines.find(n);
  if (it == model.lines.end()) throw std::out_of_range(fmt::format("no calibration for state {}", n));
  return it->second.a1 * (f_up - f_low) + f_offset + it->second.a2;
}

namespace {

nlohmann::json transition_json(const Transition &t) { return {{"ground", t.ground.str()}, {"excited", t.excited.str()}}; }

Transition transition_from_json(const nlohmann::json &j) {
  for (const auto &[k, _] : j.items())
    if (k != "ground" && k != "excited") throw std::invalid_argument("unknown transition key '" + k + "'");
  return {StateLabel::parse(j.at("ground").get<std::string>()), StateLabel::parse(j.at("excited").get<std::string>())};
}

void reject_unknown(const nlohmann::json &j, std::initializer_list<const char *> allowed, const std::string &where) {
  for (const auto &[k, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return k == a; }))
      throw std::invalid_argument("unknown key '" + k + "' in " + where);
}

} // namespace

void to_json(nlohmann::json &j, const CalibrationModel &model) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto &[n, l] : model.lines)
    lines.push_back({{"state", n}, {"a1", l.a1}, {"a2", l.a2}, {"residual_rms", l.residual_rms}, {"samples", l.samples}});
  j = {{"lines", lines}};
  if (model.references)
    j["references"] = {{"offset", transition_json(model.references->offset)},
                       {"low", transition_json(model.references->low)},
                       {"up", transition_json(model.references->up)}};
}

void from_json(const nlohmann::json &j, CalibrationModel &model) {
  reject_unknown(j, {"lines", "references"}, "calibration model");
  model = {};
  for (const auto &l : j.at("lines")) {
    reject_unknown(l, {"state", "a1", "a2", "residual_rms", "samples"}, "calibration line");
    CalibrationLine line;
    line.a1 = l.at("a1").get<double>();
    line.a2 = l.at("a2").get<double>();
    line.residual_rms = l.value("residual_rms", 0.0);
    line.samples = l.value("samples", std::size_t{0});
    model.lines[l.at("state").get<std::size_t>()] = line;
  }
  if (j.contains("references")) {
    const auto &r = j.at("references");
    reject_unknown(r, {"offset", "low", "up"}, "calibration references");
    model.references = ReferenceSet{transition_from_json(r.at("offset")), transition_from_json(r.at("low")),
                                    transition_from_json(r.at("up"))};
  }
}

namespace {

struct FieldObjective {
  std::vector<Transition> transitions;
  Eigen::VectorXd measured;

  // Residuals after removing the least-squares common offset.
  Eigen::VectorXd residuals(const EigenSystem &g, const EigenSystem &d) const {
    Eigen::VectorXd r(measured.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const auto &t = transitions[static_cast<std::size_t>(i)];
      r[i] = measured[i] - transition_frequency(g, t.ground, d, t.excited);
    }
    return r.array() - r.mean();
  }
};

struct Refined {
  double field;
  double rss;
};

Refined golden_section(const std::function<double(double)> &f, double a, double b, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d, d = c, fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

} // namespace

FieldEstimate estimate_field(const std::map<Transition, double> &measured, const FieldSearchOptions &options) {
  if (measured.size() < 2) throw std::invalid_argument("field estimation needs at least 2 transitions");
  if (!(options.lower >= 0.0) || !(options.upper > options.lower) || options.grid_points < 3)
    throw std::invalid_argument("field search needs 0 <= lower < upper and at least 3 grid points");

  FieldObjective obj;
  obj.measured.resize(static_cast<Eigen::Index>(measured.size()));
  for (const auto &[t, f] : measured) {
    obj.measured[static_cast<Eigen::Index>(obj.transitions.size())] = f;
    obj.transitions.push_back(t);
  }

  std::vector<double> grid(options.grid_points);
  for (std::size_t k = 0; k < grid.size(); ++k)
    grid[k] = options.lower + (options.upper - options.lower) * static_cast<double>(k) /
                                  static_cast<double>(grid.size() - 1);
  const auto gs = diagonalize_scan(LevelConstants::ba137_s12(), grid, options.labeling);
  const auto ds = diagonalize_scan(LevelConstants::ba137_d52(), grid, options.labeling);

  std::vector<double> rss(grid.size());
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(obj.measured.size(), INFINITY);
  Eigen::VectorXd hi = -lo;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto r = obj.residuals(gs[k], ds[k]);
    rss[k] = r.squaredNorm();
    lo = lo.cwiseMin(r), hi = hi.cwiseMax(r);
  }
  if ((hi - lo).maxCoeff() < 1e-9)
    throw std::invalid_argument("transitions share one field sensitivity; the field is unconstrained");

  auto refine = [&](std::size_t k) {
    const std::size_t a = k == 0 ? 0 : k - 1, b = std::min(k + 1, grid.size() - 1);
    auto f = [&](double field) {
      return obj.residuals(continue_to(gs[k], field, options.labeling), continue_to(ds[k], field, options.labeling))
          .squaredNorm();
    };
    return golden_section(f, grid[a], grid[b], options.tolerance);
  };

  std::vector<std::size_t> minima;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const bool left_ok = k == 0 || rss[k] <= rss[k - 1];
    const bool right_ok = k + 1 == grid.size() || rss[k] <= rss[k + 1];
    if (left_ok && right_ok) minima.push_back(k);
  }
  std::vector<Refined> refined;
  for (auto k : minima) refined.push_back(refine(k));
  const auto best = std::min_element(refined.begin(), refined.end(),
                                     [](const auto &a, const auto &b) { return a.rss < b.rss; });

  FieldEstimate est;
  est.field = best->field;
  est.rss = best->rss;
  const double spacing = grid[1] - grid[0];
  for (const auto &r : refined) {
    if (std::abs(r.field - best->field) <= 1.5 * spacing) continue;
    if (r.rss <= best->rss * (1.0 + options.ambiguity) + 1e-12) {
      est.unique = false;
      est.alternatives.push_back(r.field);
    }
  }
  const std::size_t k = static_cast<std::size_t>(std::distance(refined.begin(), best));
  const auto r = obj.residuals(continue_to(gs[minima[k]], est.field, options.labeling),
                               continue_to(ds[minima[k]], est.field, options.labeling));
  for (std::size_t i = 0; i < obj.transitions.size(); ++i)
    est.residuals[obj.transitions[i]] = r[static_cast<Eigen::Index>(i)];
  return est;
}

void RabiTrace::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto &p = points[i];
    if (!(p.time >= 0.0)) throw std::invalid_argument(fmt::format("Rabi point {}: negative time", i));
    if (i > 0 && !(p.time > points[i - 1].time))
      throw std::invalid_argument(fmt::format("Rabi point {}: times must increase strictly", i));
    if (!(p.p >= 0.0 && p.p <= 1.0))
      throw std::invalid_argument(fmt::format("Rabi point {}: probability {} outside [0, 1]", i, p.p));
  }
}

RabiTrace read_rabi_trace(const csv::Table &table) {
  const auto t = table.column("t_us"), p = table.column("p_transition"), n = table.column("shots");
  RabiTrace trace;
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    trace.points.push_back({table.number(r, t), table.number(r, p), table.number(r, n)});
  trace.validate();
  return trace;
}

double rabi_model(double t, double A, double C, double t_peak, double t_scale) {
  const double c = std::cos(std::numbers::pi * (t - t_peak) / (2.0 * t_scale));
  return A * c * c + C;
}

namespace {

struct Sin2OverS {
  double value;
  double d_dx;
  double d_ds;
};

// sin^2(sqrt(s) x) / s, analytic in s (sinh form for s < 0, series near 0).
Sin2OverS sin2_over_s(double s, double x) {
  const double x2 = x * x, u = s * x2;
  if (std::abs(u) < 1e-4)
    return {x2 * (1.0 - u / 3.0 + 2.0 * u * u / 45.0), 2.0 * x * (1.0 - 2.0 * u / 3.0 + 2.0 * u * u / 15.0),
            x2 * x2 * (-1.0 / 3.0 + 4.0 * u / 45.0)};
  if (s > 0.0) {
    const double r = std::sqrt(s), y = r * x, sy = std::sin(y);
    return {sy * sy / s, std::sin(2.0 * y) / r, std::sin(2.0 * y) * x / (2.0 * r * s) - sy * sy / (s * s)};
  }
  const double a = -s, r = std::sqrt(a), z = r * x, sz = std::sinh(z);
  return {sz * sz / a, std::sinh(2.0 * z) / r, -std::sinh(2.0 * z) * x / (2.0 * r * a) + sz * sz / (a * a)};
}

} // namespace

RabiFit fit_rabi_flop(const RabiTrace &trace, const RabiFitOptions &options) {
  trace.validate();
  const auto &pts = trace.points;
  const std::size_t n = pts.size();
  if (n < 3) throw FitError("Rabi trace too short to locate a peak");

  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!options.smooth) {
      s[i] = pts[i].p;
      continue;
    }
    const std::size_t a = i == 0 ? 0 : i - 1, b = std::min(i + 1, n - 1);
    double sum = 0.0;
    for (std::size_t k = a; k <= b; ++k) sum += pts[k].p;
    s[i] = sum / static_cast<double>(b - a + 1);
  }

  // First peak: running maximum that rose by at least half the trace range and
  // then falls halfway back to the preceding low.
  const auto [smin, smax] = std::minmax_element(s.begin(), s.end());
  const double range = *smax - *smin;
  if (!(range > 0.0)) throw FitError("Rabi trace is flat");
  std::size_t imax = 0;
  double seen_min = s[0], low = s[0];
  bool fell = false;
  for (std::size_t i = 1; i < n; ++i) {
    seen_min = std::min(seen_min, s[i]);
    if (s[i] > s[imax]) {
      imax = i;
      low = seen_min;
    } else if (s[imax] - low >= 0.5 * range && s[i] < s[imax] - 0.5 * (s[imax] - low)) {
      fell = true;
      break;
    }
  }
  if (imax == 0 || (!fell && imax + 1 == n)) throw FitError("no identifiable first Rabi peak in trace");

  const double t0 = pts.front().time, tp = pts[imax].time;
  RabiFit fit;
  fit.t_peak_raw = tp;
  fit.window_lo = t0 + 0.5 * (tp - t0);
  fit.window_hi = t0 + 1.5 * (tp - t0);
  const double slack = 1e-9 * std::max(1.0, std::abs(fit.window_hi));
  std::vector<RabiPoint> window;
  for (const auto &p : pts)
    if (p.time >= fit.window_lo - slack && p.time <= fit.window_hi + slack) window.push_back(p);
  if (window.size() < options.min_points)
    throw FitError(fmt::format("Rabi fit window [{}, {}] holds {} points, need {}", fit.window_lo, fit.window_hi,
                               window.size(), options.min_points));

  // Fitted as p = P - c2 sin^2(sqrt(s) dt) / s, the same curve with A = c2 / s,
  // C = P - A and t_scale = pi / (2 sqrt(s)). The form stays finite as s -> 0
  // (a parabola), which a noisy window near the peak can otherwise chase to infinity.
  const auto m = static_cast<Eigen::Index>(window.size());
  constexpr double pi = std::numbers::pi;
  LeastSquaresProblem problem;
  problem.residual_count = m;
  problem.residuals = [&](const Eigen::VectorXd &q) {
    Eigen::VectorXd r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto &p = window[static_cast<std::size_t>(i)];
      r[i] = q[0] - q[1] * sin2_over_s(q[3], p.time - q[2]).value - p.p;
    }
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd &q) {
    Eigen::MatrixXd J(m, 4);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto f = sin2_over_s(q[3], window[static_cast<std::size_t>(i)].time - q[2]);
      J(i, 0) = 1.0;
      J(i, 1) = -f.value;
      J(i, 2) = q[1] * f.d_dx;
      J(i, 3) = -q[1] * f.d_ds;
    }
    return J;
  };
  const double c0 = *std::min_element(s.begin(), s.begin() + static_cast<long>(imax) + 1);
  const double k0 = pi / (2.0 * (tp - t0));
  Eigen::VectorXd start(4);
  start << s[imax], (s[imax] - c0) * k0 * k0, tp, k0 * k0;
  const auto result = solve_least_squares(problem, start);
  const auto &q = result.parameters;

  fit.eps_pi = 1.0 - q[0];
  fit.eps_pi_sigma = std::sqrt(result.covariance(0, 0));
  fit.t_peak = q[2];
  fit.points_used = window.size();
  fit.rss = result.rss;
  fit.shape_resolved = q[3] > 0.0;
  if (fit.shape_resolved) {
    fit.A = q[1] / q[3];
    fit.C = q[0] - fit.A;
    fit.t_scale = pi / (2.0 * std::sqrt(q[3]));
    // (P, c2, t_peak, s) -> (A, C, t_peak, t_scale)
    Eigen::Matrix4d G = Eigen::Matrix4d::Zero();
    G(0, 1) = 1.0 / q[3];
    G(0, 3) = -q[1] / (q[3] * q[3]);
    G.row(1) = -G.row(0);
    G(1, 0) = 1.0;
    G(2, 2) = 1.0;
    G(3, 3) = -pi / (4.0 * q[3] * std::sqrt(q[3]));
    fit.covariance = G * result.covariance * G.transpose();
  } else {
    fit.A = fit.C = fit.t_scale = std::numeric_limits<double>::quiet_NaN();
    fit.covariance.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return fit;
}

int transition_q(const Transition &t) { return (t.excited.m - t.ground.m).twice() / 2; }

double strength_ratio(const StrengthTable &table, const Transition &target, const Transition &anchor) {
  if (transition_q(target) != transition_q(anchor))
    throw std::invalid_argument(fmt::format("cross-q ratio refused: {} (q={}) vs anchor {} (q={})", target.str(),
                                            transition_q(target), anchor.str(), transition_q(anchor)));
  const double k_anchor = table.at(anchor.ground, anchor.excited);
  if (!(k_anchor > 0.0)) throw std::invalid_argument("anchor " + anchor.str() + " has zero strength");
  return table.at(target.ground, target.excited) / k_anchor;
}

std::map<Transition, PiCalibration> ratio_pi_calibration(const std::map<int, RabiAnchor> &anchors,
                                                         const StrengthTable &table,
                                                         const std::vector<Transition> &targets) {
  for (const auto &[q, a] : anchors)
    if (transition_q(a.transition) != q)
      throw std::invalid_argument(
          fmt::format("anchor {} has q={}, filed under q={}", a.transition.str(), transition_q(a.transition), q));
  std::map<Transition, PiCalibration> out;
  for (const auto &t : targets) {
    const auto it = anchors.find(transition_q(t));
    if (it == anchors.end()) throw std::invalid_argument(fmt::format("no anchor for q={} ({})", transition_q(t), t.str()));
    const double omega = strength_ratio(table, t, it->second.transition) * it->second.omega;
    out[t] = {omega, omega > 0.0 ? std::numbers::pi / omega : INFINITY};
  }
  return out;
}

double detuned_rabi(double omega, double delta) { return std::hypot(omega, delta); }

} // namespace quditspam
