#pragma once
// Exact outcome distribution of the shelve/de-shelve protocol for a
// ground-plus-metastable encoding where every pulse couples |0> and |n>.
// Enumerates every branch instead of sampling.

#include <map>
#include <tuple>
#include <vector>

namespace oracle {

struct SpamParams {
  std::size_t d = 2;
  std::vector<double> eps;      // eps[n] for the 0 <-> n pulse, n >= 1
  std::vector<double> eps_prep; // empty: same as eps
  double prep_error = 0.0;
  double p_dark_given_bright = 0.0;
  double p_bright_given_dark = 0.0;
  std::vector<double> decay; // per-check decay probability of a dark ion; empty = none
};

// Returns rows[prepared][outcome], outcome d = Null.
inline std::vector<std::vector<double>> enumerate_spam(const SpamParams &p, bool strict) {
  constexpr int kOther = -1; // unaddressed bright ground state
  // key: (atomic state, first bright read or -1, seen two bright reads)
  using Key = std::tuple<int, int, bool>;
  std::vector<std::vector<double>> rows(p.d, std::vector<double>(p.d + 1, 0.0));

  auto pulse = [](std::map<Key, double> &dist, std::size_t n, double e) {
    std::map<Key, double> next;
    for (const auto &[k, w] : dist) {
      const auto [s, first, multi] = k;
      if (s == 0) {
        next[{static_cast<int>(n), first, multi}] += w * (1 - e);
        next[{0, first, multi}] += w * e;
      } else if (s == static_cast<int>(n)) {
        next[{0, first, multi}] += w * (1 - e);
        next[{s, first, multi}] += w * e;
      } else {
        next[k] += w;
      }
    }
    dist.swap(next);
  };
  auto check = [&](std::map<Key, double> &dist, std::size_t i) {
    std::map<Key, double> next;
    const double q = p.decay.empty() ? 0.0 : p.decay[i];
    for (const auto &[k, w] : dist) {
      const auto [s, first, multi] = k;
      std::vector<std::pair<int, double>> after;
      if (s >= 1) {
        after = {{s, 1 - q}, {kOther, q}};
      } else {
        after = {{s, 1.0}};
      }
      for (const auto &[s2, w2] : after) {
        const bool bright = (s2 <= 0);
        const double p_read_bright = bright ? 1 - p.p_dark_given_bright : p.p_bright_given_dark;
        next[{s2, first, multi}] += w * w2 * (1 - p_read_bright);
        const int f2 = first < 0 ? static_cast<int>(i) : first;
        next[{s2, f2, multi || first >= 0}] += w * w2 * p_read_bright;
      }
    }
    dist.swap(next);
  };

  for (std::size_t prepared = 0; prepared < p.d; ++prepared) {
    std::map<Key, double> dist{{{0, -1, false}, 1 - p.prep_error}, {{kOther, -1, false}, p.prep_error}};
    if (prepared > 0) pulse(dist, prepared, p.eps_prep.empty() ? p.eps[prepared] : p.eps_prep[prepared]);
    check(dist, 0);
    for (std::size_t n = 1; n < p.d; ++n) {
      pulse(dist, n, p.eps[n]);
      check(dist, n);
    }
    for (const auto &[k, w] : dist) {
      const auto [s, first, multi] = k;
      const bool null = first < 0 || (strict && multi);
      rows[prepared][null ? p.d : static_cast<std::size_t>(first)] += w;
    }
  }
  return rows;
}

} // namespace oracle
