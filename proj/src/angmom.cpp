#include "quditspam/angmom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace quditspam {

std::string HalfInt::str() const {
  if (is_integer()) return std::to_string(twice_ / 2);
  return std::to_string(twice_) + "/2";
}

HalfInt HalfInt::parse(const std::string &text) {
  auto fail = [&] { throw std::invalid_argument("not a half-integer: '" + text + "'"); };
  if (text.empty()) fail();
  std::size_t used = 0;
  int numerator = 0;
  try {
    numerator = std::stoi(text, &used);
  } catch (const std::exception &) {
    fail();
  }
  if (used == text.size()) return HalfInt(numerator);
  if (text.substr(used) != "/2") fail();
  if (numerator % 2 == 0) return HalfInt(numerator / 2);
  return from_twice(numerator);
}

bool triangle(HalfInt j1, HalfInt j2, HalfInt j3) {
  if ((j1.twice() + j2.twice() + j3.twice()) % 2 != 0) return false;
  return j3.twice() >= std::abs(j1.twice() - j2.twice()) && j3.twice() <= j1.twice() + j2.twice();
}

namespace {

// Integers are carried as prime-exponent vectors so factorial ratios stay exact.
constexpr std::array<int, 13> kPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41};
using Exponents = std::array<int, kPrimes.size()>;
constexpr int kMaxFactorial = 42;

Exponents factorial_exponents(int n) {
  if (n < 0 || n >= kMaxFactorial) throw std::out_of_range("factorial argument out of range");
  Exponents e{};
  for (std::size_t i = 0; i < kPrimes.size(); ++i) {
    for (int pk = kPrimes[i]; pk <= n; pk *= kPrimes[i]) e[i] += n / pk;
  }
  return e;
}

void accumulate(Exponents &into, const Exponents &e, int sign) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += sign * e[i];
}

__int128 to_integer(const Exponents &e) {
  __int128 value = 1;
  constexpr __int128 kLimit = static_cast<__int128>(1) << 120;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] < 0) throw std::logic_error("negative exponent in integer conversion");
    for (int k = 0; k < e[i]; ++k) {
      value *= kPrimes[i];
      if (value > kLimit) throw std::overflow_error("angular-momentum sum exceeds exact range");
    }
  }
  return value;
}

// Twice-valued arguments. Returns false if any |m| > j or parity mismatch.
bool projection_ok(int tj, int tm) { return std::abs(tm) <= tj && (tj - tm) % 2 == 0; }

} // namespace

double wigner3j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt m1, HalfInt m2, HalfInt m3) {
  const int tj1 = j1.twice(), tj2 = j2.twice(), tj3 = j3.twice();
  const int tm1 = m1.twice(), tm2 = m2.twice(), tm3 = m3.twice();
  if (tj1 < 0 || tj2 < 0 || tj3 < 0) return 0.0;
  if (tm1 + tm2 + tm3 != 0) return 0.0;
  if (!projection_ok(tj1, tm1) || !projection_ok(tj2, tm2) || !projection_ok(tj3, tm3)) return 0.0;
  if (!triangle(j1, j2, j3)) return 0.0;
  if (std::max({tj1, tj2, tj3}) > kMaxTwiceJ)
    throw std::out_of_range("angular momentum beyond supported range");

  // Integer combinations appearing in the Racah formula.
  const int a = (tj1 + tj2 - tj3) / 2;
  const int b = (tj1 - tj2 + tj3) / 2;
  const int c = (-tj1 + tj2 + tj3) / 2;
  const int total = (tj1 + tj2 + tj3) / 2;

  // Square of the prefactor: Delta(j1 j2 j3) * prod (j +- m)!.
  Exponents prefactor{};
  accumulate(prefactor, factorial_exponents(a), +1);
  accumulate(prefactor, factorial_exponents(b), +1);
  accumulate(prefactor, factorial_exponents(c), +1);
  accumulate(prefactor, factorial_exponents(total + 1), -1);
  for (auto [tj, tm] : {std::pair{tj1, tm1}, std::pair{tj2, tm2}, std::pair{tj3, tm3}}) {
    accumulate(prefactor, factorial_exponents((tj + tm) / 2), +1);
    accumulate(prefactor, factorial_exponents((tj - tm) / 2), +1);
  }

  const int t1 = (tj3 - tj2 + tm1) / 2; // j3 - j2 + m1
  const int t2 = (tj3 - tj1 - tm2) / 2; // j3 - j1 - m2
  const int t3 = a;                     // j1 + j2 - j3
  const int t4 = (tj1 - tm1) / 2;       // j1 - m1
  const int t5 = (tj2 + tm2) / 2;       // j2 + m2
  const int kmin = std::max({0, -t1, -t2});
  const int kmax = std::min({t3, t4, t5});

  std::vector<Exponents> denominators;
  for (int k = kmin; k <= kmax; ++k) {
    Exponents d{};
    for (int n : {k, t1 + k, t2 + k, t3 - k, t4 - k, t5 - k}) accumulate(d, factorial_exponents(n), +1);
    denominators.push_back(d);
  }
  if (denominators.empty()) return 0.0;

  Exponents common{};
  for (const auto &d : denominators)
    for (std::size_t i = 0; i < common.size(); ++i) common[i] = std::max(common[i], d[i]);

  __int128 numerator = 0;
  for (std::size_t idx = 0; idx < denominators.size(); ++idx) {
    Exponents ratio = common;
    accumulate(ratio, denominators[idx], -1);
    const __int128 term = to_integer(ratio);
    numerator += ((kmin + static_cast<int>(idx)) % 2 == 0) ? term : -term;
  }
  if (numerator == 0) return 0.0;

  // value = phase * numerator * sqrt(prefactor) / common
  //       = phase * numerator * sqrt(prefactor / common^2)
  Exponents radicand = prefactor;
  accumulate(radicand, common, -2);
  long double num = 1.0L, den = 1.0L;
  for (std::size_t i = 0; i < radicand.size(); ++i) {
    const long double p = kPrimes[i];
    for (int k = 0; k < std::abs(radicand[i]); ++k) (radicand[i] > 0 ? num : den) *= p;
  }
  const long double magnitude = static_cast<long double>(numerator < 0 ? -numerator : numerator) *
                                std::sqrt(num) / std::sqrt(den);
  const int phase_exponent = (tj1 - tj2 - tm3) / 2;
  const bool negative = (numerator < 0) != (std::abs(phase_exponent) % 2 == 1);
  return static_cast<double>(negative ? -magnitude : magnitude);
}

double clebsch_gordan(HalfInt j1, HalfInt m1, HalfInt j2, HalfInt m2, HalfInt J, HalfInt M) {
  if (m1 + m2 != M) return 0.0;
  const double threej = wigner3j(j1, j2, J, m1, m2, -M);
  if (threej == 0.0) return 0.0;
  const int phase_exponent = (j1.twice() - j2.twice() + M.twice()) / 2;
  const double phase = (std::abs(phase_exponent) % 2 == 0) ? 1.0 : -1.0;
  return phase * std::sqrt(static_cast<double>(J.twice() + 1)) * threej;
}

} // namespace quditspam
