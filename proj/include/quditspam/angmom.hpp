#pragma once
// Angular-momentum coupling coefficients.
//
// Phase convention: Condon-Shortley. Coefficients are evaluated from the Racah
// sum with exact integer arithmetic; only the final square root is inexact.
// Supported range: every j (including the coupled total) up to 9, which
// covers all couplings built from momenta up to 9/2.

#include <compare>
#include <cstdint>
#include <string>

namespace quditspam {

/// Integer or half-integer quantum number, stored as twice its value.
class HalfInt {
public:
  constexpr HalfInt() = default;
  constexpr HalfInt(int whole) : twice_(2 * whole) {}

  static constexpr HalfInt from_twice(int twice) {
    HalfInt h;
    h.twice_ = twice;
    return h;
  }
  /// n/2, e.g. HalfInt::half(5) == 5/2.
  static constexpr HalfInt half(int numerator) { return from_twice(numerator); }

  constexpr int twice() const { return twice_; }
  constexpr double value() const { return 0.5 * twice_; }
  constexpr bool is_integer() const { return twice_ % 2 == 0; }

  constexpr HalfInt operator-() const { return from_twice(-twice_); }
  constexpr HalfInt operator+(HalfInt o) const { return from_twice(twice_ + o.twice_); }
  constexpr HalfInt operator-(HalfInt o) const { return from_twice(twice_ - o.twice_); }
  constexpr HalfInt &operator+=(HalfInt o) {
    twice_ += o.twice_;
    return *this;
  }
  constexpr HalfInt &operator-=(HalfInt o) {
    twice_ -= o.twice_;
    return *this;
  }

  constexpr auto operator<=>(const HalfInt &) const = default;

  /// "5/2", "-1/2", "3".
  std::string str() const;
  /// Accepts "5/2", "-3/2", "2", "-1".
  static HalfInt parse(const std::string &text);

private:
  int twice_ = 0;
};

/// Largest j accepted by the coupling routines (as twice the value).
inline constexpr int kMaxTwiceJ = 18;

/// <j1 m1; j2 m2 | J M>. Returns 0 for any selection-rule violation
/// (m1 + m2 != M, triangle failure, |m| > j, mixed integer/half-integer).
double clebsch_gordan(HalfInt j1, HalfInt m1, HalfInt j2, HalfInt m2, HalfInt J, HalfInt M);

/// Wigner 3j symbol (j1 j2 j3; m1 m2 m3).
double wigner3j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt m1, HalfInt m2, HalfInt m3);

/// True when |j1 - j2| <= j3 <= j1 + j2 and j1 + j2 + j3 is an integer.
bool triangle(HalfInt j1, HalfInt j2, HalfInt j3);

} // namespace quditspam
