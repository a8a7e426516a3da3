#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace wrnlab {

// Exact non-negative rational used for width multipliers and the gamma
// scaling ratio, so that channel rounding never depends on binary floating
// point ("2.5" * 16 is exactly 40).
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  // Accepts "10", "2.5", "0.25", "1/4". Throws ParseError naming the text.
  static Rational parse(std::string_view text);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
  bool is_zero() const noexcept { return num_ == 0; }

  // Nearest integer with ties to even.
  std::int64_t round_half_even() const;

  // Shortest decimal form when one exists ("2.5"), otherwise "p/q".
  std::string str() const;

  friend Rational operator*(const Rational& a, const Rational& b);
  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace wrnlab
