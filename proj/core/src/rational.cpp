#include "wrnlab/rational.hpp"

#include <cctype>
#include <numeric>

#include "wrnlab/errors.hpp"

namespace wrnlab {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ValidationError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  num_ = g ? num / g : 0;
  den_ = g ? den / g : 1;
}

namespace {

std::int64_t parse_digits(std::string_view digits, std::string_view whole) {
  if (digits.empty() || digits.size() > 15) throw ParseError("expected a number", std::string(whole));
  std::int64_t v = 0;
  for (char c : digits) {
    if (!std::isdigit(static_cast<unsigned char>(c))) throw ParseError("expected a number", std::string(whole));
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace

Rational Rational::parse(std::string_view text) {
  if (text.empty()) throw ParseError("empty number", "");
  if (text.front() == '-') throw ParseError("negative value", std::string(text));
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    const std::int64_t den = parse_digits(text.substr(slash + 1), text);
    if (den == 0) throw ParseError("zero denominator", std::string(text));
    return Rational(parse_digits(text.substr(0, slash), text), den);
  }
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    std::string_view ip = text.substr(0, dot);
    std::string_view fp = text.substr(dot + 1);
    if (fp.empty() || fp.size() > 9) throw ParseError("expected a number", std::string(text));
    std::int64_t den = 1;
    for (std::size_t i = 0; i < fp.size(); ++i) den *= 10;
    const std::int64_t whole = ip.empty() ? 0 : parse_digits(ip, text);
    return Rational(whole * den + parse_digits(fp, text), den);
  }
  return Rational(parse_digits(text, text));
}

std::int64_t Rational::round_half_even() const {
  std::int64_t q = num_ / den_;
  std::int64_t r = num_ % den_;
  if (r < 0) {
    q -= 1;
    r += den_;
  }
  if (2 * r > den_) return q + 1;
  if (2 * r < den_) return q;
  return (q % 2 == 0) ? q : q + 1;
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  std::int64_t d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) d /= 2, ++twos;
  while (d % 5 == 0) d /= 5, ++fives;
  if (d != 1) return std::to_string(num_) + "/" + std::to_string(den_);
  const int places = std::max(twos, fives);
  std::int64_t scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  const std::int64_t scaled = num_ * (scale / den_);
  std::string frac = std::to_string(scaled % scale);
  frac.insert(0, static_cast<std::size_t>(places) - frac.size(), '0');
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  return std::to_string(scaled / scale) + "." + frac;
}

Rational operator*(const Rational& a, const Rational& b) {
  const std::int64_t g1 = std::gcd(a.num_ < 0 ? -a.num_ : a.num_, b.den_);
  const std::int64_t g2 = std::gcd(b.num_ < 0 ? -b.num_ : b.num_, a.den_);
  const std::int64_t n1 = g1 ? a.num_ / g1 : 0, d2 = g1 ? b.den_ / g1 : b.den_;
  const std::int64_t n2 = g2 ? b.num_ / g2 : 0, d1 = g2 ? a.den_ / g2 : a.den_;
  return Rational(n1 * n2, d1 * d2);
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  return a.num_ * b.den_ <=> b.num_ * a.den_;
}

}  // namespace wrnlab
