#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace routoo {

/// Signed fixed-point decimal with 12 fractional digits. A price with at most
/// six decimals per million tokens times an integer token count is exact.
class Decimal {
 public:
  static constexpr int kFractionDigits = 12;
  static constexpr std::int64_t kScale = 1'000'000'000'000;

  constexpr Decimal() = default;

  static constexpr Decimal from_units(std::int64_t units) {
    Decimal d;
    d.units_ = units;
    return d;
  }

  static Decimal from_integer(std::int64_t value) {
    std::int64_t units = 0;
    if (__builtin_mul_overflow(value, kScale, &units)) {
      throw std::overflow_error("decimal overflow: " + std::to_string(value));
    }
    return from_units(units);
  }

  static constexpr Decimal max() { return from_units(std::numeric_limits<std::int64_t>::max()); }

  /// Parses "[-]digits[.digits]". More than 12 fractional digits is an error
  /// unless the excess digits are zeros.
  static Decimal parse(std::string_view text) {
    const std::string original(text);
    if (text.empty()) throw std::invalid_argument("empty decimal");
    bool negative = false;
    if (text.front() == '-' || text.front() == '+') {
      negative = text.front() == '-';
      text.remove_prefix(1);
    }
    const auto dot = text.find('.');
    std::string_view whole = text.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    if (whole.empty() && frac.empty()) throw std::invalid_argument("malformed decimal '" + original + "'");
    if (dot != std::string_view::npos && frac.empty()) {
      throw std::invalid_argument("malformed decimal '" + original + "'");
    }

    __int128 units = 0;
    for (char ch : whole) {
      if (ch < '0' || ch > '9') throw std::invalid_argument("malformed decimal '" + original + "'");
      units = units * 10 + (ch - '0');
      if (units > std::numeric_limits<std::int64_t>::max()) {
        throw std::overflow_error("decimal overflow '" + original + "'");
      }
    }
    units *= kScale;
    __int128 place = kScale;
    for (char ch : frac) {
      if (ch < '0' || ch > '9') throw std::invalid_argument("malformed decimal '" + original + "'");
      place /= 10;
      if (place == 0) {
        if (ch != '0') throw std::invalid_argument("too many fractional digits in '" + original + "'");
        continue;
      }
      units += place * (ch - '0');
    }
    if (units > std::numeric_limits<std::int64_t>::max()) {
      throw std::overflow_error("decimal overflow '" + original + "'");
    }
    const auto signed_units = static_cast<std::int64_t>(units);
    return from_units(negative ? -signed_units : signed_units);
  }

  constexpr std::int64_t units() const { return units_; }
  double to_double() const { return static_cast<double>(units_) / static_cast<double>(kScale); }
  constexpr bool is_zero() const { return units_ == 0; }
  constexpr bool is_negative() const { return units_ < 0; }
  constexpr bool is_positive() const { return units_ > 0; }

  /// Shortest exact rendering: no trailing fractional zeros, no exponent.
  std::string to_string() const {
    std::string out;
    unsigned __int128 magnitude = units_ < 0 ? static_cast<unsigned __int128>(-static_cast<__int128>(units_))
                                             : static_cast<unsigned __int128>(units_);
    if (units_ < 0) out.push_back('-');
    const auto whole = static_cast<std::uint64_t>(magnitude / kScale);
    auto frac = static_cast<std::uint64_t>(magnitude % kScale);
    out += std::to_string(whole);
    if (frac != 0) {
      std::string digits = std::to_string(frac);
      digits.insert(0, static_cast<std::size_t>(kFractionDigits) - digits.size(), '0');
      while (!digits.empty() && digits.back() == '0') digits.pop_back();
      out.push_back('.');
      out += digits;
    }
    return out;
  }

  /// Round half away from zero to `digits` fractional digits.
  Decimal rounded(int digits) const {
    if (digits >= kFractionDigits) return *this;
    std::int64_t step = 1;
    for (int i = digits; i < kFractionDigits; ++i) step *= 10;
    const std::int64_t rem = units_ % step;
    std::int64_t base = units_ - rem;
    if (2 * (rem < 0 ? -rem : rem) >= step) base += units_ < 0 ? -step : step;
    return from_units(base);
  }

  friend Decimal operator+(Decimal a, Decimal b) {
    std::int64_t out = 0;
    if (__builtin_add_overflow(a.units_, b.units_, &out)) throw std::overflow_error("decimal overflow in +");
    return from_units(out);
  }
  friend Decimal operator-(Decimal a, Decimal b) {
    std::int64_t out = 0;
    if (__builtin_sub_overflow(a.units_, b.units_, &out)) throw std::overflow_error("decimal overflow in -");
    return from_units(out);
  }
  friend Decimal operator*(Decimal a, std::int64_t k) {
    std::int64_t out = 0;
    if (__builtin_mul_overflow(a.units_, k, &out)) throw std::overflow_error("decimal overflow in *");
    return from_units(out);
  }
  Decimal& operator+=(Decimal other) { return *this = *this + other; }
  Decimal& operator-=(Decimal other) { return *this = *this - other; }

  friend constexpr auto operator<=>(Decimal, Decimal) = default;
  friend constexpr bool operator==(Decimal, Decimal) = default;

 private:
  std::int64_t units_ = 0;
};

/// Exact quotient `value * numerator / denominator`, rounded half away from
/// zero to the 12-digit grid.
inline Decimal scale_ratio(Decimal value, std::int64_t numerator, std::int64_t denominator) {
  if (denominator <= 0) throw std::invalid_argument("scale_ratio: denominator must be positive");
  const __int128 product = static_cast<__int128>(value.units()) * numerator;
  __int128 q = product / denominator;
  const __int128 r = product % denominator;
  if (2 * (r < 0 ? -r : r) >= denominator) q += product < 0 ? -1 : 1;
  if (q > std::numeric_limits<std::int64_t>::max() || q < std::numeric_limits<std::int64_t>::min()) {
    throw std::overflow_error("decimal overflow in scale_ratio");
  }
  return Decimal::from_units(static_cast<std::int64_t>(q));
}

}  // namespace routoo
