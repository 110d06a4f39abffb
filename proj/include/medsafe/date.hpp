#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace medsafe {

/// Calendar date at day granularity, stored as days since 1970-01-01.
class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}
  Date(int year, unsigned month, unsigned day);

  /// Parses strict ISO `YYYY-MM-DD`; throws std::invalid_argument otherwise.
  static Date parse(std::string_view text);

  [[nodiscard]] constexpr std::int32_t days() const { return days_; }
  [[nodiscard]] int year() const;
  [[nodiscard]] std::string iso() const;

  constexpr Date operator+(std::int32_t n) const { return Date{days_ + n}; }
  constexpr Date operator-(std::int32_t n) const { return Date{days_ - n}; }
  constexpr std::int32_t operator-(Date other) const { return days_ - other.days_; }
  constexpr Date& operator++() {
    ++days_;
    return *this;
  }

  constexpr auto operator<=>(const Date&) const = default;

 private:
  std::int32_t days_ = 0;
};

/// Inclusive day span; `length()` counts both endpoints.
struct DayInterval {
  Date start;
  Date end;

  [[nodiscard]] constexpr std::int32_t length() const { return end - start + 1; }
  [[nodiscard]] constexpr bool contains(Date d) const { return start <= d && d <= end; }
  constexpr auto operator<=>(const DayInterval&) const = default;
};

}  // namespace medsafe
