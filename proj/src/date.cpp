#include "medsafe/date.hpp"

#include <cstdio>
#include <stdexcept>

namespace medsafe {

namespace {

int parse_digits(std::string_view text, std::size_t pos, std::size_t count) {
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (text[i] < '0' || text[i] > '9') {
      throw std::invalid_argument("invalid date '" + std::string(text) + "'");
    }
    value = value * 10 + (text[i] - '0');
  }
  return value;
}

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) {
    throw std::invalid_argument("invalid calendar date");
  }
  days_ = static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count());
}

Date Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw std::invalid_argument("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  }
  const int y = parse_digits(text, 0, 4);
  const int m = parse_digits(text, 5, 2);
  const int d = parse_digits(text, 8, 2);
  try {
    return Date{y, static_cast<unsigned>(m), static_cast<unsigned>(d)};
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("invalid date '" + std::string(text) + "'");
  }
}

int Date::year() const {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days_}}};
  return static_cast<int>(ymd.year());
}

std::string Date::iso() const {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days_}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace medsafe
