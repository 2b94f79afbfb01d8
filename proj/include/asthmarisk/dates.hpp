#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>

namespace asthmarisk {

// Calendar date without time of day. Claims extracts carry no reliable
// timestamps, so everything downstream works in whole days.
class Date {
 public:
  Date() = default;

  static Date from_ymd(int year, unsigned month, unsigned day);
  static Date from_days(std::int32_t days_since_epoch);

  // Strict ISO-8601 "YYYY-MM-DD"; rejects impossible dates like 2014-13-01.
  static std::optional<Date> parse_iso(const std::string& text);

  std::string to_iso() const;

  std::int32_t days_since_epoch() const { return days_; }

  Date plus_days(std::int32_t n) const { return from_days(days_ + n); }
  // Calendar-month shift; day-of-month clamps to the target month's length.
  Date plus_months(int n) const;

  int year() const;
  unsigned month() const;
  unsigned day() const;

  friend std::int32_t operator-(Date a, Date b) { return a.days_ - b.days_; }
  auto operator<=>(const Date&) const = default;

 private:
  explicit Date(std::int32_t d) : days_(d) {}
  std::int32_t days_ = 0;  // days since 1970-01-01
};

// Half-open day interval [start, end): the rule-engine window convention.
struct DateRange {
  Date start;
  Date end;
  bool contains(Date d) const { return start <= d && d < end; }
  std::int32_t length_days() const { return end - start; }
};

// Age in years as exact day difference / 365.25.
double age_years(Date birth, Date as_of);

}  // namespace asthmarisk
