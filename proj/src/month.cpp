#include "aggfolio/month.hpp"

#include <charconv>
#include <cstdio>

#include "aggfolio/error.hpp"

namespace aggfolio {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Numerical: return "numerical error";
    case ErrorKind::Capacity: return "capacity error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Invariant: return "invariant violation";
  }
  return "error";
}

Month Month::parse(std::string_view text) {
  auto bad = [&] { fail(ErrorKind::Data, "invalid month '" + std::string(text) + "', expected YYYY-MM"); };
  if (text.size() != 7 || text[4] != '-') bad();
  int year = 0;
  int month = 0;
  auto [p1, e1] = std::from_chars(text.data(), text.data() + 4, year);
  auto [p2, e2] = std::from_chars(text.data() + 5, text.data() + 7, month);
  if (e1 != std::errc{} || e2 != std::errc{} || p1 != text.data() + 4 || p2 != text.data() + 7) bad();
  if (month < 1 || month > 12) bad();
  return Month(year, month);
}

std::string Month::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year(), month());
  return buf;
}

}  // namespace aggfolio
