#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace aggfolio {

/// Calendar month as a single integer, year * 12 + (month - 1).
class Month {
 public:
  constexpr Month() = default;
  constexpr Month(int year, int month) : index_(year * 12 + (month - 1)) {}

  static constexpr Month from_index(int index) {
    Month m;
    m.index_ = index;
    return m;
  }

  /// Parses `YYYY-MM`; throws Error(Data) on anything else.
  static Month parse(std::string_view text);

  constexpr int index() const { return index_; }
  constexpr int year() const { return index_ >= 0 ? index_ / 12 : -((-index_ + 11) / 12); }
  constexpr int month() const { return index_ - year() * 12 + 1; }

  std::string to_string() const;

  constexpr Month operator+(int months) const { return from_index(index_ + months); }
  constexpr Month operator-(int months) const { return from_index(index_ - months); }
  constexpr int operator-(Month other) const { return index_ - other.index_; }

  constexpr auto operator<=>(const Month&) const = default;

 private:
  int index_ = 0;
};

}  // namespace aggfolio
