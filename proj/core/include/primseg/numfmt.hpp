#ifndef PRIMSEG_NUMFMT_HPP_
#define PRIMSEG_NUMFMT_HPP_

#include <optional>
#include <string>
#include <string_view>

namespace primseg {

// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

// Parses the whole of `text` (surrounding blanks allowed) as a finite double.
std::optional<double> parse_double(std::string_view text);

std::optional<long long> parse_integer(std::string_view text);

}  // namespace primseg

#endif  // PRIMSEG_NUMFMT_HPP_
