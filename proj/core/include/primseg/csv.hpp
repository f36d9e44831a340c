#ifndef PRIMSEG_CSV_HPP_
#define PRIMSEG_CSV_HPP_

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace primseg::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes;
// records spanning lines are not supported.
std::vector<std::string> split_line(std::string_view line);

// Quotes the field if it contains a comma, quote, or leading/trailing blank.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

struct Row {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

struct Document {
  std::vector<std::string> header;
  std::vector<Row> rows;
};

// Reads a header and all non-blank records. Throws ParseError naming `source`
// and the line when the input is empty or a record has the wrong field count.
Document read(std::istream& in, const std::string& source);

}  // namespace primseg::csv

#endif  // PRIMSEG_CSV_HPP_
