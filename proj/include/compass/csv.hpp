#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace compass::csv {

/// RFC-4180 reader: `,` delimiter, double-quote escaping, LF or CRLF records.
/// Blank trailing lines are ignored. Throws ParseError on an unterminated quote.
std::vector<std::vector<std::string>> parse(std::string_view text);

std::string escape(std::string_view field);
std::string join_row(const std::vector<std::string>& fields);

} // namespace compass::csv
