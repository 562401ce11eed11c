#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace realsub {

/// Quotes a field when it contains a comma, quote, CR or LF.
std::string csv_escape(std::string_view field);

/// Splits one CSV record (no embedded newlines) into fields.
std::vector<std::string> csv_split(std::string_view line);

}  // namespace realsub
