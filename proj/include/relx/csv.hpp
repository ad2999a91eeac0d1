#ifndef RELX_CSV_HPP
#define RELX_CSV_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace relx::csv {

// RFC 4180 record reader/writer. Records may span physical lines when a
// quoted field contains a newline. UTF-8 passes through untouched.

// Reads the next record; nullopt at end of stream.
std::optional<std::vector<std::string>> read_record(std::istream& in);

std::string escape_field(const std::string& field);
void write_record(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace relx::csv

#endif  // RELX_CSV_HPP
