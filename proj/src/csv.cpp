#include "relx/csv.hpp"

#include <istream>
#include <ostream>

#include "relx/common.hpp"

namespace relx::csv {

std::optional<std::vector<std::string>> read_record(std::istream& in) {
  int c = in.get();
  if (c == EOF) return std::nullopt;

  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  while (true) {
    if (c == EOF) {
      fields.push_back(std::move(field));
      if (quoted) throw DataError("csv: unterminated quoted field");
      return fields;
    }
    const char ch = static_cast<char>(c);
    if (quoted) {
      if (ch == '"') {
        const int peek = in.peek();
        if (peek == '"') {
          in.get();
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"' && field.empty()) {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\r') {
      if (in.peek() == '\n') in.get();
      fields.push_back(std::move(field));
      return fields;
    } else if (ch == '\n') {
      fields.push_back(std::move(field));
      return fields;
    } else {
      field += ch;
    }
    c = in.get();
  }
}

std::string escape_field(const std::string& field) {
  const bool needs_quote = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quote) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_record(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape_field(fields[i]);
  }
  out << '\n';
}

}  // namespace relx::csv
