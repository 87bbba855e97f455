#ifndef FIXSEARCH_CSV_HPP
#define FIXSEARCH_CSV_HPP

#include <sstream>
#include <string>
#include <vector>

#include "fixsearch/common.hpp"

namespace fixsearch::csv {

inline std::string escape_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

/// Row-oriented CSV builder. Doubles are written with round-trip precision so
/// identical runs produce byte-identical files.
class Writer {
 public:
  Writer& field(const std::string& s) {
    if (!first_) line_ += ',';
    line_ += escape_field(s);
    first_ = false;
    return *this;
  }
  Writer& field(double v) { return field(format_double(v)); }
  Writer& field(std::int64_t v) { return field(std::to_string(v)); }
  Writer& field(int v) { return field(std::to_string(v)); }
  Writer& field(std::size_t v) { return field(std::to_string(v)); }

  void end_row() {
    text_ += line_;
    text_ += '\n';
    line_.clear();
    first_ = true;
  }

  const std::string& str() const { return text_; }

 private:
  std::string text_;
  std::string line_;
  bool first_ = true;
};

/// Parses CSV text into rows of fields. Handles quoted fields with embedded
/// commas, quotes, and newlines. Throws ParseError with a row number when a
/// quoted field is left open.
inline std::vector<std::vector<std::string>> parse(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line_no = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        row.push_back(field);
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !row.empty()) {
          row.push_back(field);
          rows.push_back(row);
        }
        row.clear();
        field.clear();
        field_started = false;
        ++line_no;
        break;
      default:
        field += c;
        break;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted CSV field ending at row " + std::to_string(line_no));
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

inline double to_double(const std::string& s, std::size_t row_no) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row_no) + ": not a number: '" + s + "'");
  }
}

}  // namespace fixsearch::csv

#endif  // FIXSEARCH_CSV_HPP
