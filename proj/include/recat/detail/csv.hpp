#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "recat/error.hpp"

namespace recat::detail {

struct CsvRow {
  std::size_t line = 0;  // 1-based physical line of the row start
  std::vector<std::string> fields;
};

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n')) --e;
  return std::string(s.substr(b, e - b));
}

// RFC 4180 style: quoted fields may contain separators, doubled quotes and
// newlines. Blank lines are skipped.
inline std::vector<CsvRow> parse_csv(std::string_view text, const std::string& source = "<csv>") {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  row.line = 1;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.fields.size() == 1 && row.fields[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row = CsvRow{};
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      // tolerated before \n
    } else if (c == '\n') {
      end_row();
      ++line;
      row.line = line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(Errc::MalformedRow, source + ":" + std::to_string(row.line) + ": unterminated quote");
  }
  if (field_started || !row.fields.empty() || !field.empty()) end_row();
  return rows;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

/// Reads a CSV file whose first row must equal `header` (fields trimmed).
/// Returns the data rows only; every row is checked for the header's arity.
inline std::vector<CsvRow> read_csv(const std::filesystem::path& path,
                                    std::initializer_list<std::string_view> header) {
  auto rows = parse_csv(read_file(path), path.string());
  if (rows.empty()) throw Error(Errc::MalformedRow, path.string() + ": missing header");
  const auto& head = rows.front().fields;
  bool ok = head.size() == header.size();
  std::size_t i = 0;
  for (auto h : header) {
    if (!ok) break;
    ok = trim(head[i++]) == h;
  }
  if (!ok) {
    std::string want;
    for (auto h : header) want += (want.empty() ? "" : ",") + std::string(h);
    throw Error(Errc::MalformedRow, path.string() + ":1: expected header '" + want + "'");
  }
  rows.erase(rows.begin());
  for (const auto& r : rows) {
    if (r.fields.size() != header.size()) {
      throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(r.line) + ": expected " +
                                          std::to_string(header.size()) + " fields, got " +
                                          std::to_string(r.fields.size()));
    }
  }
  return rows;
}

inline std::string csv_escape(std::string_view s) {
  bool quote = s.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!quote) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& out, std::initializer_list<std::string_view> fields) {
  bool first = true;
  for (auto f : fields) {
    if (!first) out << ',';
    out << csv_escape(f);
    first = false;
  }
  out << '\n';
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(fields[i]);
  }
  out << '\n';
}

}  // namespace recat::detail
