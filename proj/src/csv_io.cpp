#include "twostage/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <vector>

#include "twostage/error.hpp"

namespace twostage {

namespace {

constexpr const char* kColumns[4] = {"cluster_id", "mechanism", "treated", "outcome"};

[[noreturn]] void fail(long row, int column, const std::string& what) {
  std::string where = "row " + std::to_string(row);
  if (column > 0) where += ", column " + std::to_string(column) + " (" + kColumns[column - 1] + ")";
  throw Error(ErrorCode::ParseError, where + ": " + what);
}

// Splits one line; double quotes delimit fields that contain commas, with ""
// standing for a literal quote.
std::vector<std::string> split(std::string_view line, long row) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  if (quoted) fail(row, 0, "unterminated quoted field");
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end && !text.empty();
}

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

GroupingResult read_csv(std::istream& in, ArmPolicy policy) {
  std::string line;
  long row = 0;
  bool have_header = false;
  std::vector<Record> records;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (row == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!have_header) {
      if (line != kCsvHeader) {
        fail(row, 0, std::string("expected header '") + kCsvHeader + "', got '" + line + "'");
      }
      have_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    const auto fields = split(line, row);
    if (fields.size() != 4) {
      fail(row, 0, "expected 4 fields, found " + std::to_string(fields.size()));
    }
    Record r;
    r.cluster_id = std::string(trim(fields[0]));
    if (r.cluster_id.empty()) fail(row, 1, "empty cluster id");
    if (!parse_number(fields[1], r.mechanism) || r.mechanism < 1) {
      fail(row, 2, "expected an integer >= 1, got '" + fields[1] + "'");
    }
    if (!parse_number(fields[2], r.treated) || (r.treated != 0 && r.treated != 1)) {
      fail(row, 3, "expected 0 or 1, got '" + fields[2] + "'");
    }
    if (!parse_number(fields[3], r.outcome) || !std::isfinite(r.outcome)) {
      fail(row, 4, "expected a finite number, got '" + fields[3] + "'");
    }
    records.push_back(std::move(r));
  }
  if (!have_header) fail(1, 0, "empty input");
  if (records.empty()) fail(row, 0, "no data rows");
  return group_records(records, policy);
}

GroupingResult read_csv(const std::string& path, ArmPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  return read_csv(in, policy);
}

void write_csv(std::ostream& out, const ExperimentData& data) {
  out << kCsvHeader << '\n';
  char buffer[64];
  for (const auto& r : to_records(data)) {
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, r.outcome);
    (void)ec;
    out << quote(r.cluster_id) << ',' << r.mechanism << ',' << r.treated << ','
        << std::string_view(buffer, static_cast<std::size_t>(ptr - buffer)) << '\n';
  }
}

void write_csv(const std::string& path, const ExperimentData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ParseError, "cannot write '" + path + "'");
  write_csv(out, data);
}

}  // namespace twostage
