#pragma once

#include <charconv>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "asyncps/dataset.hpp"

namespace asyncps {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

inline SparseRow parse_line(std::string_view line, std::size_t lineno) {
  SparseRow row;
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
    return line.substr(start, pos - start);
  };

  const std::string_view label = next_token();
  if (!parse_number(label, row.label)) throw ParseError(lineno, "bad label '" + std::string(label) + "'");

  for (std::string_view tok = next_token(); !tok.empty(); tok = next_token()) {
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos) throw ParseError(lineno, "expected idx:val, got '" + std::string(tok) + "'");
    std::size_t idx = 0;
    double val = 0.0;
    if (!parse_number(tok.substr(0, colon), idx)) throw ParseError(lineno, "bad index in '" + std::string(tok) + "'");
    if (!parse_number(tok.substr(colon + 1), val)) throw ParseError(lineno, "bad value in '" + std::string(tok) + "'");
    if (idx == 0) throw ParseError(lineno, "indices are 1-based");
    if (!row.indices.empty() && idx - 1 <= row.indices.back()) {
      throw ParseError(lineno, "indices must be strictly increasing");
    }
    row.indices.push_back(idx - 1);
    row.values.push_back(val);
  }
  return row;
}

}  // namespace detail

// Reads `label idx:val ...` lines (1-based indices). Blank lines and '#' comments are skipped.
// The dimension is max index + 1 unless `dim` is given, in which case it must cover every row.
inline Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> dim = std::nullopt) {
  std::vector<SparseRow> rows;
  std::size_t d = 0;
  std::string buf;
  std::size_t lineno = 0;
  while (std::getline(in, buf)) {
    ++lineno;
    std::string_view line = buf;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    SparseRow row = detail::parse_line(line, lineno);
    d = std::max(d, row.min_dim());
    if (dim && row.min_dim() > *dim) {
      throw ParseError(lineno, "index exceeds dimension " + std::to_string(*dim));
    }
    rows.push_back(std::move(row));
  }
  return make_unpartitioned(std::move(rows), dim.value_or(d));
}

inline Dataset parse_libsvm(std::string_view text, std::optional<std::size_t> dim = std::nullopt) {
  std::istringstream in{std::string(text)};
  return parse_libsvm(in, dim);
}

// Canonical form: one row per line, shortest round-trip doubles, single spaces.
inline void serialize_libsvm(std::ostream& out, std::span<const SparseRow> rows) {
  char buf[64];
  auto put = [&](double v) {
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, p - buf);
  };
  for (const auto& row : rows) {
    put(row.label);
    for (std::size_t k = 0; k < row.indices.size(); ++k) {
      out << ' ' << (row.indices[k] + 1) << ':';
      put(row.values[k]);
    }
    out << '\n';
  }
}

inline std::string serialize_libsvm(std::span<const SparseRow> rows) {
  std::ostringstream out;
  serialize_libsvm(out, rows);
  return out.str();
}

}  // namespace asyncps
