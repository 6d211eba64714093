#pragma once

// CSV ingestion and export. Header row required, ',' separator, '.' decimal
// point. Schema written by `write_csv`: time,event,trt,x1,...,xd.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tevim/core/error.hpp"
#include "tevim/data/dataset.hpp"

namespace tevim {

struct CsvColumns {
  std::string time = "time";
  std::string event = "event";
  std::string treatment = "trt";
  /// Empty means every remaining column, in file order.
  std::vector<std::string> covariates;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline SurvivalDataset read_csv(std::istream& in, const CsvColumns& cols = {},
                                const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw Error("data", source + ": empty file, header row required");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.emplace_back(f);

  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw Error("data", source + ": missing column '" + name + "'");
  };
  const std::size_t c_time = find_col(cols.time);
  const std::size_t c_event = find_col(cols.event);
  const std::size_t c_trt = find_col(cols.treatment);
  std::vector<std::size_t> c_x;
  std::vector<std::string> names;
  if (cols.covariates.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c != c_time && c != c_event && c != c_trt) {
        c_x.push_back(c);
        names.push_back(header[c]);
      }
    }
  } else {
    for (const auto& name : cols.covariates) {
      c_x.push_back(find_col(name));
      names.push_back(name);
    }
  }

  std::vector<double> time;
  std::vector<int> event;
  std::vector<int> trt;
  std::vector<double> x;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw Error("data", source + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, header has " +
                              std::to_string(header.size()));
    }
    auto number = [&](std::size_t c) {
      const auto v = detail::parse_double(fields[c]);
      if (!v) {
        throw Error("data", source + ": row " + std::to_string(row) + ", column '" + header[c] +
                                "': non-numeric value '" + std::string(fields[c]) + "'");
      }
      return *v;
    };
    auto binary = [&](std::size_t c) {
      const double v = number(c);
      if (v != 0.0 && v != 1.0) {
        throw Error("data", source + ": row " + std::to_string(row) + ", column '" + header[c] +
                                "': value must be 0 or 1");
      }
      return static_cast<int>(v);
    };
    const double t = number(c_time);
    if (!(t >= 0.0)) {
      throw Error("data", source + ": row " + std::to_string(row) + ", column '" + header[c_time] +
                              "': negative time");
    }
    time.push_back(t);
    event.push_back(binary(c_event));
    trt.push_back(binary(c_trt));
    for (std::size_t c : c_x) x.push_back(number(c));
  }
  return SurvivalDataset(std::move(time), std::move(event), std::move(trt), std::move(x),
                         std::move(names));
}

inline SurvivalDataset load_csv(const std::string& path, const CsvColumns& cols = {}) {
  std::ifstream in(path);
  if (!in) throw Error("data", "cannot open '" + path + "'");
  return read_csv(in, cols, path);
}

inline void write_csv(std::ostream& out, const SurvivalDataset& data) {
  out << "time,event,trt";
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << detail::format_double(data.time(i)) << ',' << data.event(i) << ',' << data.treatment(i);
    for (double v : data.x(i)) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

inline void save_csv(const std::string& path, const SurvivalDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("data", "cannot write '" + path + "'");
  write_csv(out, data);
}

}  // namespace tevim
