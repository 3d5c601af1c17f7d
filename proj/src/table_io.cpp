#include "ehrenfest/table_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ehrenfest {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::size_t parse_index(const std::string& s, std::size_t line_no) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v == 0) {
    throw std::runtime_error("table line " + std::to_string(line_no) +
                             ": bad 1-based index '" + s + "'");
  }
  return v;
}

double parse_value(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::runtime_error("table line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

void expect_header(std::istream& in, const std::vector<std::string>& want, std::size_t& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    if (split_ws(line) != want) {
      std::string w;
      for (const auto& s : want) w += (w.empty() ? "" : " ") + s;
      throw std::runtime_error("table: expected header '" + w + "', got '" + line + "'");
    }
    return;
  }
  throw std::runtime_error("table: missing header");
}

}  // namespace

std::string format_roundtrip(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

std::string format_csv(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  return buf;
}

RateKernel read_kernel_table(std::istream& in) {
  std::size_t line_no = 0;
  expect_header(in, {"i", "j", "lambda"}, line_no);
  std::map<std::pair<std::size_t, std::size_t>, double> entries;
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    const auto tok = split_ws(line);
    if (tok.size() != 3) {
      throw std::runtime_error("kernel table line " + std::to_string(line_no) +
                               ": expected 3 columns");
    }
    const auto i = parse_index(tok[0], line_no);
    const auto j = parse_index(tok[1], line_no);
    if (!entries.emplace(std::make_pair(i, j), parse_value(tok[2], line_no)).second) {
      throw std::runtime_error("kernel table line " + std::to_string(line_no) +
                               ": duplicate entry");
    }
    n = std::max({n, i, j});
  }
  if (entries.size() != n * n) {
    throw std::runtime_error("kernel table: expected " + std::to_string(n * n) +
                             " entries for N=" + std::to_string(n) + ", found " +
                             std::to_string(entries.size()));
  }
  std::vector<double> values(n * n);
  for (const auto& [ij, v] : entries) values[(ij.first - 1) * n + (ij.second - 1)] = v;
  return RateKernel::table(n, std::move(values));
}

RateKernel read_kernel_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open kernel table " + path.string());
  return read_kernel_table(in);
}

void write_kernel_table(std::ostream& out, const RateKernel& kernel) {
  out << "i j lambda\n";
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    for (std::size_t j = 0; j < kernel.size(); ++j) {
      out << (i + 1) << ' ' << (j + 1) << ' ' << format_roundtrip(kernel(i, j)) << '\n';
    }
  }
}

void write_kernel_table(const std::filesystem::path& path, const RateKernel& kernel) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_kernel_table(out, kernel);
}

InitialProfile read_profile_table(std::istream& in) {
  std::size_t line_no = 0;
  expect_header(in, {"i", "phi"}, line_no);
  std::map<std::size_t, double> entries;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    const auto tok = split_ws(line);
    if (tok.size() != 2) {
      throw std::runtime_error("profile table line " + std::to_string(line_no) +
                               ": expected 2 columns");
    }
    const auto i = parse_index(tok[0], line_no);
    if (!entries.emplace(i, parse_value(tok[1], line_no)).second) {
      throw std::runtime_error("profile table line " + std::to_string(line_no) +
                               ": duplicate entry");
    }
  }
  const std::size_t n = entries.empty() ? 0 : entries.rbegin()->first;
  if (entries.size() != n) throw std::runtime_error("profile table: missing urn indices");
  std::vector<double> values(n);
  for (const auto& [i, v] : entries) values[i - 1] = v;
  return InitialProfile(std::move(values));
}

InitialProfile read_profile_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open profile table " + path.string());
  return read_profile_table(in);
}

void write_profile_table(std::ostream& out, const InitialProfile& profile) {
  out << "i phi\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    out << (i + 1) << ' ' << format_roundtrip(profile[i]) << '\n';
  }
}

void write_profile_table(const std::filesystem::path& path, const InitialProfile& profile) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_profile_table(out, profile);
}

}  // namespace ehrenfest
