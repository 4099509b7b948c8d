#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csgmcmc/sampler.hpp"

namespace csgmcmc {

/// Shortest text that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return {buf, ptr};
}

inline double parse_double_strict(const std::string& s) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + s + "'");
  return out;
}

/// Columns: iter, cycle, stage, theta_0 .. theta_{d-1}.
inline void write_samples_csv(std::ostream& out, const SampleSet& samples) {
  out << "iter,cycle,stage";
  for (Eigen::Index j = 0; j < samples.dim; ++j) out << ",theta_" << j;
  out << '\n';
  for (const auto& r : samples.records) {
    out << r.iter << ',' << r.cycle << ',' << to_string(r.stage);
    for (Eigen::Index j = 0; j < r.theta.size(); ++j) out << ',' << format_double(r.theta(j));
    out << '\n';
  }
}

inline void write_samples_csv(const std::string& path, const SampleSet& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_samples_csv(out, samples);
}

inline SampleSet read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  auto header = detail::split_fields(line, ',');
  if (header.size() < 3 || header[0] != "iter" || header[1] != "cycle" || header[2] != "stage")
    throw std::runtime_error(path + ": unexpected header");
  SampleSet set;
  set.dim = static_cast<Eigen::Index>(header.size() - 3);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_fields(line, ',');
    if (f.size() != header.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong column count");
    SampleRecord r;
    r.iter = std::stoll(std::string(f[0]));
    r.cycle = std::stoll(std::string(f[1]));
    r.stage = f[2] == "exploration" ? StageLabel::Exploration : StageLabel::Sampling;
    r.theta.resize(set.dim);
    for (Eigen::Index j = 0; j < set.dim; ++j)
      r.theta(j) = parse_double_strict(std::string(f[static_cast<std::size_t>(j) + 3]));
    set.records.push_back(std::move(r));
  }
  return set;
}

/// Ordered "key = value" report; keys are dotted paths.
class Report {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = value;
        return;
      }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    throw std::out_of_range("report has no key '" + key + "'");
  }

  bool contains(const std::string& key) const {
    for (const auto& [k, v] : entries_)
      if (k == key) return true;
    return false;
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
  }

  std::string str() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  static Report read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    Report r;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) throw std::runtime_error(path + ": malformed line '" + line + "'");
      r.set(line.substr(0, eq), line.substr(eq + 3));
    }
    return r;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace csgmcmc
