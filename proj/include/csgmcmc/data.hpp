#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "csgmcmc/random.hpp"

namespace csgmcmc {

/// Feature matrix (N x d) with binary labels. `warnings` collects
/// non-fatal ingestion notes (e.g. constant columns left unscaled).
struct Dataset {
  std::string name;
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  std::vector<std::string> warnings;

  Eigen::Index rows() const { return features.rows(); }
  Eigen::Index cols() const { return features.cols(); }
};

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Splits on `delim`; a space delimiter means "runs of whitespace".
inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  if (delim == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      if (i >= line.size()) break;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a delimited numeric table whose last column is a two-valued label.
/// Labels map to {0, 1} by lexicographic order of their raw text. With
/// `standardize`, every feature column is z-scored (population sd); constant
/// columns are left as-is and reported in `warnings`.
inline Dataset load_csv(const std::string& path, bool has_header, bool standardize,
                        char delimiter = ',') {
  std::ifstream in(path);
  if (!in) throw CsvError(path + ": cannot open file");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::size_t ncols = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (has_header && lineno == 1) continue;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_fields(detail::trim(line), delimiter);
    if (ncols == 0) {
      ncols = fields.size();
      if (ncols < 2)
        throw CsvError(path + ":" + std::to_string(lineno) +
                       ": need at least 2 columns (features + label), found " +
                       std::to_string(ncols));
    } else if (fields.size() != ncols) {
      throw CsvError(path + ":" + std::to_string(lineno) + ": expected " +
                     std::to_string(ncols) + " columns, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(ncols - 1);
    for (std::size_t c = 0; c + 1 < ncols; ++c) {
      if (!detail::parse_double(fields[c], row[c]))
        throw CsvError(path + ":" + std::to_string(lineno) + ":" + std::to_string(c + 1) +
                       ": cannot parse '" + std::string(fields[c]) + "' as a number");
    }
    const auto label = detail::trim(fields.back());
    if (label.empty())
      throw CsvError(path + ":" + std::to_string(lineno) + ":" + std::to_string(ncols) +
                     ": missing label");
    rows.push_back(std::move(row));
    raw_labels.emplace_back(label);
  }
  if (rows.empty()) throw CsvError(path + ": no data rows");

  std::map<std::string, int> distinct;
  for (const auto& l : raw_labels) distinct.emplace(l, 0);
  if (distinct.size() > 2)
    throw CsvError(path + ": label column has " + std::to_string(distinct.size()) +
                   " distinct values; expected a binary label");
  int code = 0;
  for (auto& [_, v] : distinct) v = code++;

  Dataset ds;
  ds.name = path;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(ncols - 1);
  ds.features.resize(n, d);
  ds.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = rows[i][j];
    ds.labels(i) = distinct.at(raw_labels[i]);
  }

  if (standardize) {
    for (Eigen::Index j = 0; j < d; ++j) {
      auto col = ds.features.col(j);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      if (!(sd > 0.0)) {
        ds.warnings.push_back("column " + std::to_string(j + 1) +
                              " is constant; left unscaled");
        continue;
      }
      col = (col.array() - mean) / sd;
    }
  }
  return ds;
}

/// Synthetic logistic-regression data: theta* ~ N(0, I), x ~ N(0, I),
/// y ~ Bernoulli(sigmoid(x . theta*)). Deterministic in `seed`.
inline Dataset synth_logistic(std::int64_t n, std::int64_t d, std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("synth_logistic: n must be >= 10");
  if (d < 1) throw std::invalid_argument("synth_logistic: d must be >= 1");
  Rng rng(seed);
  Eigen::VectorXd truth(d);
  for (Eigen::Index j = 0; j < d; ++j) truth(j) = rng.normal();
  Dataset ds;
  ds.name = "synthetic(n=" + std::to_string(n) + ",d=" + std::to_string(d) +
            ",seed=" + std::to_string(seed) + ")";
  ds.features.resize(n, d);
  ds.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = rng.normal();
    const double p = 1.0 / (1.0 + std::exp(-ds.features.row(i).dot(truth)));
    ds.labels(i) = rng.uniform() < p ? 1.0 : 0.0;
  }
  return ds;
}

}  // namespace csgmcmc
