#include "gprn/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gprn {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
  const std::string cell = trimmed(raw);
  const std::string where = "row " + std::to_string(row) + ", column " + column;
  if (cell.empty()) throw DataError("load_csv: missing value at " + where);
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw DataError("load_csv: cannot parse '" + cell + "' at " + where);
  if (!std::isfinite(value)) throw DataError("load_csv: non-finite value at " + where);
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
  const std::vector<std::string> header = split_line(line);

  Index p = 0;
  Index d = 0;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trimmed(header[i]);
    const std::string want_x = "x" + std::to_string(i);
    const std::string want_y = "y" + std::to_string(i - static_cast<std::size_t>(p));
    if (static_cast<Index>(i) == p && name == want_x) {
      ++p;
    } else if (name == want_y) {
      ++d;
    } else {
      throw DataError("load_csv: malformed header; expected x0..x{p-1},y0..y{D-1}, got '" + name + "' at column " +
                      std::to_string(i));
    }
  }
  if (p == 0 || d == 0) throw DataError("load_csv: header needs at least one x column and one y column");

  std::vector<std::vector<double>> rows;
  std::size_t row_number = 1;  // header was row 0
  while (std::getline(in, line)) {
    if (trimmed(line).empty()) {
      ++row_number;
      continue;
    }
    const std::vector<std::string> cells = split_line(line);
    if (static_cast<Index>(cells.size()) != p + d)
      throw DataError("load_csv: row " + std::to_string(row_number) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(p + d));
    std::vector<double> values;
    values.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
      values.push_back(parse_cell(cells[i], row_number, trimmed(header[i])));
    rows.push_back(std::move(values));
    ++row_number;
  }
  if (rows.empty()) throw DataError("load_csv: no data rows in " + path);

  Dataset data;
  data.X.resize(static_cast<Index>(rows.size()), p);
  data.Y.resize(static_cast<Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Index c = 0; c < p; ++c) data.X(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    for (Index c = 0; c < d; ++c) data.Y(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(p + c)];
  }
  validate_dataset(data);
  return data;
}

void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot open " + path);
  for (Index c = 0; c < data.input_dim(); ++c) out << (c ? "," : "") << "x" << c;
  for (Index c = 0; c < data.output_dim(); ++c) out << ",y" << c;
  out << "\n";
  char buf[64];
  for (Index r = 0; r < data.n(); ++r) {
    for (Index c = 0; c < data.input_dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.X(r, c));
      out << (c ? "," : "") << buf;
    }
    for (Index c = 0; c < data.output_dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.Y(r, c));
      out << "," << buf;
    }
    out << "\n";
  }
  if (!out) throw DataError("save_csv: write failed for " + path);
}

Dataset normalize(const Dataset& data) {
  if (data.n() < 2) throw DataError("normalize: need at least two rows");
  NormalizationRecord record;
  record.mean = data.X.colwise().mean();
  record.std.resize(data.input_dim());
  for (Index c = 0; c < data.input_dim(); ++c) {
    const double var = (data.X.col(c).array() - record.mean[c]).square().sum() / static_cast<double>(data.n() - 1);
    double sd = std::sqrt(var);
    if (sd <= 0.0) {
      sd = 1.0;
      record.clamped_columns.push_back(c);
    }
    record.std[c] = sd;
  }
  Dataset out;
  out.X = apply_normalization(record, data.X);
  out.Y = data.Y;
  out.normalization = std::move(record);
  return out;
}

MatrixXd apply_normalization(const NormalizationRecord& record, const MatrixXd& x) {
  if (x.cols() != record.mean.size()) throw DataError("apply_normalization: column count mismatch");
  return (x.rowwise() - record.mean.transpose()).array().rowwise() / record.std.transpose().array();
}

MatrixXd denormalize(const NormalizationRecord& record, const MatrixXd& x) {
  if (x.cols() != record.mean.size()) throw DataError("denormalize: column count mismatch");
  return (x.array().rowwise() * record.std.transpose().array()).rowwise() + record.mean.transpose().array();
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, double test_fraction,
                                  std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction > 1.0 || test_fraction < 0.0 ||
      train_fraction + test_fraction > 1.0 + 1e-12)
    throw ConfigError("split: fractions must satisfy 0 < train <= 1, test >= 0, train + test <= 1");
  const Index n = data.n();
  const Index n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(n)));
  const Index n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_train < 1) throw ConfigError("split: empty training set");
  if (n_train + n_test > n) throw ConfigError("split: not enough rows for the requested fractions");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto take = [&](Index begin, Index count) {
    Dataset out;
    out.X.resize(count, data.input_dim());
    out.Y.resize(count, data.output_dim());
    for (Index i = 0; i < count; ++i) {
      out.X.row(i) = data.X.row(order[static_cast<std::size_t>(begin + i)]);
      out.Y.row(i) = data.Y.row(order[static_cast<std::size_t>(begin + i)]);
    }
    out.normalization = data.normalization;
    return out;
  };
  return {take(0, n_train), take(n_train, n_test)};
}

MetricsReport metrics(const MatrixXd& y_pred, const MatrixXd& y_test) {
  if (y_pred.rows() != y_test.rows() || y_pred.cols() != y_test.cols())
    throw DataError("metrics: prediction and test shapes differ");
  if (y_test.size() == 0) throw DataError("metrics: empty test set");
  MetricsReport report;
  const MatrixXd err = y_pred - y_test;
  report.mae = err.array().abs().mean();
  report.rmse = std::sqrt(err.array().square().mean());
  report.normalizer = y_test.maxCoeff() - y_test.minCoeff();
  if (report.normalizer > 0.0) {
    report.nrmse = report.rmse / report.normalizer;
  } else {
    report.zero_range = true;
    report.nrmse = report.rmse;
  }
  report.per_output_mae = err.array().abs().colwise().mean();
  return report;
}

}  // namespace gprn
