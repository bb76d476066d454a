//
// Copyright 2026 The gradbroker Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#include "dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace gradbroker {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double* out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) {
    --end;
  }
  if (begin == end) return false;
  const auto result = std::from_chars(begin, end, *out);
  return result.ec == std::errc() && result.ptr == end && std::isfinite(*out);
}

}  // namespace

LabeledDataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  LabeledDataset out;
  std::string line;
  std::size_t expected_fields = 0;
  std::size_t line_no = 0;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_fields(line);
    if (first_data_row) {
      // Header detection: a first row with any non-numeric field is skipped.
      bool numeric = true;
      double probe;
      for (const auto& f : fields) {
        if (!parse_double(f, &probe)) {
          numeric = false;
          break;
        }
      }
      if (!numeric) {
        expected_fields = fields.size();
        first_data_row = false;
        continue;
      }
    }
    if (expected_fields == 0) expected_fields = fields.size();
    if (fields.size() != expected_fields) {
      throw std::runtime_error("ragged row at line " + std::to_string(line_no) +
                               " in " + path);
    }
    if (fields.size() < 2) {
      throw std::runtime_error("rows need at least one feature and a label: " +
                               path);
    }
    std::vector<double> row;
    row.reserve(fields.size());  // one extra slot becomes the intercept
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      double v;
      if (!parse_double(fields[i], &v)) {
        throw std::runtime_error("bad feature value at line " +
                                 std::to_string(line_no) + " in " + path);
      }
      row.push_back(v);
    }
    double label_value;
    if (!parse_double(fields.back(), &label_value) ||
        (label_value != 0.0 && label_value != 1.0)) {
      throw std::runtime_error("label must be 0 or 1 at line " +
                               std::to_string(line_no) + " in " + path);
    }
    row.push_back(1.0);
    out.push_row(std::move(row), static_cast<int>(label_value));
    first_data_row = false;
  }
  if (out.size() == 0) throw std::runtime_error("empty dataset file: " + path);
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_train_test(
    const LabeledDataset& data, double train_frac, std::uint64_t seed) {
  if (train_frac <= 0.0 || train_frac >= 1.0) {
    throw std::invalid_argument("train_frac must be in (0, 1)");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  RandomSource rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t cut =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac));
  LabeledDataset train, test;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < cut ? train : test;
    dst.features.push_back(data.features[order[i]]);
    dst.labels.push_back(data.labels[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

LabeledDataset bootstrap_sample(const LabeledDataset& source, std::size_t m,
                                RandomSource& rng) {
  if (source.size() == 0) {
    throw std::invalid_argument("bootstrap_sample: empty source");
  }
  if (m < 1) throw std::invalid_argument("bootstrap_sample: m must be >= 1");
  LabeledDataset out;
  out.features.reserve(m);
  out.labels.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t idx = rng.uniform_int(source.size());
    out.features.push_back(source.features[idx]);
    out.labels.push_back(source.labels[idx]);
  }
  return out;
}

LabeledDataset synth_dataset(std::size_t d, std::size_t n, double separation,
                             std::uint64_t seed, double feature_scale) {
  if (d < 1) throw std::invalid_argument("synth_dataset: d must be >= 1");
  if (n < 2) throw std::invalid_argument("synth_dataset: n must be >= 2");
  if (!(feature_scale > 0.0)) {
    throw std::invalid_argument("synth_dataset: feature_scale must be > 0");
  }
  RandomSource rng(seed);
  LabeledDataset out;
  out.features.reserve(n);
  out.labels.reserve(n);
  const double offset = separation / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.uniform() < 0.5 ? 0 : 1;
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = rng.normal();
    row[0] += label == 1 ? offset : -offset;
    for (double& v : row) v *= feature_scale;
    out.push_row(std::move(row), label);
  }
  return out;
}

}  // namespace gradbroker
