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
#include "numeric.hpp"

#include <algorithm>
#include <cmath>

namespace gradbroker {

void LabeledDataset::push_row(std::vector<double> x, int y) {
  if (!features.empty() && x.size() != features[0].size()) {
    throw std::invalid_argument("push_row: dimension mismatch");
  }
  if (y != 0 && y != 1) throw std::invalid_argument("push_row: label not in {0,1}");
  features.push_back(std::move(x));
  labels.push_back(y);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double dot(const ParameterVector& w, const std::vector<double>& x) {
  if (w.size() != x.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

int predict(const ParameterVector& w, const std::vector<double>& x) {
  return dot(w, x) >= 0.0 ? 1 : 0;
}

double logistic_loss(const ParameterVector& w, const LabeledDataset& batch,
                     double lambda) {
  if (batch.size() == 0) throw std::invalid_argument("logistic_loss: empty batch");
  double data_term = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double z = dot(w, batch.features[i]);
    // log(1 + e^z) - y*z, computed without overflow for large |z|.
    data_term += std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))) -
                 batch.labels[i] * z;
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  const double loss = 0.5 * lambda * reg + data_term / static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw std::runtime_error("logistic_loss: non-finite result");
  return loss;
}

ParameterVector logistic_gradient(const ParameterVector& w,
                                  const LabeledDataset& batch, double lambda) {
  if (batch.size() == 0) {
    throw std::invalid_argument("logistic_gradient: empty batch");
  }
  ParameterVector g(w.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double diff = sigmoid(dot(w, batch.features[i])) - batch.labels[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      g[j] += diff * batch.features[i][j];
    }
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    g[j] = lambda * w[j] + g[j] * inv_b;
    if (!std::isfinite(g[j])) {
      throw std::runtime_error("logistic_gradient: non-finite result");
    }
  }
  return g;
}

ParameterVector sgd_step(const ParameterVector& w, const ParameterVector& grad,
                         double eta) {
  if (w.size() != grad.size()) {
    throw std::invalid_argument("sgd_step: dimension mismatch");
  }
  ParameterVector out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] - eta * grad[i];
  return out;
}

double learning_rate(std::int64_t t, double eta0) {
  if (t < 1) throw std::invalid_argument("learning_rate: t must be >= 1");
  return eta0 / std::sqrt(static_cast<double>(t));
}

double classification_error(const ParameterVector& w,
                            const LabeledDataset& data) {
  if (data.size() == 0) {
    throw std::invalid_argument("classification_error: empty dataset");
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(w, data.features[i]) != data.labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

Normalizer Normalizer::fit(const LabeledDataset& data,
                           std::size_t skip_trailing) {
  if (data.size() < 2) throw std::invalid_argument("Normalizer::fit: need >= 2 rows");
  const std::size_t d = data.dim();
  if (skip_trailing > d) throw std::invalid_argument("Normalizer::fit: skip too large");
  Normalizer nz;
  nz.skip_trailing_ = skip_trailing;
  nz.mean_.assign(d, 0.0);
  nz.scale_.assign(d, 0.0);
  const std::size_t cols = d - skip_trailing;
  const double n = static_cast<double>(data.size());
  for (std::size_t j = 0; j < cols; ++j) {
    double sum = 0.0;
    for (const auto& row : data.features) sum += row[j];
    nz.mean_[j] = sum / n;
    double sq = 0.0;
    for (const auto& row : data.features) {
      const double c = row[j] - nz.mean_[j];
      sq += c * c;
    }
    const double stddev = std::sqrt(sq / (n - 1.0));
    nz.scale_[j] = stddev > 0.0 ? 1.0 / stddev : 0.0;
  }
  return nz;
}

void Normalizer::apply(LabeledDataset* data) const {
  if (data->dim() != mean_.size()) {
    throw std::invalid_argument("Normalizer::apply: dimension mismatch");
  }
  const std::size_t cols = mean_.size() - skip_trailing_;
  for (auto& row : data->features) {
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = (row[j] - mean_[j]) * scale_[j];
    }
  }
}

}  // namespace gradbroker
