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
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gradbroker {

// Model weights, gradients, deltas and noise vectors all share this shape.
using ParameterVector = std::vector<double>;

struct HyperParams {
  double eta0 = 0.1;
  double lambda = 0.0;
  int batch_size = 10;
};

// Row-major feature matrix plus binary labels. Also used for minibatches.
struct LabeledDataset {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;

  std::size_t size() const { return features.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features[0].size(); }
  void push_row(std::vector<double> x, int y);

  bool operator==(const LabeledDataset&) const = default;
};

double sigmoid(double z);

double dot(const ParameterVector& w, const std::vector<double>& x);

/// Predicted label in {0,1}; the tie p == 0.5 maps to 1.
int predict(const ParameterVector& w, const std::vector<double>& x);

/// Regularized mean logistic loss over the batch:
///   (lambda/2)*||w||^2 + (1/b) * sum_i [log(1+e^{w.x_i}) - y_i * w.x_i]
double logistic_loss(const ParameterVector& w, const LabeledDataset& batch,
                     double lambda);

/// Gradient of logistic_loss: lambda*w + (1/b) * sum_i (sigmoid(w.x_i) - y_i) x_i.
ParameterVector logistic_gradient(const ParameterVector& w,
                                  const LabeledDataset& batch, double lambda);

/// w - eta * grad.
ParameterVector sgd_step(const ParameterVector& w, const ParameterVector& grad,
                         double eta);

/// Decaying schedule eta0 / sqrt(t), t >= 1.
double learning_rate(std::int64_t t, double eta0);

/// Fraction of rows where predict(w, x) != y.
double classification_error(const ParameterVector& w,
                            const LabeledDataset& data);

/// Per-column z-score transform fitted on one dataset and applied to others.
/// Columns whose fitted sample standard deviation is zero are mapped to
/// all-zeros. The trailing skip_trailing columns are passed through untouched
/// (used for an appended constant intercept column).
class Normalizer {
 public:
  static Normalizer fit(const LabeledDataset& data,
                        std::size_t skip_trailing = 0);

  void apply(LabeledDataset* data) const;

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return scale_; }

 private:
  std::vector<double> mean_;
  std::vector<double> scale_;  // 1/stddev, or 0 for constant columns
  std::size_t skip_trailing_ = 0;
};

}  // namespace gradbroker
