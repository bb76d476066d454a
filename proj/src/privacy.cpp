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
#include "privacy.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gradbroker {

ParameterVector sample_isotropic_laplace(std::size_t d, double epsilon,
                                         RandomSource& rng) {
  if (d < 1) throw std::invalid_argument("sample_isotropic_laplace: d must be >= 1");
  if (std::isinf(epsilon)) return ParameterVector(d, 0.0);
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("sample_isotropic_laplace: epsilon must be > 0");
  }
  ParameterVector z(d);
  double norm_sq;
  do {
    norm_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      z[i] = rng.normal();
      norm_sq += z[i] * z[i];
    }
  } while (norm_sq == 0.0);
  const double r = rng.gamma(static_cast<double>(d), 2.0 / epsilon);
  const double s = r / std::sqrt(norm_sq);
  for (std::size_t i = 0; i < d; ++i) z[i] *= s;
  return z;
}

ParameterVector dp_delta(const ParameterVector& w_g, const LabeledDataset& batch,
                         const HyperParams& hp, const PrivacyConfig& pc,
                         std::int64_t t, RandomSource& rng) {
  if (batch.size() == 0) throw std::invalid_argument("dp_delta: empty batch");
  ParameterVector g = logistic_gradient(w_g, batch, hp.lambda);
  if (!std::isinf(pc.epsilon)) {
    const ParameterVector z = sample_isotropic_laplace(w_g.size(), pc.epsilon, rng);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += z[i] * inv_b;
  }
  const double eta = learning_rate(t, hp.eta0);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -eta * g[i];
  return g;
}

}  // namespace gradbroker
