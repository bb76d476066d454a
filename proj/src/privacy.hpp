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

#include <cstdint>

#include "numeric.hpp"
#include "random.hpp"

namespace gradbroker {

struct PrivacyConfig {
  // epsilon == infinity disables noise entirely.
  double epsilon = 1.0;
  int batch_size = 10;
  int min_clients = 1;  // the client's k preference, enforced broker-side
};

/// Draw from the isotropic multivariate Laplace density p(z) ~ e^{-(eps/2)||z||}:
/// a uniform direction on the unit sphere scaled by a Gamma(d, 2/eps) radius,
/// so E[||Z||] = 2d/eps. Returns the zero vector when epsilon is infinite.
ParameterVector sample_isotropic_laplace(std::size_t d, double epsilon,
                                         RandomSource& rng);

/// Differentially private update delta against the pulled global model:
///   delta = -eta_t * (lambda*w_g + mean_batch_gradient + Z_t / b)
/// with one fresh noise draw Z_t per call. With epsilon infinite this is
/// exactly -eta_t * logistic_gradient.
ParameterVector dp_delta(const ParameterVector& w_g, const LabeledDataset& batch,
                         const HyperParams& hp, const PrivacyConfig& pc,
                         std::int64_t t, RandomSource& rng);

}  // namespace gradbroker
