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
#include <string>
#include <utility>

#include "numeric.hpp"
#include "random.hpp"

namespace gradbroker {

/// Loads rows of d floats plus a trailing {0,1} label. A header row is
/// auto-detected (any non-numeric first row) and skipped. A constant-1
/// intercept column is appended, so the model dimension is d + 1.
LabeledDataset load_csv_dataset(const std::string& path);

/// Seeded shuffle, then split at floor(n * train_frac).
std::pair<LabeledDataset, LabeledDataset> split_train_test(
    const LabeledDataset& data, double train_frac, std::uint64_t seed);

/// m uniform draws with replacement.
LabeledDataset bootstrap_sample(const LabeledDataset& source, std::size_t m,
                                RandomSource& rng);

/// Two spherical Gaussian classes centered at +-(separation/2) along the
/// first axis, labels drawn with equal priors. No intercept column; the
/// separating boundary passes through the origin. feature_scale multiplies
/// every coordinate, changing gradient magnitudes without changing class
/// overlap.
LabeledDataset synth_dataset(std::size_t d, std::size_t n, double separation,
                             std::uint64_t seed, double feature_scale = 1.0);

}  // namespace gradbroker
