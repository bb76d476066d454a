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
#include "transport.hpp"

namespace gradbroker {

double draw_latency_ms(RandomSource& rng, double latency_ms_max) {
  if (latency_ms_max < 0.0) {
    throw std::invalid_argument("draw_latency_ms: negative bound");
  }
  if (latency_ms_max == 0.0) return 0.0;
  return rng.uniform_range(0.0, latency_ms_max);
}

}  // namespace gradbroker
