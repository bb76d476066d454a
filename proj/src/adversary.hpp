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

#include <vector>

#include "client.hpp"

namespace gradbroker {

/// Difference attack: the part of a model step not explained by the
/// attacker's own contribution, m_new - m_old - own_delta.
ParameterVector recover_victim_delta(const ParameterVector& m_new,
                                     const ParameterVector& m_old,
                                     const ParameterVector& own_delta);

/// Fraction of test rows where the two models' predictions disagree.
double reconstruction_error(const ParameterVector& shadow,
                            const ParameterVector& victim_optimal,
                            const LabeledDataset& test);

/// Label-flip poisoning: every label y becomes 1 - y, features untouched.
LabeledDataset make_poisoned_dataset(const LabeledDataset& data);

struct AttackerConfig {
  ClientConfig base;  // base.data is only used in honest-gradients mode
  bool send_zero_gradients = true;
  std::int64_t rounds = 1000;  // update exchanges before giving up
};

struct AttackerResult {
  ClientExit exit = ClientExit::rejected;
  std::string client_token;
  ParameterVector shadow;
  std::int64_t rounds_completed = 0;
  std::string detail;
};

/// Participates like a regular client while accumulating every recovered
/// between-observation delta into a shadow model of the other clients.
AttackerResult run_inversion_attacker(const AttackerConfig& cfg,
                                      ClientConnection& conn);

/// Client configs for count colluding identities sharing the template's
/// dataset and strategy, with per-identity derived seeds.
std::vector<ClientConfig> make_sybil_configs(const ClientConfig& tmpl,
                                             int count);

/// Runs count sybils concurrently over the supplied connections (one each)
/// and returns their results in order.
std::vector<ClientResult> run_sybil_group(
    const ClientConfig& tmpl, int count,
    const std::vector<ClientConnection*>& conns);

}  // namespace gradbroker
