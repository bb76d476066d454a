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
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "broker.hpp"
#include "client.hpp"
#include "sim_transport.hpp"
#include "transport.hpp"

namespace gradbroker {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One block of identically configured clients.
/// Roles: "honest" and "bystander" run the plain client loop on a clean
/// shard; "victim" and "poisoner" run it on a label-flipped shard;
/// "attacker_zero" and "attacker_honest" run the model-inversion client
/// (zero or honest own contributions).
struct ClientGroup {
  std::string role = "honest";
  int count = 1;
  double epsilon = std::numeric_limits<double>::infinity();
  int batch_size = 10;
  int k = 1;
  std::optional<std::int64_t> max_local_iterations;
};

struct DatasetSpec {
  enum class Kind { synthetic, csv };
  Kind kind = Kind::synthetic;
  std::string path;  // csv only
  std::size_t d = 10;
  std::size_t n = 5000;
  double separation = 6.0;
  double feature_scale = 1.0;
};

struct ExperimentConfig {
  std::string scenario = "experiment";
  std::string model_id = "task";
  std::uint64_t seed = 1;

  DatasetSpec dataset;
  double train_frac = 0.7;
  std::size_t shard_size = 1000;      // per-client bootstrap sample size
  std::size_t validation_size = 1000; // head of the test split

  HyperParams hyper{0.3, 0.0, 10};  // batch_size comes from the group
  std::vector<ClientGroup> clients;

  int min_clients = 1;
  std::optional<int> max_clients;  // defaults to the configured client count
  std::int64_t max_iterations = 2000;
  BrokerConfig broker;  // seed and max_real_difficulty are filled by the runner

  TransportConfig transport;
  SimConfig sim;

  std::int64_t attacker_rounds = 6000;
  std::int64_t victim_optimal_iterations = 2000;
  double think_ms = 1.0;
  double poll_backoff_ms = 100.0;
  int port = 0;  // standalone broker serving only; 0 picks an ephemeral port
};

struct ClientOutcome {
  int config_index = -1;  // position in the flattened client list
  std::string role;
  std::string token;
  int admission_index = -1;  // broker-side index; -1 if never admitted
  std::string exit;
  std::int64_t local_iterations = 0;
  int final_difficulty = -1;
  int penalty_count = 0;
  std::string detail;
};

struct ExperimentResult {
  std::string scenario;
  std::string model_id;
  std::uint64_t seed = 0;

  bool complete = false;
  std::int64_t iterations = 0;
  double final_training_error = 0.0;
  double final_validation_error = 0.0;
  ParameterVector final_model;

  std::vector<ClientOutcome> clients;
  std::vector<PenaltyEvent> penalty_events;
  std::optional<std::int64_t> first_penalty_iteration;
  std::optional<std::int64_t> first_poisoner_penalty_iteration;
  std::optional<double> reconstruction_error;

  std::vector<BrokerMetricsRow> metrics;
  std::int64_t steps = 0;
  double virtual_ms = 0.0;
  bool hit_step_limit = false;

  std::string metrics_csv_path;
  std::string summary_json_path;
  std::string model_json_path;
};

/// Parses the experiment JSON document; throws ConfigError on anything
/// malformed (unknown enum values, bad counts, missing csv path, ...).
/// "epsilon" accepts a positive number or the string "inf". An absent
/// broker.client_timeout defaults to 1000 virtual ms in-process and
/// 30000 ms over TCP. With require_clients false an empty client list is
/// allowed (standalone broker serving).
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         bool require_clients = true);

/// Dataset pipeline and broker wiring shared by the experiment runner and
/// the standalone TCP broker.
struct PreparedTask {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset validation;
  LearningTask task;
  BrokerConfig broker;
};

/// Builds the splits, the validation set and the broker configuration.
/// normalize_csv z-scores csv features on the train split; the standalone
/// broker skips this because remote clients see their data raw.
PreparedTask prepare_task(const ExperimentConfig& cfg, RandomSource& master,
                          bool normalize_csv);

/// Runs one experiment end to end. With a non-empty out_dir it writes
/// metrics.csv (streamed), summary.json and model.json there, creating the
/// directory if needed. Deterministic for a fixed config on the in-process
/// transport.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& out_dir);

std::string summary_to_json(const ExperimentResult& result);

/// Shortest-round-trip formatting, matching the wire encoding of doubles.
std::string format_double(double v);

/// Canonical parameter sweeps; writes one CSV per figure into out_dir. log,
/// when set, receives one progress line per run.
void write_figure_csvs(const std::string& out_dir,
                       const std::function<void(const std::string&)>& log = {});

/// Ready-made configs shared by the figure sweeps and the acceptance checks.
namespace scenarios {

/// One honest client on a synthetic task.
ExperimentConfig convergence(double epsilon, int batch_size,
                             std::uint64_t seed);

/// n identical honest clients, training gated on all of them.
ExperimentConfig scaling(int n_clients, std::uint64_t seed);

/// Zero-contributing inversion attacker against one victim training on a
/// label-flipped shard, plus optional clean-shard bystanders.
ExperimentConfig inversion(double victim_epsilon, int bystanders,
                           double latency_ms_max, std::uint64_t seed);

/// Mixed honest and label-flipping clients with influence validation on.
ExperimentConfig poisoning(double poison_fraction, double roni_threshold,
                           std::uint64_t seed);

/// All-honest noisy clients; used to check the validator's false-positive
/// behavior under private updates.
ExperimentConfig honest_noise(double epsilon, double roni_threshold,
                              std::uint64_t seed);

}  // namespace scenarios

}  // namespace gradbroker
