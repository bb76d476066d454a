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
#include "experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "adversary.hpp"
#include "dataset.hpp"
#include "privacy.hpp"
#include "tcp_transport.hpp"

namespace gradbroker {
namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

const json* find_key(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double parse_epsilon(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "infinity") return kInf;
    throw ConfigError("epsilon string must be \"inf\", got \"" + s + "\"");
  }
  if (!v.is_number()) throw ConfigError("epsilon must be a number or \"inf\"");
  const double eps = v.get<double>();
  if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
  return eps;
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  const json* v = find_key(obj, key);
  if (!v) return fallback;
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for \"") + key + "\"");
  }
}

bool is_attacker(const std::string& role) {
  return role == "attacker_zero" || role == "attacker_honest";
}

bool wants_flipped_shard(const std::string& role) {
  return role == "poisoner" || role == "victim";
}

void validate(const ExperimentConfig& cfg, bool require_clients = true) {
  static const std::vector<std::string> kRoles = {
      "honest",   "bystander",     "poisoner",
      "victim",   "attacker_zero", "attacker_honest"};
  if (require_clients && cfg.clients.empty()) {
    throw ConfigError("clients must be non-empty");
  }
  int total = 0;
  for (const ClientGroup& g : cfg.clients) {
    if (std::find(kRoles.begin(), kRoles.end(), g.role) == kRoles.end()) {
      throw ConfigError("unknown client role \"" + g.role + "\"");
    }
    if (g.count < 1) throw ConfigError("client group count must be >= 1");
    if (g.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (g.k < 1) throw ConfigError("k must be >= 1");
    if (!(g.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    total += g.count;
  }
  if (cfg.dataset.kind == DatasetSpec::Kind::csv && cfg.dataset.path.empty()) {
    throw ConfigError("csv dataset needs a path");
  }
  if (cfg.dataset.kind == DatasetSpec::Kind::synthetic &&
      (cfg.dataset.d < 1 || cfg.dataset.n < 10)) {
    throw ConfigError("synthetic dataset needs d >= 1 and n >= 10");
  }
  if (!(cfg.dataset.feature_scale > 0.0)) {
    throw ConfigError("feature_scale must be positive");
  }
  if (!(cfg.train_frac > 0.0 && cfg.train_frac < 1.0)) {
    throw ConfigError("train_frac must lie in (0, 1)");
  }
  if (cfg.shard_size < 1) throw ConfigError("shard_size must be >= 1");
  if (cfg.validation_size < 1) throw ConfigError("validation_size must be >= 1");
  if (!(cfg.hyper.eta0 > 0.0)) throw ConfigError("eta0 must be positive");
  if (cfg.hyper.lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (cfg.min_clients < 1) throw ConfigError("min_clients must be >= 1");
  if (cfg.max_clients && *cfg.max_clients < 1) {
    throw ConfigError("max_clients must be >= 1");
  }
  if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
  const BrokerConfig& b = cfg.broker;
  if (b.validation_rate < 0.0 || b.validation_rate > 1.0) {
    throw ConfigError("validation_rate must lie in [0, 1]");
  }
  if (!(b.roni_threshold > 0.0)) {
    throw ConfigError("roni_threshold must be positive");
  }
  if (b.difficulty_cap < 1 || b.difficulty_cap > 16) {
    throw ConfigError("difficulty_cap must lie in [1, 16]");
  }
  if (b.admission_difficulty < 0 || b.admission_difficulty > b.difficulty_cap ||
      b.update_difficulty < 0 || b.update_difficulty > b.difficulty_cap) {
    throw ConfigError("puzzle difficulties must lie in [0, difficulty_cap]");
  }
  if (b.client_timeout < 1) throw ConfigError("client_timeout must be >= 1");
  if (b.metrics_every < 1) throw ConfigError("metrics_every must be >= 1");
  if (cfg.sim.max_real_difficulty < 1) {
    throw ConfigError("max_real_difficulty must be >= 1");
  }
  if (cfg.sim.pow_ms_per_attempt < 0.0 || cfg.transport.latency_ms_max < 0.0) {
    throw ConfigError("latencies and puzzle cost must be >= 0");
  }
  if (cfg.attacker_rounds < 1) throw ConfigError("attacker_rounds must be >= 1");
  if (cfg.victim_optimal_iterations < 1) {
    throw ConfigError("victim_optimal_iterations must be >= 1");
  }
}

int parse_admission_index(const std::string& token) {
  // Tokens look like "c<index>-<hex>"; see Broker::make_token_locked.
  if (token.size() < 2 || token[0] != 'c') return -1;
  const auto dash = token.find('-');
  if (dash == std::string::npos) return -1;
  int idx = -1;
  const char* begin = token.data() + 1;
  const char* end = token.data() + dash;
  auto [ptr, ec] = std::from_chars(begin, end, idx);
  if (ec != std::errc() || ptr != end) return -1;
  return idx;
}

struct FlatClient {
  int config_index = 0;
  std::string role;
  double epsilon = kInf;
  int batch_size = 10;
  int k = 1;
  std::optional<std::int64_t> max_local_iterations;
};

std::vector<FlatClient> flatten(const ExperimentConfig& cfg) {
  std::vector<FlatClient> out;
  for (std::size_t g = 0; g < cfg.clients.size(); ++g) {
    const ClientGroup& grp = cfg.clients[g];
    for (int i = 0; i < grp.count; ++i) {
      out.push_back(FlatClient{static_cast<int>(g), grp.role, grp.epsilon,
                               grp.batch_size, grp.k,
                               grp.max_local_iterations});
    }
  }
  return out;
}

LabeledDataset head(const LabeledDataset& data, std::size_t n) {
  LabeledDataset out;
  const std::size_t m = std::min(n, data.size());
  out.features.assign(data.features.begin(), data.features.begin() + m);
  out.labels.assign(data.labels.begin(), data.labels.begin() + m);
  return out;
}

ParameterVector train_centralized(const LabeledDataset& data,
                                  const HyperParams& hyper, int batch_size,
                                  std::int64_t iterations, RandomSource rng) {
  ParameterVector w(data.dim(), 0.0);
  const std::size_t b = std::min<std::size_t>(batch_size, data.size());
  for (std::int64_t t = 1; t <= iterations; ++t) {
    const LabeledDataset batch = bootstrap_sample(data, b, rng);
    const ParameterVector grad = logistic_gradient(w, batch, hyper.lambda);
    w = sgd_step(w, grad, learning_rate(t, hyper.eta0));
  }
  return w;
}

void write_metrics_header(std::ostream& os, int n_clients) {
  os << "wall_ms,iteration,training_error,validation_error";
  for (int i = 0; i < n_clients; ++i) os << ",difficulty_client" << i;
  os << "\n";
}

void write_metrics_row(std::ostream& os, const BrokerMetricsRow& row,
                       int n_clients) {
  os << row.wall_ms << ',' << row.iteration << ','
     << format_double(row.training_error) << ','
     << format_double(row.validation_error);
  for (int i = 0; i < n_clients; ++i) {
    const int d = i < static_cast<int>(row.difficulties.size())
                      ? row.difficulties[i]
                      : -1;
    os << ',' << d;
  }
  os << '\n';
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         bool require_clients) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config root must be an object");

  ExperimentConfig cfg;
  cfg.scenario = get_or<std::string>(doc, "scenario", cfg.scenario);
  cfg.model_id = get_or<std::string>(doc, "model_id", cfg.model_id);
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);

  if (const json* d = find_key(doc, "dataset")) {
    if (!d->is_object()) throw ConfigError("dataset must be an object");
    const std::string kind = get_or<std::string>(*d, "kind", "synthetic");
    if (kind == "synthetic") {
      cfg.dataset.kind = DatasetSpec::Kind::synthetic;
    } else if (kind == "csv") {
      cfg.dataset.kind = DatasetSpec::Kind::csv;
    } else {
      throw ConfigError("dataset.kind must be \"synthetic\" or \"csv\"");
    }
    cfg.dataset.path = get_or<std::string>(*d, "path", "");
    cfg.dataset.d = get_or<std::size_t>(*d, "d", cfg.dataset.d);
    cfg.dataset.n = get_or<std::size_t>(*d, "n", cfg.dataset.n);
    cfg.dataset.separation =
        get_or<double>(*d, "separation", cfg.dataset.separation);
    cfg.dataset.feature_scale =
        get_or<double>(*d, "feature_scale", cfg.dataset.feature_scale);
  }
  cfg.train_frac = get_or<double>(doc, "train_frac", cfg.train_frac);
  cfg.shard_size = get_or<std::size_t>(doc, "shard_size", cfg.shard_size);
  cfg.validation_size =
      get_or<std::size_t>(doc, "validation_size", cfg.validation_size);

  if (const json* h = find_key(doc, "hyper")) {
    if (!h->is_object()) throw ConfigError("hyper must be an object");
    cfg.hyper.eta0 = get_or<double>(*h, "eta0", cfg.hyper.eta0);
    cfg.hyper.lambda = get_or<double>(*h, "lambda", cfg.hyper.lambda);
  }

  if (const json* cl = find_key(doc, "clients")) {
    if (!cl->is_array()) throw ConfigError("clients must be an array");
    for (const json& g : *cl) {
      if (!g.is_object()) throw ConfigError("client group must be an object");
      ClientGroup grp;
      grp.role = get_or<std::string>(g, "role", grp.role);
      grp.count = get_or<int>(g, "count", grp.count);
      if (const json* e = find_key(g, "epsilon")) grp.epsilon = parse_epsilon(*e);
      grp.batch_size = get_or<int>(g, "batch_size", grp.batch_size);
      grp.k = get_or<int>(g, "k", grp.k);
      if (find_key(g, "max_local_iterations")) {
        grp.max_local_iterations =
            get_or<std::int64_t>(g, "max_local_iterations", 0);
      }
      cfg.clients.push_back(std::move(grp));
    }
  }

  std::optional<std::int64_t> client_timeout;
  if (const json* b = find_key(doc, "broker")) {
    if (!b->is_object()) throw ConfigError("broker must be an object");
    cfg.min_clients = get_or<int>(*b, "min_clients", cfg.min_clients);
    if (find_key(*b, "max_clients")) {
      cfg.max_clients = get_or<int>(*b, "max_clients", 0);
    }
    cfg.max_iterations =
        get_or<std::int64_t>(*b, "max_iterations", cfg.max_iterations);
    BrokerConfig& bc = cfg.broker;
    bc.validation_rate =
        get_or<double>(*b, "validation_rate", bc.validation_rate);
    bc.roni_threshold = get_or<double>(*b, "roni_threshold", bc.roni_threshold);
    bc.admission_difficulty =
        get_or<int>(*b, "admission_difficulty", bc.admission_difficulty);
    bc.update_difficulty =
        get_or<int>(*b, "update_difficulty", bc.update_difficulty);
    bc.difficulty_cap = get_or<int>(*b, "difficulty_cap", bc.difficulty_cap);
    if (find_key(*b, "client_timeout")) {
      client_timeout = get_or<std::int64_t>(*b, "client_timeout", 0);
    }
    bc.metrics_every = get_or<int>(*b, "metrics_every", bc.metrics_every);
  }

  if (const json* t = find_key(doc, "transport")) {
    if (!t->is_object()) throw ConfigError("transport must be an object");
    const std::string kind = get_or<std::string>(*t, "kind", "in_process");
    if (kind == "in_process") {
      cfg.transport.kind = TransportConfig::Kind::in_process;
    } else if (kind == "tcp") {
      cfg.transport.kind = TransportConfig::Kind::tcp;
    } else {
      throw ConfigError("transport.kind must be \"in_process\" or \"tcp\"");
    }
    cfg.transport.latency_ms_max =
        get_or<double>(*t, "latency_ms_max", cfg.transport.latency_ms_max);
    cfg.transport.seed = get_or<std::uint64_t>(*t, "seed", cfg.transport.seed);
  }

  if (const json* s = find_key(doc, "sim")) {
    if (!s->is_object()) throw ConfigError("sim must be an object");
    cfg.sim.pow_ms_per_attempt =
        get_or<double>(*s, "pow_ms_per_attempt", cfg.sim.pow_ms_per_attempt);
    cfg.sim.max_real_difficulty =
        get_or<int>(*s, "max_real_difficulty", cfg.sim.max_real_difficulty);
    cfg.sim.max_steps = get_or<std::int64_t>(*s, "max_steps", cfg.sim.max_steps);
  }

  cfg.attacker_rounds =
      get_or<std::int64_t>(doc, "attacker_rounds", cfg.attacker_rounds);
  cfg.victim_optimal_iterations = get_or<std::int64_t>(
      doc, "victim_optimal_iterations", cfg.victim_optimal_iterations);
  cfg.think_ms = get_or<double>(doc, "think_ms", cfg.think_ms);
  cfg.poll_backoff_ms =
      get_or<double>(doc, "poll_backoff_ms", cfg.poll_backoff_ms);
  cfg.port = get_or<int>(doc, "port", cfg.port);

  cfg.broker.client_timeout = client_timeout.value_or(
      cfg.transport.kind == TransportConfig::Kind::in_process ? 1000 : 30000);

  validate(cfg, require_clients);
  return cfg;
}

PreparedTask prepare_task(const ExperimentConfig& cfg, RandomSource& master,
                          bool normalize_csv) {
  PreparedTask pt;
  LabeledDataset full;
  if (cfg.dataset.kind == DatasetSpec::Kind::synthetic) {
    full = synth_dataset(cfg.dataset.d, cfg.dataset.n, cfg.dataset.separation,
                         master.derive("data").seed(), cfg.dataset.feature_scale);
  } else {
    try {
      full = load_csv_dataset(cfg.dataset.path);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
  }
  std::tie(pt.train, pt.test) =
      split_train_test(full, cfg.train_frac, master.derive("split").seed());
  if (cfg.dataset.kind == DatasetSpec::Kind::csv && normalize_csv) {
    const Normalizer norm = Normalizer::fit(pt.train, 1);
    norm.apply(&pt.train);
    norm.apply(&pt.test);
  }
  if (pt.test.size() == 0) throw ConfigError("test split is empty");
  pt.validation = head(pt.test, cfg.validation_size);

  const int total = static_cast<int>(flatten(cfg).size());
  pt.task.model_id = cfg.model_id;
  pt.task.dim = static_cast<int>(pt.train.dim());
  pt.task.min_clients = cfg.min_clients;
  pt.task.max_clients = cfg.max_clients.value_or(std::max(total, 1));
  pt.task.max_iterations = cfg.max_iterations;
  pt.task.validation_set = pt.validation;

  pt.broker = cfg.broker;
  pt.broker.seed = master.derive("broker").seed();
  pt.broker.max_real_difficulty =
      cfg.transport.kind == TransportConfig::Kind::in_process
          ? cfg.sim.max_real_difficulty
          : cfg.broker.difficulty_cap;
  return pt;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::string& out_dir) {
  validate(cfg);
  ExperimentResult result;
  result.scenario = cfg.scenario;
  result.model_id = cfg.model_id;
  result.seed = cfg.seed;

  RandomSource master(cfg.seed);
  const std::vector<FlatClient> flat = flatten(cfg);
  const int total = static_cast<int>(flat.size());
  const bool in_process = cfg.transport.kind == TransportConfig::Kind::in_process;

  PreparedTask pt = prepare_task(cfg, master, true);
  const LabeledDataset& train = pt.train;
  const LabeledDataset& test = pt.test;
  const LabeledDataset& validation = pt.validation;

  Broker broker(pt.task, pt.broker);
  broker.set_metrics_dataset(std::make_shared<const LabeledDataset>(train));

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    result.metrics_csv_path =
        (std::filesystem::path(out_dir) / "metrics.csv").string();
    csv.open(result.metrics_csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot open " + result.metrics_csv_path);
    write_metrics_header(csv, total);
  }
  broker.set_metrics_sink([&](const BrokerMetricsRow& row) {
    result.metrics.push_back(row);
    if (csv.is_open()) {
      write_metrics_row(csv, row, total);
      csv.flush();
    }
  });

  std::vector<LabeledDataset> shards(total);
  std::vector<ClientConfig> configs(total);
  for (int i = 0; i < total; ++i) {
    const FlatClient& fc = flat[i];
    RandomSource shard_rng = master.derive("shard/" + std::to_string(i));
    LabeledDataset shard = bootstrap_sample(
        train, std::min(cfg.shard_size, train.size()), shard_rng);
    if (wants_flipped_shard(fc.role)) shard = make_poisoned_dataset(shard);
    shards[i] = shard;

    ClientConfig cc;
    cc.model_id = cfg.model_id;
    cc.privacy = PrivacyConfig{fc.epsilon, fc.batch_size, fc.k};
    cc.hyper = cfg.hyper;
    cc.hyper.batch_size = fc.batch_size;
    cc.data = std::move(shard);
    cc.seed = master.derive("client/" + std::to_string(i)).seed();
    cc.max_local_iterations = fc.max_local_iterations;
    cc.poll_backoff_ms = cfg.poll_backoff_ms;
    cc.think_ms = cfg.think_ms;
    configs[i] = std::move(cc);
  }

  std::vector<ClientResult> honest_results(total);
  std::vector<AttackerResult> attacker_results(total);

  auto body_for = [&](int i) {
    return [&, i](ClientConnection& conn) {
      const FlatClient& fc = flat[i];
      if (is_attacker(fc.role)) {
        AttackerConfig ac;
        ac.base = configs[i];
        ac.send_zero_gradients = fc.role == "attacker_zero";
        ac.rounds = cfg.attacker_rounds;
        attacker_results[i] = run_inversion_attacker(ac, conn);
      } else {
        honest_results[i] = run_honest_client(configs[i], conn);
      }
    };
  };

  if (in_process) {
    SimConfig scfg = cfg.sim;
    scfg.latency_ms_max = cfg.transport.latency_ms_max;
    scfg.seed = cfg.transport.seed != 0
                    ? cfg.transport.seed
                    : master.derive("transport").seed();
    SimNet net(broker, scfg);
    for (int i = 0; i < total; ++i) net.add_client(body_for(i));
    net.run();
    net.rethrow_client_error();
    result.steps = net.steps();
    result.virtual_ms = net.now_ms();
    result.hit_step_limit = net.hit_step_limit();
  } else {
    TcpBrokerServer server(broker, cfg.transport.latency_ms_max,
                           cfg.transport.seed != 0
                               ? cfg.transport.seed
                               : master.derive("transport").seed());
    server.start(0);
    std::vector<std::thread> threads;
    threads.reserve(total);
    for (int i = 0; i < total; ++i) {
      threads.emplace_back([&, i] {
        TcpClientConnection conn(server.address());
        body_for(i)(conn);
      });
    }
    for (std::thread& t : threads) t.join();
    server.stop();
  }
  if (csv.is_open()) csv.close();

  result.complete = broker.complete();
  result.iterations = broker.iteration();
  result.final_model = result.complete ? broker.publish_model() : broker.model();
  result.final_training_error = classification_error(result.final_model, train);
  result.final_validation_error =
      classification_error(result.final_model, validation);
  result.penalty_events = broker.penalty_events();

  const std::vector<int> difficulties = broker.difficulties_by_index();
  std::map<int, std::string> role_by_admission;
  for (int i = 0; i < total; ++i) {
    const FlatClient& fc = flat[i];
    ClientOutcome out;
    out.config_index = i;
    out.role = fc.role;
    if (is_attacker(fc.role)) {
      const AttackerResult& r = attacker_results[i];
      out.token = r.client_token;
      out.exit = to_string(r.exit);
      out.local_iterations = r.rounds_completed;
      out.detail = r.detail;
    } else {
      const ClientResult& r = honest_results[i];
      out.token = r.client_token;
      out.exit = to_string(r.exit);
      out.local_iterations = r.local_iterations;
      out.detail = r.detail;
    }
    out.admission_index = parse_admission_index(out.token);
    if (out.admission_index >= 0 &&
        out.admission_index < static_cast<int>(difficulties.size())) {
      out.final_difficulty = difficulties[out.admission_index];
    }
    for (const PenaltyEvent& ev : result.penalty_events) {
      if (ev.client_index == out.admission_index) ++out.penalty_count;
    }
    if (out.admission_index >= 0) role_by_admission[out.admission_index] = fc.role;
    result.clients.push_back(std::move(out));
  }

  for (const PenaltyEvent& ev : result.penalty_events) {
    if (!result.first_penalty_iteration ||
        ev.iteration < *result.first_penalty_iteration) {
      result.first_penalty_iteration = ev.iteration;
    }
    auto it = role_by_admission.find(ev.client_index);
    if (it != role_by_admission.end() && it->second == "poisoner" &&
        (!result.first_poisoner_penalty_iteration ||
         ev.iteration < *result.first_poisoner_penalty_iteration)) {
      result.first_poisoner_penalty_iteration = ev.iteration;
    }
  }

  int victim = -1;
  int attacker = -1;
  for (int i = 0; i < total; ++i) {
    if (victim < 0 && flat[i].role == "victim") victim = i;
    if (attacker < 0 && is_attacker(flat[i].role)) attacker = i;
  }
  if (victim >= 0 && attacker >= 0 &&
      !attacker_results[attacker].shadow.empty()) {
    const ParameterVector victim_optimal = train_centralized(
        shards[victim], cfg.hyper, flat[victim].batch_size,
        cfg.victim_optimal_iterations, master.derive("victim_optimal"));
    result.reconstruction_error = reconstruction_error(
        attacker_results[attacker].shadow, victim_optimal, test);
  }

  if (!out_dir.empty()) {
    result.summary_json_path =
        (std::filesystem::path(out_dir) / "summary.json").string();
    std::ofstream summary(result.summary_json_path, std::ios::trunc);
    summary << summary_to_json(result) << "\n";

    result.model_json_path =
        (std::filesystem::path(out_dir) / "model.json").string();
    std::ofstream model_out(result.model_json_path, std::ios::trunc);
    json model_doc;
    model_doc["model_id"] = result.model_id;
    model_doc["dim"] = result.final_model.size();
    model_doc["complete"] = result.complete;
    model_doc["weights"] = result.final_model;
    model_out << model_doc.dump(2) << "\n";
  }
  return result;
}

std::string summary_to_json(const ExperimentResult& result) {
  json doc;
  doc["scenario"] = result.scenario;
  doc["model_id"] = result.model_id;
  doc["seed"] = result.seed;
  doc["complete"] = result.complete;
  doc["iterations"] = result.iterations;
  doc["final_training_error"] = result.final_training_error;
  doc["final_validation_error"] = result.final_validation_error;
  if (result.reconstruction_error) {
    doc["reconstruction_error"] = *result.reconstruction_error;
  }
  if (result.first_penalty_iteration) {
    doc["first_penalty_iteration"] = *result.first_penalty_iteration;
  }
  if (result.first_poisoner_penalty_iteration) {
    doc["first_poisoner_penalty_iteration"] =
        *result.first_poisoner_penalty_iteration;
  }
  doc["steps"] = result.steps;
  doc["virtual_ms"] = result.virtual_ms;
  doc["hit_step_limit"] = result.hit_step_limit;

  doc["clients"] = json::array();
  for (const ClientOutcome& c : result.clients) {
    json jc;
    jc["config_index"] = c.config_index;
    jc["role"] = c.role;
    jc["client_token"] = c.token;
    jc["admission_index"] = c.admission_index;
    jc["exit"] = c.exit;
    jc["local_iterations"] = c.local_iterations;
    jc["final_difficulty"] = c.final_difficulty;
    jc["penalties"] = c.penalty_count;
    if (!c.detail.empty()) jc["detail"] = c.detail;
    doc["clients"].push_back(std::move(jc));
  }
  doc["penalty_events"] = json::array();
  for (const PenaltyEvent& ev : result.penalty_events) {
    json je;
    je["wall_ms"] = ev.wall_ms;
    je["iteration"] = ev.iteration;
    je["client_index"] = ev.client_index;
    je["new_difficulty"] = ev.new_difficulty;
    je["blacklisted"] = ev.blacklisted;
    doc["penalty_events"].push_back(std::move(je));
  }
  doc["model"] = result.final_model;
  return doc.dump(2);
}

namespace scenarios {
namespace {

ExperimentConfig base_synthetic(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.dataset.kind = DatasetSpec::Kind::synthetic;
  cfg.dataset.d = 10;
  cfg.dataset.n = 5000;
  cfg.dataset.separation = 6.0;
  cfg.train_frac = 0.7;
  cfg.shard_size = 1000;
  cfg.validation_size = 1000;
  cfg.hyper = HyperParams{0.3, 0.0, 10};
  cfg.max_iterations = 2000;
  cfg.broker.validation_rate = 0.0;
  cfg.broker.admission_difficulty = 4;
  cfg.broker.update_difficulty = 0;
  cfg.broker.client_timeout = 2000;  // virtual ms
  cfg.broker.metrics_every = 10;
  cfg.transport.kind = TransportConfig::Kind::in_process;
  cfg.transport.latency_ms_max = 0.0;
  return cfg;
}

}  // namespace

ExperimentConfig convergence(double epsilon, int batch_size,
                             std::uint64_t seed) {
  ExperimentConfig cfg = base_synthetic(seed);
  cfg.scenario = "convergence";
  cfg.shard_size = 2000;
  // Small feature magnitudes leave class overlap untouched but make the
  // privacy noise (calibrated to absolute sensitivity) dominate small-batch
  // gradients, which is the regime the batch-size sweep is about.
  cfg.dataset.feature_scale = 0.015;
  cfg.clients = {ClientGroup{"honest", 1, epsilon, batch_size, 1, {}}};
  cfg.min_clients = 1;
  return cfg;
}

ExperimentConfig scaling(int n_clients, std::uint64_t seed) {
  ExperimentConfig cfg = base_synthetic(seed);
  cfg.scenario = "scaling";
  cfg.clients = {ClientGroup{"honest", n_clients, kInf, 10, n_clients, {}}};
  cfg.min_clients = n_clients;
  return cfg;
}

ExperimentConfig inversion(double victim_epsilon, int bystanders,
                           double latency_ms_max, std::uint64_t seed) {
  ExperimentConfig cfg = base_synthetic(seed);
  cfg.scenario = "inversion";
  // Same rationale as the convergence scenario: smaller feature magnitudes
  // make the privacy noise visible in the recovered deltas at moderate
  // epsilon without touching the class geometry the shadow model must learn.
  cfg.dataset.feature_scale = 0.5;
  const int k = 2 + bystanders;
  cfg.clients = {ClientGroup{"attacker_zero", 1, kInf, 1, k, {}},
                 ClientGroup{"victim", 1, victim_epsilon, 1, k, {}}};
  if (bystanders > 0) {
    cfg.clients.push_back(ClientGroup{"bystander", bystanders, kInf, 1, k, {}});
  }
  cfg.min_clients = k;
  cfg.transport.latency_ms_max = latency_ms_max;
  cfg.attacker_rounds = 6000;
  cfg.victim_optimal_iterations = 2000;
  return cfg;
}

ExperimentConfig poisoning(double poison_fraction, double roni_threshold,
                           std::uint64_t seed) {
  ExperimentConfig cfg = base_synthetic(seed);
  cfg.scenario = "poisoning";
  const int total = 8;
  const int poisoners =
      std::clamp<int>(std::lround(poison_fraction * total), 0, total);
  const int honest = total - poisoners;
  if (honest > 0) cfg.clients.push_back(ClientGroup{"honest", honest, kInf, 10, 2, {}});
  if (poisoners > 0) {
    cfg.clients.push_back(ClientGroup{"poisoner", poisoners, kInf, 10, 2, {}});
  }
  cfg.min_clients = 2;
  cfg.max_iterations = 1500;
  // A slightly hotter schedule keeps late-iteration deltas large enough for
  // the validation set to resolve each update's influence.
  cfg.hyper.eta0 = 0.5;
  cfg.broker.validation_rate = 0.1;
  cfg.broker.roni_threshold = roni_threshold;
  return cfg;
}

ExperimentConfig honest_noise(double epsilon, double roni_threshold,
                              std::uint64_t seed) {
  ExperimentConfig cfg = base_synthetic(seed);
  cfg.scenario = "honest_noise";
  cfg.clients = {ClientGroup{"honest", 4, epsilon, 10, 2, {}}};
  cfg.min_clients = 2;
  cfg.max_iterations = 1000;
  cfg.broker.validation_rate = 0.1;
  cfg.broker.roni_threshold = roni_threshold;
  return cfg;
}

}  // namespace scenarios

void write_figure_csvs(const std::string& out_dir,
                       const std::function<void(const std::string&)>& log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  auto note = [&](const std::string& line) {
    if (log) log(line);
  };
  auto eps_label = [](double eps) {
    return std::isinf(eps) ? std::string("inf") : format_double(eps);
  };

  {
    std::ofstream os(fs::path(out_dir) / "convergence_epsilon.csv");
    os << "epsilon,batch_size,seed,iteration,wall_ms,training_error,"
          "validation_error\n";
    const std::vector<std::pair<double, int>> grid = {
        {kInf, 10}, {5.0, 10}, {1.0, 10}, {0.5, 10}, {0.5, 1}};
    for (const auto& [eps, b] : grid) {
      for (std::uint64_t seed : seeds) {
        note("convergence eps=" + eps_label(eps) + " b=" + std::to_string(b) +
             " seed=" + std::to_string(seed));
        const ExperimentResult r =
            run_experiment(scenarios::convergence(eps, b, seed), "");
        for (const BrokerMetricsRow& row : r.metrics) {
          os << eps_label(eps) << ',' << b << ',' << seed << ','
             << row.iteration << ',' << row.wall_ms << ','
             << format_double(row.training_error) << ','
             << format_double(row.validation_error) << "\n";
        }
      }
    }
  }

  {
    std::ofstream os(fs::path(out_dir) / "scaling_clients.csv");
    os << "n_clients,seed,iteration,wall_ms,training_error,validation_error,"
          "mean_local_iterations\n";
    for (int n : {1, 2, 4, 8}) {
      for (std::uint64_t seed : seeds) {
        note("scaling n=" + std::to_string(n) + " seed=" +
             std::to_string(seed));
        const ExperimentResult r =
            run_experiment(scenarios::scaling(n, seed), "");
        double mean_local = 0.0;
        for (const ClientOutcome& c : r.clients) {
          mean_local += static_cast<double>(c.local_iterations);
        }
        mean_local /= std::max<std::size_t>(1, r.clients.size());
        for (const BrokerMetricsRow& row : r.metrics) {
          os << n << ',' << seed << ',' << row.iteration << ',' << row.wall_ms
             << ',' << format_double(row.training_error) << ','
             << format_double(row.validation_error) << ','
             << format_double(mean_local) << "\n";
        }
      }
    }
  }

  {
    std::ofstream os(fs::path(out_dir) / "inversion_epsilon.csv");
    os << "epsilon,seed,reconstruction_error\n";
    for (double eps : {0.5, 1.0, 2.0, 5.0, kInf}) {
      for (std::uint64_t seed : seeds) {
        note("inversion eps=" + eps_label(eps) + " seed=" +
             std::to_string(seed));
        const ExperimentResult r =
            run_experiment(scenarios::inversion(eps, 0, 0.0, seed), "");
        os << eps_label(eps) << ',' << seed << ','
           << format_double(r.reconstruction_error.value_or(-1.0)) << "\n";
      }
    }
  }

  {
    std::ofstream os(fs::path(out_dir) / "inversion_bystanders.csv");
    os << "bystanders,seed,reconstruction_error\n";
    for (int m : {0, 1, 3}) {
      for (std::uint64_t seed : seeds) {
        note("inversion bystanders=" + std::to_string(m) + " seed=" +
             std::to_string(seed));
        const ExperimentResult r =
            run_experiment(scenarios::inversion(kInf, m, 50.0, seed), "");
        os << m << ',' << seed << ','
           << format_double(r.reconstruction_error.value_or(-1.0)) << "\n";
      }
    }
  }

  {
    std::ofstream curves(fs::path(out_dir) / "poisoning_curves.csv");
    curves << "poison_fraction,seed,iteration,wall_ms,training_error,"
              "validation_error\n";
    std::ofstream pen(fs::path(out_dir) / "poisoning_penalties.csv");
    pen << "poison_fraction,roni_threshold,seed,final_training_error,"
           "poisoner_penalties,honest_penalties,first_poisoner_penalty_"
           "iteration\n";
    for (double frac : {0.0, 0.25, 0.5}) {
      for (std::uint64_t seed : seeds) {
        note("poisoning frac=" + format_double(frac) + " seed=" +
             std::to_string(seed));
        const ExperimentResult r =
            run_experiment(scenarios::poisoning(frac, 0.02, seed), "");
        for (const BrokerMetricsRow& row : r.metrics) {
          curves << format_double(frac) << ',' << seed << ',' << row.iteration
                 << ',' << row.wall_ms << ','
                 << format_double(row.training_error) << ','
                 << format_double(row.validation_error) << "\n";
        }
      }
    }
    for (double frac : {0.25, 0.5}) {
      for (double threshold : {0.005, 0.02, 0.05}) {
        for (std::uint64_t seed : seeds) {
          note("poisoning frac=" + format_double(frac) + " threshold=" +
               format_double(threshold) + " seed=" + std::to_string(seed));
          const ExperimentResult r =
              run_experiment(scenarios::poisoning(frac, threshold, seed), "");
          int poisoner_pen = 0;
          int honest_pen = 0;
          for (const ClientOutcome& c : r.clients) {
            if (c.role == "poisoner") {
              poisoner_pen += c.penalty_count;
            } else {
              honest_pen += c.penalty_count;
            }
          }
          pen << format_double(frac) << ',' << format_double(threshold) << ','
              << seed << ',' << format_double(r.final_training_error) << ','
              << poisoner_pen << ',' << honest_pen << ','
              << (r.first_poisoner_penalty_iteration
                      ? std::to_string(*r.first_poisoner_penalty_iteration)
                      : std::string("-1"))
              << "\n";
        }
      }
    }
  }
}

}  // namespace gradbroker
