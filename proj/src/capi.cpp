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
#include "gradbroker.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "adversary.hpp"
#include "client.hpp"
#include "dataset.hpp"
#include "experiment.hpp"
#include "tcp_transport.hpp"

namespace {

using nlohmann::json;
using namespace gradbroker;

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return GB_OK;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return GB_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GB_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return GB_ERR_RUNTIME;
  }
}

const json* find_key(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double parse_epsilon_field(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "infinity") {
      return std::numeric_limits<double>::infinity();
    }
    throw ConfigError("epsilon string must be \"inf\"");
  }
  if (!v.is_number()) throw ConfigError("epsilon must be a number or \"inf\"");
  const double eps = v.get<double>();
  if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
  return eps;
}

LabeledDataset load_client_dataset(const json& doc, std::uint64_t seed) {
  const json* d = find_key(doc, "data");
  if (!d || !d->is_object()) throw ConfigError("client config needs \"data\"");
  const std::string kind = d->value("kind", std::string("csv"));
  if (kind == "csv") {
    const std::string path = d->value("path", std::string());
    if (path.empty()) throw ConfigError("data.path is required for csv");
    try {
      return load_csv_dataset(path);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  }
  if (kind == "synthetic") {
    const std::size_t dim = d->value("d", std::size_t{10});
    const std::size_t n = d->value("n", std::size_t{1000});
    const double sep = d->value("separation", 6.0);
    const double scale = d->value("feature_scale", 1.0);
    return synth_dataset(dim, n, sep, RandomSource(seed).derive("data").seed(),
                         scale);
  }
  throw ConfigError("data.kind must be \"csv\" or \"synthetic\"");
}

}  // namespace

struct gb_broker {
  // Declaration order matters: the server holds a reference to the broker.
  std::unique_ptr<Broker> broker;
  std::unique_ptr<TcpBrokerServer> server;
  std::string address;
  bool stopped = false;
};

extern "C" {

const char* gb_version(void) { return "1.0.0"; }

const char* gb_last_error(void) { return g_last_error.c_str(); }

void gb_string_free(char* s) { std::free(s); }

int gb_experiment_run(const char* config_json, const char* out_dir,
                      char** summary_json_out) {
  return guarded([&] {
    if (!config_json) throw ConfigError("config_json is NULL");
    const ExperimentConfig cfg = parse_experiment_config(config_json);
    const ExperimentResult result =
        run_experiment(cfg, out_dir ? out_dir : "");
    if (summary_json_out) *summary_json_out = dup_string(summary_to_json(result));
  });
}

int gb_experiment_figures(const char* out_dir) {
  return guarded([&] {
    if (!out_dir || !*out_dir) throw ConfigError("out_dir is required");
    write_figure_csvs(out_dir);
  });
}

int gb_broker_start(const char* config_json, gb_broker** out) {
  return guarded([&] {
    if (!config_json) throw ConfigError("config_json is NULL");
    if (!out) throw ConfigError("out is NULL");
    ExperimentConfig cfg =
        parse_experiment_config(config_json, /*require_clients=*/false);
    cfg.transport.kind = TransportConfig::Kind::tcp;
    if (cfg.broker.client_timeout < 1000) cfg.broker.client_timeout = 30000;
    RandomSource master(cfg.seed);
    PreparedTask pt = prepare_task(cfg, master, /*normalize_csv=*/false);
    if (!cfg.max_clients && cfg.clients.empty()) pt.task.max_clients = 64;

    auto handle = std::make_unique<gb_broker>();
    handle->broker = std::make_unique<Broker>(pt.task, pt.broker);
    handle->broker->set_metrics_dataset(
        std::make_shared<const LabeledDataset>(pt.train));
    handle->server = std::make_unique<TcpBrokerServer>(
        *handle->broker, cfg.transport.latency_ms_max,
        cfg.transport.seed != 0 ? cfg.transport.seed
                                : master.derive("transport").seed());
    handle->server->start(cfg.port);
    handle->address = handle->server->address();
    *out = handle.release();
  });
}

const char* gb_broker_address(gb_broker* broker) {
  return broker ? broker->address.c_str() : "";
}

int gb_broker_wait(gb_broker* broker) {
  return guarded([&] {
    if (!broker) throw ConfigError("broker is NULL");
    while (!broker->broker->complete()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
}

int gb_broker_complete(gb_broker* broker) {
  return broker && broker->broker->complete() ? 1 : 0;
}

int gb_broker_model_json(gb_broker* broker, char** model_json_out) {
  return guarded([&] {
    if (!broker) throw ConfigError("broker is NULL");
    if (!model_json_out) throw ConfigError("model_json_out is NULL");
    const ParameterVector model = broker->broker->publish_model();
    json doc;
    doc["model_id"] = broker->broker->task().model_id;
    doc["dim"] = model.size();
    doc["complete"] = true;
    doc["weights"] = model;
    *model_json_out = dup_string(doc.dump(2));
  });
}

int gb_broker_stop(gb_broker* broker) {
  return guarded([&] {
    if (!broker) throw ConfigError("broker is NULL");
    if (!broker->stopped) {
      broker->server->stop();
      broker->stopped = true;
    }
  });
}

void gb_broker_free(gb_broker* broker) {
  if (!broker) return;
  if (!broker->stopped) broker->server->stop();
  delete broker;
}

int gb_client_run(const char* config_json, char** result_json_out) {
  return guarded([&] {
    if (!config_json) throw ConfigError("config_json is NULL");
    json doc;
    try {
      doc = json::parse(config_json);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be an object");

    const std::string address = doc.value("broker_address", std::string());
    if (address.empty()) throw ConfigError("broker_address is required");

    ClientConfig cfg;
    cfg.model_id = doc.value("model_id", std::string("task"));
    cfg.seed = doc.value("seed", std::uint64_t{1});
    cfg.privacy.epsilon = std::numeric_limits<double>::infinity();
    if (const json* e = find_key(doc, "epsilon")) {
      cfg.privacy.epsilon = parse_epsilon_field(*e);
    }
    cfg.privacy.batch_size = doc.value("batch_size", 10);
    cfg.privacy.min_clients = doc.value("k", 1);
    cfg.hyper.eta0 = doc.value("eta0", 0.3);
    cfg.hyper.lambda = doc.value("lambda", 0.0);
    cfg.hyper.batch_size = cfg.privacy.batch_size;
    if (find_key(doc, "max_local_iterations")) {
      cfg.max_local_iterations = doc.value("max_local_iterations", std::int64_t{0});
    }
    cfg.poll_backoff_ms = doc.value("poll_backoff_ms", 100.0);
    cfg.think_ms = doc.value("think_ms", 1.0);
    if (cfg.privacy.batch_size < 1 || cfg.privacy.min_clients < 1) {
      throw ConfigError("batch_size and k must be >= 1");
    }
    cfg.data = load_client_dataset(doc, cfg.seed);
    if (doc.value("flip_labels", false)) {
      cfg.data = make_poisoned_dataset(cfg.data);
    }

    TcpClientConnection conn(address);
    const ClientResult result = run_honest_client(cfg, conn);

    if (result_json_out) {
      json rdoc;
      rdoc["exit"] = to_string(result.exit);
      rdoc["client_token"] = result.client_token;
      rdoc["local_iterations"] = result.local_iterations;
      rdoc["last_iteration"] = result.last_iteration;
      if (!result.detail.empty()) rdoc["detail"] = result.detail;
      rdoc["model"] = result.last_model;
      *result_json_out = dup_string(rdoc.dump(2));
    }
    if (result.exit == ClientExit::transport_error ||
        result.exit == ClientExit::rejected) {
      throw std::runtime_error("client run failed: " + result.detail);
    }
  });
}

}  // extern "C"
