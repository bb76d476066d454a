// Copyright 2026 The gradbroker Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exercises the shared library through its public C surface only; nothing
// here may include project headers besides gradbroker.h.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>

#include "gradbroker.h"
#include "json.hpp"

using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("gb_capi_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

// Claims the returned C string and frees it on scope exit.
struct OwnedString {
  char* ptr = nullptr;

  ~OwnedString() { gb_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

const char* kTinyExperiment = R"({
  "scenario": "capi",
  "model_id": "m-capi",
  "seed": 21,
  "dataset": {"kind": "synthetic", "d": 3, "n": 300, "separation": 6.0},
  "shard_size": 100,
  "validation_size": 50,
  "clients": [{"role": "honest", "count": 2, "batch_size": 8, "k": 2}],
  "broker": {"min_clients": 2, "max_iterations": 40,
             "validation_rate": 0.0, "admission_difficulty": 1,
             "client_timeout": 100000, "metrics_every": 10},
  "transport": {"kind": "in_process"}
})";

const char* kBrokerOnly = R"({
  "scenario": "capi-broker",
  "model_id": "m-serve",
  "seed": 5,
  "dataset": {"kind": "synthetic", "d": 3, "n": 240, "separation": 6.0},
  "validation_size": 40,
  "broker": {"min_clients": 1, "max_iterations": 25,
             "validation_rate": 0.0, "admission_difficulty": 1,
             "metrics_every": 10},
  "port": 0
})";

std::string client_json(const std::string& address, int d) {
  json doc;
  doc["broker_address"] = address;
  doc["model_id"] = "m-serve";
  doc["seed"] = 9;
  doc["data"] = {{"kind", "synthetic"}, {"d", d}, {"n", 240}};
  doc["batch_size"] = 8;
  doc["k"] = 1;
  doc["think_ms"] = 0.2;
  return doc.dump();
}

}  // namespace

TEST_CASE("version and error strings are always present") {
  REQUIRE(gb_version() != nullptr);
  CHECK(std::string(gb_version()) == "1.0.0");
  REQUIRE(gb_last_error() != nullptr);

  std::string fresh = "unset";
  std::thread([&] { fresh = gb_last_error(); }).join();
  CHECK(fresh.empty());

  gb_string_free(nullptr);
}

TEST_CASE("error codes separate config from runtime failures") {
  CHECK(GB_OK == 0);
  CHECK(GB_ERR_CONFIG == 2);
  CHECK(GB_ERR_RUNTIME == 3);

  CHECK(gb_experiment_run(nullptr, nullptr, nullptr) == GB_ERR_CONFIG);
  CHECK_FALSE(std::string(gb_last_error()).empty());

  CHECK(gb_experiment_run("not json", nullptr, nullptr) == GB_ERR_CONFIG);
  CHECK(std::string(gb_last_error()).find("invalid JSON") != std::string::npos);

  CHECK(gb_experiment_run("{}", nullptr, nullptr) == GB_ERR_CONFIG);
  CHECK(std::string(gb_last_error()).find("clients") != std::string::npos);

  CHECK(gb_experiment_figures(nullptr) == GB_ERR_CONFIG);
  CHECK(gb_experiment_figures("") == GB_ERR_CONFIG);

  gb_broker* out = nullptr;
  CHECK(gb_broker_start("{\"broker\": {\"min_clients\": 0}}", &out) ==
        GB_ERR_CONFIG);
  CHECK(out == nullptr);
  CHECK(gb_broker_start(nullptr, &out) == GB_ERR_CONFIG);

  CHECK(gb_broker_wait(nullptr) == GB_ERR_CONFIG);
  CHECK(gb_broker_complete(nullptr) == 0);
  CHECK(gb_broker_stop(nullptr) == GB_ERR_CONFIG);
  CHECK(std::string(gb_broker_address(nullptr)).empty());
  gb_broker_free(nullptr);

  CHECK(gb_client_run(nullptr, nullptr) == GB_ERR_CONFIG);
  CHECK(gb_client_run("{}", nullptr) == GB_ERR_CONFIG);
  CHECK(std::string(gb_last_error()).find("broker_address") !=
        std::string::npos);
  CHECK(gb_client_run("{\"broker_address\": \"127.0.0.1:1\"}", nullptr) ==
        GB_ERR_CONFIG);  // missing data section
  CHECK(gb_client_run(
            "{\"broker_address\": \"127.0.0.1:1\", "
            "\"data\": {\"kind\": \"synthetic\"}, \"epsilon\": -1}",
            nullptr) == GB_ERR_CONFIG);
}

TEST_CASE("experiment run writes artifacts and a summary") {
  TempDir dir;
  OwnedString summary;
  const int rc = gb_experiment_run(kTinyExperiment, dir.str().c_str(),
                                   &summary.ptr);
  REQUIRE(rc == GB_OK);
  CHECK(std::string(gb_last_error()).empty());
  REQUIRE(summary.ptr != nullptr);

  const json doc = json::parse(summary.str());
  CHECK(doc.at("scenario") == "capi");
  CHECK(doc.at("complete") == true);
  CHECK(doc.at("iterations") == 40);
  CHECK(doc.at("clients").size() == 2);
  CHECK(doc.at("model").size() == 3);

  CHECK(std::filesystem::exists(dir.path / "metrics.csv"));
  CHECK(std::filesystem::exists(dir.path / "summary.json"));
  CHECK(std::filesystem::exists(dir.path / "model.json"));

  SUBCASE("summary is identical without an output directory") {
    OwnedString again;
    REQUIRE(gb_experiment_run(kTinyExperiment, nullptr, &again.ptr) == GB_OK);
    CHECK(again.str() == summary.str());
  }
}

TEST_CASE("standalone broker serves tcp clients") {
  gb_broker* broker = nullptr;
  REQUIRE(gb_broker_start(kBrokerOnly, &broker) == GB_OK);
  REQUIRE(broker != nullptr);

  const std::string address = gb_broker_address(broker);
  CHECK(address.rfind("127.0.0.1:", 0) == 0);
  CHECK(gb_broker_complete(broker) == 0);

  OwnedString premature;
  CHECK(gb_broker_model_json(broker, &premature.ptr) == GB_ERR_RUNTIME);
  CHECK_FALSE(std::string(gb_last_error()).empty());

  SUBCASE("a mismatched client is rejected cleanly") {
    OwnedString result;
    CHECK(gb_client_run(client_json(address, 4).c_str(), &result.ptr) ==
          GB_ERR_RUNTIME);
    REQUIRE(result.ptr != nullptr);
    const json doc = json::parse(result.str());
    CHECK(doc.at("exit") == "rejected");
    CHECK(doc.at("detail").get<std::string>().find("schema_mismatch") !=
          std::string::npos);
  }

  SUBCASE("a matching client trains the task to completion") {
    OwnedString result;
    REQUIRE(gb_client_run(client_json(address, 3).c_str(), &result.ptr) ==
            GB_OK);
    REQUIRE(result.ptr != nullptr);
    const json doc = json::parse(result.str());
    CHECK(doc.at("exit") == "complete");
    CHECK(doc.at("local_iterations") == 25);
    CHECK(doc.at("client_token").get<std::string>().rfind("c0-", 0) == 0);
    REQUIRE(doc.at("model").size() == 3);

    CHECK(gb_broker_wait(broker) == GB_OK);
    CHECK(gb_broker_complete(broker) == 1);
    OwnedString model;
    REQUIRE(gb_broker_model_json(broker, &model.ptr) == GB_OK);
    const json mdoc = json::parse(model.str());
    CHECK(mdoc.at("model_id") == "m-serve");
    CHECK(mdoc.at("dim") == 3);
    CHECK(mdoc.at("complete") == true);
    REQUIRE(mdoc.at("weights").size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(mdoc.at("weights")[i].get<double>() ==
            doc.at("model")[i].get<double>());
    }
  }

  CHECK(gb_broker_stop(broker) == GB_OK);
  CHECK(gb_broker_stop(broker) == GB_OK);
  gb_broker_free(broker);
}

TEST_CASE("client run reports transport failures as runtime errors") {
  OwnedString result;
  const int rc = gb_client_run(client_json("127.0.0.1:1", 3).c_str(),
                               &result.ptr);
  CHECK(rc == GB_ERR_RUNTIME);
  CHECK_FALSE(std::string(gb_last_error()).empty());
  // Connecting fails before a client run starts, so no result is produced.
  CHECK(result.ptr == nullptr);
}
