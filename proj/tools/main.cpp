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

// Command line front end; everything goes through the public C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gradbroker.h"

namespace {

constexpr int kConfigExit = 2;

bool read_file(const std::string& path, std::string* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  *out = ss.str();
  return true;
}

int report(int rc) {
  if (rc != GB_OK) std::cerr << "error: " << gb_last_error() << "\n";
  return rc;
}

int cmd_broker_serve(const std::string& config_path) {
  std::string config;
  if (!read_file(config_path, &config)) {
    std::cerr << "error: cannot read " << config_path << "\n";
    return kConfigExit;
  }
  gb_broker* broker = nullptr;
  int rc = gb_broker_start(config.c_str(), &broker);
  if (rc != GB_OK) return report(rc);
  std::cout << "serving " << gb_broker_address(broker) << std::endl;
  rc = gb_broker_wait(broker);
  if (rc == GB_OK) {
    char* model = nullptr;
    rc = gb_broker_model_json(broker, &model);
    if (rc == GB_OK && model) std::cout << model << std::endl;
    gb_string_free(model);
  }
  gb_broker_stop(broker);
  gb_broker_free(broker);
  return report(rc);
}

int cmd_client_run(const std::string& config_path) {
  std::string config;
  if (!read_file(config_path, &config)) {
    std::cerr << "error: cannot read " << config_path << "\n";
    return kConfigExit;
  }
  char* result = nullptr;
  const int rc = gb_client_run(config.c_str(), &result);
  if (result) {
    std::cout << result << std::endl;
    gb_string_free(result);
  }
  return report(rc);
}

int cmd_experiment_run(const std::string& config_path, const std::string& out) {
  std::string config;
  if (!read_file(config_path, &config)) {
    std::cerr << "error: cannot read " << config_path << "\n";
    return kConfigExit;
  }
  char* summary = nullptr;
  const int rc = gb_experiment_run(config.c_str(), out.c_str(), &summary);
  if (summary) {
    std::cout << summary << std::endl;
    gb_string_free(summary);
  }
  return report(rc);
}

int cmd_experiment_figures(const std::string& out) {
  std::cout << "writing figure data to " << out << std::endl;
  return report(gb_experiment_figures(out.c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Broker-coordinated private multi-party trainer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gb_version()));

  std::string config_path;
  std::string out_dir;

  CLI::App* broker = app.add_subcommand("broker", "Broker-side commands");
  broker->require_subcommand(1);
  CLI::App* serve =
      broker->add_subcommand("serve", "Serve one task over loopback TCP");
  serve->add_option("--config", config_path, "JSON config file")->required();

  CLI::App* client = app.add_subcommand("client", "Client-side commands");
  client->require_subcommand(1);
  CLI::App* crun =
      client->add_subcommand("run", "Train against a remote broker");
  crun->add_option("--config", config_path, "JSON config file")->required();

  CLI::App* experiment =
      app.add_subcommand("experiment", "Deterministic experiment harness");
  experiment->require_subcommand(1);
  CLI::App* erun = experiment->add_subcommand("run", "Run one experiment");
  erun->add_option("--config", config_path, "JSON config file")->required();
  erun->add_option("--out", out_dir, "Output directory")->required();
  CLI::App* figures =
      experiment->add_subcommand("figures", "Run the canonical sweeps");
  figures->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  if (serve->parsed()) return cmd_broker_serve(config_path);
  if (crun->parsed()) return cmd_client_run(config_path);
  if (erun->parsed()) return cmd_experiment_run(config_path, out_dir);
  if (figures->parsed()) return cmd_experiment_figures(out_dir);
  return kConfigExit;
}
