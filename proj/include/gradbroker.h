/*
 * Copyright 2026 The gradbroker Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C API for the gradbroker library: a broker-coordinated, differentially
 * private multi-party trainer for logistic models. All entry points take
 * JSON configuration strings and return 0 on success, GB_ERR_CONFIG for
 * configuration problems and GB_ERR_RUNTIME for everything else; call
 * gb_last_error() on the failing thread for a message. Strings returned
 * through out-parameters are heap-allocated; release them with
 * gb_string_free().
 */
#ifndef GRADBROKER_H_
#define GRADBROKER_H_

#ifdef __cplusplus
extern "C" {
#endif

#define GB_OK 0
#define GB_ERR_CONFIG 2
#define GB_ERR_RUNTIME 3

const char* gb_version(void);

/* Message for the most recent failure on the calling thread; never NULL. */
const char* gb_last_error(void);

void gb_string_free(char* s);

/*
 * Runs one experiment from a JSON config. With a non-NULL, non-empty
 * out_dir, writes metrics.csv, summary.json and model.json there. With a
 * non-NULL summary_json_out, stores the summary document.
 */
int gb_experiment_run(const char* config_json, const char* out_dir,
                      char** summary_json_out);

/* Runs the canonical parameter sweeps and writes one CSV per figure. */
int gb_experiment_figures(const char* out_dir);

/*
 * Standalone broker serving one task over loopback TCP. The config is an
 * experiment document without (or ignoring) the "clients" list; "port"
 * selects the listening port, 0 for ephemeral.
 */
typedef struct gb_broker gb_broker;

int gb_broker_start(const char* config_json, gb_broker** out);

/* "127.0.0.1:<port>", valid until gb_broker_free. */
const char* gb_broker_address(gb_broker* broker);

/* Blocks until the task reaches its iteration budget. */
int gb_broker_wait(gb_broker* broker);

/* 1 once the task is complete, else 0. */
int gb_broker_complete(gb_broker* broker);

/* Final model document; fails with GB_ERR_RUNTIME before completion. */
int gb_broker_model_json(gb_broker* broker, char** model_json_out);

/* Stops serving and joins all connection threads. Idempotent. */
int gb_broker_stop(gb_broker* broker);

void gb_broker_free(gb_broker* broker);

/*
 * Runs one client against a remote broker from a JSON config
 * ("broker_address", "model_id", "epsilon", dataset fields, ...). Stores a
 * JSON result document (exit reason, iteration counts, last model) through
 * result_json_out when non-NULL.
 */
int gb_client_run(const char* config_json, char** result_json_out);

#ifdef __cplusplus
}
#endif

#endif /* GRADBROKER_H_ */
