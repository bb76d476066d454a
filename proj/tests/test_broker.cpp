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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>
#include <limits>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "broker.hpp"

namespace {

using namespace gradbroker;

// Balanced set separable along coordinate 0, padded with zeros to dim.
LabeledDataset tiny_validation(int dim) {
  LabeledDataset d;
  for (int i = 0; i < 10; ++i) {
    std::vector<double> x(dim, 0.0);
    x[0] = (i < 5) ? 1.0 : -1.0;
    d.push_row(x, i < 5 ? 1 : 0);
  }
  return d;
}

// One positive point per slot at x = (i + 0.5) / n with an intercept feature,
// so the model (1, -c) misclassifies exactly the points left of c and the
// validation error is an exact step function of c.
LabeledDataset staircase_validation(int n) {
  LabeledDataset d;
  for (int i = 0; i < n; ++i) {
    d.push_row({(i + 0.5) / n, 1.0}, 1);
  }
  return d;
}

LearningTask make_task(int dim = 2, int min_clients = 1, int max_clients = 8,
                       std::int64_t max_iterations = 1000) {
  LearningTask task;
  task.model_id = "m-test";
  task.dim = dim;
  task.min_clients = min_clients;
  task.max_clients = max_clients;
  task.max_iterations = max_iterations;
  task.validation_set = tiny_validation(dim);
  return task;
}

// No validation rounds, free puzzles, no expiry.
BrokerConfig quiet_config() {
  BrokerConfig cfg;
  cfg.validation_rate = 0.0;
  cfg.admission_difficulty = 0;
  cfg.update_difficulty = 0;
  cfg.client_timeout = 0;
  return cfg;
}

ErrorCode error_code(const Message& m) {
  REQUIRE(std::holds_alternative<ErrorMsg>(m));
  return std::get<ErrorMsg>(m).code;
}

// Token plus the solution for the client's current outstanding puzzle. The
// admission puzzle stays armed after admission, so the first update reuses
// the admission solution.
struct Channel {
  std::string token;
  Solution solution;
};

Channel admit(Broker& broker, int conn_id, int dim, int k = 1) {
  Message reply = broker.handle(conn_id, JoinMsg{broker.task().model_id});
  REQUIRE(std::holds_alternative<PuzzleMsg>(reply));
  const auto& offer = std::get<PuzzleMsg>(reply);
  const Solution solution =
      solve(puzzle_from_hex(offer.nonce_hex, offer.difficulty)).solution;
  reply = broker.handle(conn_id,
                        SolveMsg{broker.task().model_id, solution, k, dim});
  REQUIRE(std::holds_alternative<SolveAckMsg>(reply));
  return {std::get<SolveAckMsg>(reply).client_token, solution};
}

Message raw_update(Broker& broker, const Channel& ch,
                   const ParameterVector& delta) {
  return broker.handle(
      0, GradientUpdateMsg{broker.task().model_id, ch.token, ch.solution, delta});
}

UpdateAckMsg update(Broker& broker, Channel& ch, const ParameterVector& delta) {
  Message reply = raw_update(broker, ch, delta);
  REQUIRE(std::holds_alternative<UpdateAckMsg>(reply));
  const auto& ack = std::get<UpdateAckMsg>(reply);
  ch.solution = solve(puzzle_from_hex(ack.nonce_hex, ack.difficulty)).solution;
  return ack;
}

PollAckMsg poll(Broker& broker, const std::string& token) {
  Message reply = broker.handle(0, PollMsg{broker.task().model_id, token});
  REQUIRE(std::holds_alternative<PollAckMsg>(reply));
  return std::get<PollAckMsg>(reply);
}

// A solution that provably fails verification for the given puzzle.
Solution failing_solution(const Puzzle& puzzle) {
  Solution wrong = "x";
  while (verify(puzzle, wrong)) wrong += "x";
  return wrong;
}

std::set<std::string> json_keys(const Message& m) {
  const auto parsed = nlohmann::json::parse(encode(m));
  std::set<std::string> keys;
  for (auto it = parsed.begin(); it != parsed.end(); ++it) keys.insert(it.key());
  return keys;
}

double roni_of(const Broker& broker, const std::string& token) {
  auto rec = broker.find_client(token);
  REQUIRE(rec.has_value());
  return rec->roni_total;
}

}  // namespace

TEST_CASE("constructor rejects invalid tasks and configs") {
  const LearningTask task = make_task();
  const BrokerConfig cfg = quiet_config();

  auto bad_task = [&](auto mutate) {
    LearningTask t = task;
    mutate(t);
    CHECK_THROWS_AS(Broker(t, cfg), std::invalid_argument);
  };
  bad_task([](LearningTask& t) { t.dim = 0; });
  bad_task([](LearningTask& t) { t.min_clients = 0; });
  bad_task([](LearningTask& t) { t.min_clients = 9; });
  bad_task([](LearningTask& t) { t.max_iterations = 0; });
  bad_task([](LearningTask& t) { t.validation_set = LabeledDataset{}; });
  bad_task([](LearningTask& t) { t.validation_set = tiny_validation(3); });
  bad_task([](LearningTask& t) { t.validation_set.labels[0] = 2; });

  auto bad_cfg = [&](auto mutate) {
    BrokerConfig c = cfg;
    mutate(c);
    CHECK_THROWS_AS(Broker(task, c), std::invalid_argument);
  };
  bad_cfg([](BrokerConfig& c) { c.validation_rate = -0.1; });
  bad_cfg([](BrokerConfig& c) { c.validation_rate = 1.5; });
  bad_cfg([](BrokerConfig& c) { c.roni_threshold = -1.0; });
  bad_cfg([](BrokerConfig& c) { c.difficulty_cap = -1; });
  bad_cfg([](BrokerConfig& c) { c.admission_difficulty = -1; });
  bad_cfg([](BrokerConfig& c) { c.admission_difficulty = c.difficulty_cap + 1; });
  bad_cfg([](BrokerConfig& c) { c.update_difficulty = c.difficulty_cap + 1; });
  bad_cfg([](BrokerConfig& c) { c.max_real_difficulty = -1; });
  bad_cfg([](BrokerConfig& c) { c.metrics_every = 0; });
}

TEST_CASE("admission issues a puzzle and then a token") {
  BrokerConfig cfg = quiet_config();
  cfg.admission_difficulty = 2;
  Broker broker(make_task(2, 2, 8), cfg);

  Message reply = broker.handle(1, JoinMsg{"m-test"});
  REQUIRE(std::holds_alternative<PuzzleMsg>(reply));
  const auto offer = std::get<PuzzleMsg>(reply);
  CHECK(offer.model_id == "m-test");
  CHECK(offer.difficulty == 2);
  CHECK(offer.nonce_hex.size() == 64);

  const Puzzle puzzle = puzzle_from_hex(offer.nonce_hex, offer.difficulty);
  const Solution solution = solve(puzzle).solution;
  reply = broker.handle(1, SolveMsg{"m-test", solution, 1, 2});
  REQUIRE(std::holds_alternative<SolveAckMsg>(reply));
  const auto ack = std::get<SolveAckMsg>(reply);
  CHECK(ack.status == "waiting");  // min_clients is 2
  CHECK_FALSE(ack.client_token.empty());
  CHECK_FALSE(ack.model.has_value());
  CHECK(broker.admitted_count() == 1);

  auto rec = broker.find_client(ack.client_token);
  REQUIRE(rec.has_value());
  CHECK(rec->index == 0);
  CHECK(rec->difficulty == cfg.update_difficulty);
  CHECK(rec->k == 1);
  CHECK_FALSE(broker.training_active());

  // Second admission reaches min_clients; its ack is already active.
  Message reply2 = broker.handle(2, JoinMsg{"m-test"});
  const auto offer2 = std::get<PuzzleMsg>(reply2);
  CHECK(offer2.nonce_hex != offer.nonce_hex);
  const Solution solution2 =
      solve(puzzle_from_hex(offer2.nonce_hex, offer2.difficulty)).solution;
  reply2 = broker.handle(2, SolveMsg{"m-test", solution2, 1, 2});
  const auto ack2 = std::get<SolveAckMsg>(reply2);
  CHECK(ack2.status == "active");
  REQUIRE(ack2.model.has_value());
  CHECK(*ack2.model == ParameterVector(2, 0.0));
  CHECK(ack2.iteration == 0);
  CHECK(broker.training_active());
}

TEST_CASE("tokens carry the admission index") {
  Broker broker(make_task(), quiet_config());
  const std::regex pattern("c([0-9]+)-[0-9a-f]{16}");
  for (int i = 0; i < 3; ++i) {
    Channel ch = admit(broker, i, 2);
    std::smatch m;
    REQUIRE(std::regex_match(ch.token, m, pattern));
    CHECK(m[1].str() == std::to_string(i));
  }
}

TEST_CASE("join and solve reject bad requests") {
  Broker broker(make_task(2, 1, 2), quiet_config());

  CHECK(error_code(broker.handle(1, JoinMsg{"other-model"})) ==
        ErrorCode::malformed);
  CHECK(error_code(broker.handle(1, SolveMsg{"m-test", "0", 1, 2})) ==
        ErrorCode::not_admitted);  // no join on this connection
  CHECK(error_code(broker.handle(1, PuzzleMsg{})) == ErrorCode::malformed);

  // A second provisional join counts against max_clients.
  broker.handle(1, JoinMsg{"m-test"});
  broker.handle(2, JoinMsg{"m-test"});
  CHECK(error_code(broker.handle(3, JoinMsg{"m-test"})) ==
        ErrorCode::not_admitted);
  // Re-joining on the same connection replaces its own provisional slot.
  CHECK(std::holds_alternative<PuzzleMsg>(broker.handle(2, JoinMsg{"m-test"})));

  admit(broker, 1, 2);
  admit(broker, 2, 2);
  CHECK(error_code(broker.handle(3, JoinMsg{"m-test"})) ==
        ErrorCode::not_admitted);
}

TEST_CASE("bad admission solutions keep the puzzle, schema mismatches cancel it") {
  BrokerConfig cfg = quiet_config();
  cfg.admission_difficulty = 2;
  Broker broker(make_task(), cfg);

  const auto offer = std::get<PuzzleMsg>(broker.handle(1, JoinMsg{"m-test"}));
  const Puzzle puzzle = puzzle_from_hex(offer.nonce_hex, offer.difficulty);
  const Solution good = solve(puzzle).solution;
  const Solution wrong = failing_solution(puzzle);

  CHECK(error_code(broker.handle(1, SolveMsg{"m-test", wrong, 1, 2})) ==
        ErrorCode::bad_solution);
  CHECK(error_code(broker.handle(1, SolveMsg{"m-test", good, 0, 2})) ==
        ErrorCode::malformed);  // k < 1
  // The puzzle survived both rejections.
  const auto ack = broker.handle(1, SolveMsg{"m-test", good, 1, 2});
  CHECK(std::holds_alternative<SolveAckMsg>(ack));

  // Solving with the wrong feature count cancels the provisional slot.
  const auto offer2 = std::get<PuzzleMsg>(broker.handle(2, JoinMsg{"m-test"}));
  const Solution good2 =
      solve(puzzle_from_hex(offer2.nonce_hex, offer2.difficulty)).solution;
  CHECK(error_code(broker.handle(2, SolveMsg{"m-test", good2, 1, 5})) ==
        ErrorCode::schema_mismatch);
  CHECK(error_code(broker.handle(2, SolveMsg{"m-test", good2, 1, 2})) ==
        ErrorCode::not_admitted);
}

TEST_CASE("updates are gated on the client quorum") {
  Broker broker(make_task(2, 2, 8), quiet_config());
  Channel a = admit(broker, 1, 2);

  CHECK(poll(broker, a.token).status == "waiting");
  CHECK(error_code(raw_update(broker, a, {0.1, 0.1})) == ErrorCode::not_started);

  admit(broker, 2, 2);
  CHECK(poll(broker, a.token).status == "active");
  CHECK(std::holds_alternative<UpdateAckMsg>(raw_update(broker, a, {0.1, 0.1})));
}

TEST_CASE("a large k raises the quorum for everyone") {
  Broker broker(make_task(2, 1, 8), quiet_config());
  Channel a = admit(broker, 1, 2, /*k=*/3);
  CHECK(poll(broker, a.token).status == "waiting");
  CHECK(error_code(raw_update(broker, a, {0.1, 0.1})) == ErrorCode::not_started);

  admit(broker, 2, 2);
  CHECK(poll(broker, a.token).status == "waiting");

  Channel c = admit(broker, 3, 2);
  CHECK(poll(broker, a.token).status == "active");
  CHECK(std::holds_alternative<UpdateAckMsg>(raw_update(broker, c, {0.1, 0.1})));
}

TEST_CASE("updates apply deltas and arm fresh puzzles") {
  BrokerConfig cfg = quiet_config();
  cfg.update_difficulty = 1;
  cfg.max_real_difficulty = 1;
  Broker broker(make_task(2, 1, 8, 1000), cfg);
  Channel a = admit(broker, 1, 2);

  UpdateAckMsg ack = update(broker, a, {0.5, -0.25});
  CHECK(ack.model == ParameterVector{0.5, -0.25});
  CHECK(ack.iteration == 1);
  CHECK(ack.difficulty == 1);
  CHECK(broker.iteration() == 1);
  CHECK(broker.model() == ParameterVector{0.5, -0.25});

  // A wrong solution for the armed puzzle applies nothing, and the puzzle
  // survives for the correct retry.
  const Puzzle armed = puzzle_from_hex(ack.nonce_hex, ack.difficulty);
  Channel bad{a.token, failing_solution(armed)};
  CHECK(error_code(raw_update(broker, bad, {9.0, 9.0})) ==
        ErrorCode::bad_solution);
  CHECK(broker.iteration() == 1);
  CHECK(broker.model() == ParameterVector{0.5, -0.25});

  ack = update(broker, a, {0.5, 0.25});
  CHECK(ack.iteration == 2);
  CHECK(ack.model == ParameterVector{1.0, 0.0});
}

TEST_CASE("update rejections do not touch the model") {
  Broker broker(make_task(2, 1, 8), quiet_config());
  Channel a = admit(broker, 1, 2);

  CHECK(error_code(broker.handle(
            0, GradientUpdateMsg{"other", a.token, a.solution, {0.1, 0.1}})) ==
        ErrorCode::malformed);
  CHECK(error_code(broker.handle(
            0, GradientUpdateMsg{"m-test", "c9-deadbeef00000000", a.solution,
                                 {0.1, 0.1}})) == ErrorCode::not_admitted);
  CHECK(error_code(raw_update(broker, a, {0.1, 0.1, 0.1})) ==
        ErrorCode::schema_mismatch);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(error_code(raw_update(broker, a, {nan, 0.0})) == ErrorCode::malformed);
  CHECK(error_code(raw_update(broker, a, {0.0, inf})) == ErrorCode::malformed);

  CHECK(broker.iteration() == 0);
  CHECK(broker.model() == ParameterVector(2, 0.0));
  CHECK(broker.penalty_events().empty());
}

TEST_CASE("reaching max iterations completes the model") {
  Broker broker(make_task(2, 1, 8, 3), quiet_config());
  Channel a = admit(broker, 1, 2);

  update(broker, a, {1.0, 0.0});
  update(broker, a, {1.0, 0.0});
  CHECK_FALSE(broker.complete());
  CHECK_THROWS_AS(broker.publish_model(), std::logic_error);

  UpdateAckMsg last = update(broker, a, {1.0, 0.0});
  CHECK(last.iteration == 3);
  CHECK(broker.complete());
  CHECK(broker.publish_model() == ParameterVector{3.0, 0.0});

  CHECK(error_code(raw_update(broker, a, {1.0, 0.0})) ==
        ErrorCode::model_complete);
  CHECK(broker.iteration() == 3);
  PollAckMsg final_poll = poll(broker, a.token);
  CHECK(final_poll.status == "complete");
  REQUIRE(final_poll.model.has_value());
  CHECK(*final_poll.model == ParameterVector{3.0, 0.0});
  CHECK(error_code(broker.handle(5, JoinMsg{"m-test"})) ==
        ErrorCode::model_complete);
  CHECK(error_code(broker.handle(1, SolveMsg{"m-test", "0", 1, 2})) ==
        ErrorCode::model_complete);
}

TEST_CASE("zero validation rate keeps aggregation a pure sum") {
  Broker broker(make_task(2, 1, 8, 1000), quiet_config());
  Channel a = admit(broker, 1, 2);
  Channel b = admit(broker, 2, 2);

  ParameterVector expect(2, 0.0);
  for (int i = 1; i <= 6; ++i) {
    Channel& ch = (i % 2 == 0) ? a : b;
    const ParameterVector delta = {0.125 * i, -0.5 / i};
    update(broker, ch, delta);
    expect[0] += delta[0];
    expect[1] += delta[1];
  }
  CHECK(broker.model() == expect);
  CHECK(broker.penalty_events().empty());
  for (const auto& rec : broker.client_records()) CHECK(rec.roni_total == 0.0);
}

TEST_CASE("validation rounds accumulate influence against the snapshot") {
  LearningTask task = make_task(2, 1, 8, 1000);
  task.validation_set = staircase_validation(200);
  BrokerConfig cfg = quiet_config();
  cfg.validation_rate = 1.0;
  cfg.roni_threshold = 0.05;
  Broker broker(task, cfg);
  Channel a = admit(broker, 1, 2);

  // t=1 establishes the model (1, -0.10) and triggers a round with the lone
  // client already at the scored stage.
  update(broker, a, {1.0, -0.10});
  CHECK(roni_of(broker, a.token) == 0.0);

  // Each -0.02 step on the intercept misclassifies four more points.
  update(broker, a, {0.0, -0.02});
  CHECK(roni_of(broker, a.token) == doctest::Approx(-0.02).epsilon(1e-9));
  update(broker, a, {0.0, -0.02});
  CHECK(roni_of(broker, a.token) == doctest::Approx(-0.04).epsilon(1e-9));
  CHECK(broker.penalty_events().empty());

  // The third step crosses the threshold: difficulty ratchets and the
  // accumulator resets.
  UpdateAckMsg ack = update(broker, a, {0.0, -0.02});
  CHECK(ack.difficulty == 1);
  REQUIRE(broker.penalty_events().size() == 1);
  const PenaltyEvent& ev = broker.penalty_events()[0];
  CHECK(ev.iteration == 4);
  CHECK(ev.client_index == 0);
  CHECK(ev.new_difficulty == 1);
  CHECK_FALSE(ev.blacklisted);
  CHECK(roni_of(broker, a.token) == 0.0);
  CHECK(broker.find_client(a.token)->difficulty == 1);
  CHECK(broker.difficulties_by_index() == std::vector<int>{1});

  // Helpful deltas earn positive credit.
  update(broker, a, {0.0, 0.04});
  CHECK(roni_of(broker, a.token) == doctest::Approx(0.04).epsilon(1e-9));
}

TEST_CASE("repeated penalties blacklist at the difficulty cap") {
  LearningTask task = make_task(2, 1, 8, 1000);
  task.validation_set = staircase_validation(200);
  BrokerConfig cfg = quiet_config();
  cfg.validation_rate = 1.0;
  cfg.roni_threshold = 0.01;
  cfg.difficulty_cap = 2;
  Broker broker(task, cfg);
  Channel a = admit(broker, 1, 2);

  update(broker, a, {1.0, -0.10});
  update(broker, a, {0.0, -0.02});                     // penalty 1
  UpdateAckMsg ack = update(broker, a, {0.0, -0.02});  // penalty 2: cap
  CHECK(ack.difficulty == 2);

  REQUIRE(broker.penalty_events().size() == 2);
  CHECK(broker.penalty_events()[0].new_difficulty == 1);
  CHECK_FALSE(broker.penalty_events()[0].blacklisted);
  CHECK(broker.penalty_events()[1].new_difficulty == 2);
  CHECK(broker.penalty_events()[1].blacklisted);

  auto rec = broker.find_client(a.token);
  REQUIRE(rec.has_value());
  CHECK(rec->blacklisted);
  CHECK(rec->difficulty == 2);
  CHECK(error_code(raw_update(broker, a, {0.0, 0.0})) == ErrorCode::blacklisted);
  // A fully blacklisted population pauses training.
  CHECK_FALSE(broker.training_active());
}

TEST_CASE("round members receive the snapshot until they respond") {
  LearningTask task = make_task(2, 1, 8, 1000);
  task.validation_set = staircase_validation(200);
  BrokerConfig cfg = quiet_config();
  cfg.validation_rate = 1.0;
  cfg.roni_threshold = 10.0;  // never penalize here
  Broker broker(task, cfg);
  Channel a = admit(broker, 1, 2);
  Channel b = admit(broker, 2, 2);

  // a's update triggers a round; the snapshot is the model that includes it.
  UpdateAckMsg trigger = update(broker, a, {1.0, -0.10});
  const ParameterVector snapshot = {1.0, -0.10};
  CHECK(trigger.model == snapshot);

  // b has not seen the snapshot yet; its first update is served the snapshot
  // instead of the live model and is not scored.
  UpdateAckMsg first_b = update(broker, b, {0.0, -0.02});
  CHECK(first_b.model == snapshot);
  ParameterVector live = snapshot;
  live[1] += -0.02;
  CHECK(broker.model() == live);
  CHECK(roni_of(broker, b.token) == 0.0);

  // Both members keep polling the frozen snapshot while the round is open.
  PollAckMsg pa = poll(broker, a.token);
  PollAckMsg pb = poll(broker, b.token);
  REQUIRE(pa.model.has_value());
  REQUIRE(pb.model.has_value());
  CHECK(*pa.model == snapshot);
  CHECK(*pb.model == snapshot);

  // b's next update is scored against the snapshot, not the live model.
  update(broker, b, {0.0, -0.02});
  CHECK(roni_of(broker, b.token) == doctest::Approx(-0.02).epsilon(1e-9));

  // a responds too; the round closes and a fresh snapshot takes over.
  update(broker, a, {0.0, 0.0});
  PollAckMsg after = poll(broker, b.token);
  REQUIRE(after.model.has_value());
  CHECK(*after.model == broker.model());
}

TEST_CASE("validation traffic is shaped like regular traffic") {
  LearningTask task = make_task(2, 1, 8, 1000);
  task.validation_set = staircase_validation(200);
  BrokerConfig with_rounds = quiet_config();
  with_rounds.validation_rate = 1.0;
  with_rounds.roni_threshold = 10.0;
  Broker validated(task, with_rounds);
  Broker plain(task, quiet_config());

  Channel va = admit(validated, 1, 2);
  Channel vb = admit(validated, 2, 2);
  Channel pa = admit(plain, 1, 2);
  Channel pb = admit(plain, 2, 2);

  // Same traffic against both brokers; only the model payloads may differ.
  const Message v1 = raw_update(validated, va, {1.0, -0.10});
  const Message p1 = raw_update(plain, pa, {1.0, -0.10});
  CHECK(json_keys(v1) == json_keys(p1));

  const Message v2 = raw_update(validated, vb, {0.0, -0.02});
  const Message p2 = raw_update(plain, pb, {0.0, -0.02});
  CHECK(json_keys(v2) == json_keys(p2));
  // The snapshot is the only divergence between the two acks.
  nlohmann::json jv = nlohmann::json::parse(encode(v2));
  nlohmann::json jp = nlohmann::json::parse(encode(p2));
  CHECK(jv["model"] != jp["model"]);
  jv.erase("model");
  jp.erase("model");
  jv.erase("nonce_hex");  // independently random per broker
  jp.erase("nonce_hex");
  CHECK(jv == jp);

  const Message v3 = validated.handle(0, PollMsg{"m-test", vb.token});
  const Message p3 = plain.handle(0, PollMsg{"m-test", pb.token});
  CHECK(json_keys(v3) == json_keys(p3));
}

TEST_CASE("silent clients expire and can pause training") {
  BrokerConfig cfg = quiet_config();
  cfg.client_timeout = 6;  // default clock: one tick per handled message
  Broker broker(make_task(2, 2, 8), cfg);
  Channel a = admit(broker, 1, 2);  // ticks 1-2
  Channel b = admit(broker, 2, 2);  // ticks 3-4, b last seen at tick 4

  CHECK(std::holds_alternative<UpdateAckMsg>(raw_update(broker, a, {0.1, 0.1})));

  // Keep a alive while b stays silent past the timeout.
  for (int i = 0; i < 6; ++i) poll(broker, a.token);
  CHECK(broker.admitted_count() == 1);
  CHECK_FALSE(broker.find_client(b.token).has_value());
  CHECK(error_code(broker.handle(0, PollMsg{"m-test", b.token})) ==
        ErrorCode::not_admitted);

  // Training ran once, so losing the quorum pauses rather than "not started".
  CHECK(error_code(raw_update(broker, a, {0.1, 0.1})) ==
        ErrorCode::paused_below_min);
  CHECK(poll(broker, a.token).status == "waiting");
}

TEST_CASE("stale provisional joins expire") {
  BrokerConfig cfg = quiet_config();
  cfg.client_timeout = 3;
  Broker broker(make_task(2, 1, 8), cfg);

  const auto offer = std::get<PuzzleMsg>(broker.handle(1, JoinMsg{"m-test"}));
  Channel other = admit(broker, 2, 2);  // two ticks
  poll(broker, other.token);
  poll(broker, other.token);  // the tick-1 join is now past the timeout

  const Solution solution =
      solve(puzzle_from_hex(offer.nonce_hex, offer.difficulty)).solution;
  CHECK(error_code(broker.handle(1, SolveMsg{"m-test", solution, 1, 2})) ==
        ErrorCode::not_admitted);
}

TEST_CASE("an expired round member no longer blocks scoring") {
  LearningTask task = make_task(2, 1, 8, 1000);
  task.validation_set = staircase_validation(200);
  BrokerConfig cfg = quiet_config();
  cfg.validation_rate = 1.0;
  cfg.roni_threshold = 10.0;
  cfg.client_timeout = 8;
  Broker broker(task, cfg);
  Channel a = admit(broker, 1, 2);  // ticks 1-2
  Channel b = admit(broker, 2, 2);  // ticks 3-4, b last seen at tick 4

  update(broker, a, {1.0, -0.10});  // tick 5: round opens with b to serve
  update(broker, a, {0.0, -0.02});  // tick 6: scored against the snapshot
  CHECK(roni_of(broker, a.token) == doctest::Approx(-0.02).epsilon(1e-9));

  // The round stays open for b, so a's further updates are not scored.
  update(broker, a, {0.0, 0.0});  // tick 7
  update(broker, a, {0.0, 0.0});  // tick 8
  CHECK(roni_of(broker, a.token) == doctest::Approx(-0.02).epsilon(1e-9));
  CHECK(broker.admitted_count() == 2);

  for (int i = 0; i < 4; ++i) poll(broker, a.token);  // ticks 9-12

  // Tick 13: b is swept, the stuck round closes, and the update re-triggers.
  update(broker, a, {0.0, 0.0});
  CHECK(broker.admitted_count() == 1);
  // Tick 14: scored again, now against the fresh snapshot.
  update(broker, a, {0.0, -0.02});
  CHECK(roni_of(broker, a.token) == doctest::Approx(-0.04).epsilon(1e-9));
}

TEST_CASE("open rounds time out even when members stay connected") {
  LearningTask task = make_task(2, 1, 8, 1000);
  task.validation_set = staircase_validation(200);
  BrokerConfig cfg = quiet_config();
  cfg.validation_rate = 1.0;
  cfg.roni_threshold = 10.0;
  cfg.client_timeout = 8;
  Broker broker(task, cfg);
  Channel a = admit(broker, 1, 2);  // ticks 1-2
  Channel b = admit(broker, 2, 2);  // ticks 3-4

  update(broker, a, {1.0, -0.10});  // tick 5: round opens
  const ParameterVector snapshot = {1.0, -0.10};
  PollAckMsg joined = poll(broker, b.token);  // tick 6: b enters the round
  REQUIRE(joined.model.has_value());
  CHECK(*joined.model == snapshot);
  update(broker, a, {0.0, -0.02});  // tick 7: a responds, b still owes one

  // b keeps polling without responding and is served the stale snapshot...
  for (int tick = 8; tick <= 13; ++tick) {
    CHECK(*poll(broker, b.token).model == snapshot);
  }
  // ...until the round exceeds the timeout and collapses to the live model.
  PollAckMsg released = poll(broker, b.token);  // tick 14
  REQUIRE(released.model.has_value());
  CHECK(*released.model == broker.model());
  CHECK(*released.model != snapshot);
  CHECK(broker.admitted_count() == 2);  // nobody expired, just the round
}

TEST_CASE("puzzles above the verification ceiling stay cheap to check") {
  BrokerConfig cfg = quiet_config();
  cfg.update_difficulty = 6;
  cfg.max_real_difficulty = 0;
  Broker broker(make_task(2, 1, 8), cfg);
  Channel a = admit(broker, 1, 2);

  Message reply = raw_update(broker, a, {0.25, 0.0});
  REQUIRE(std::holds_alternative<UpdateAckMsg>(reply));
  // The ack advertises the ratcheted difficulty, but verification happens at
  // the ceiling, so an arbitrary solution is accepted on the next update.
  CHECK(std::get<UpdateAckMsg>(reply).difficulty == 6);
  Channel cheap{a.token, "anything"};
  reply = raw_update(broker, cheap, {0.25, 0.0});
  REQUIRE(std::holds_alternative<UpdateAckMsg>(reply));
  CHECK(broker.model() == ParameterVector{0.5, 0.0});
}

TEST_CASE("metrics rows follow the configured cadence") {
  BrokerConfig cfg = quiet_config();
  cfg.metrics_every = 2;
  Broker broker(make_task(2, 1, 8, 5), cfg);
  auto shard = std::make_shared<LabeledDataset>(tiny_validation(2));
  broker.set_metrics_dataset(shard);
  std::vector<BrokerMetricsRow> rows;
  broker.set_metrics_sink([&](const BrokerMetricsRow& r) { rows.push_back(r); });

  Channel a = admit(broker, 1, 2);
  for (int i = 0; i < 5; ++i) update(broker, a, {0.5, 0.0});

  REQUIRE(rows.size() == 3);
  CHECK(rows[0].iteration == 2);
  CHECK(rows[1].iteration == 4);
  CHECK(rows[2].iteration == 5);  // completion row, off-cadence
  for (const auto& row : rows) {
    CHECK(row.difficulties == std::vector<int>{0});
    // Any positive weight on coordinate 0 classifies the set perfectly.
    CHECK(row.validation_error == 0.0);
    CHECK(row.training_error == 0.0);
  }
  CHECK(broker.complete());
}

TEST_CASE("metrics fall back to the validation set without a training shard") {
  BrokerConfig cfg = quiet_config();
  cfg.metrics_every = 1;
  Broker broker(make_task(2, 1, 8, 2), cfg);
  std::vector<BrokerMetricsRow> rows;
  broker.set_metrics_sink([&](const BrokerMetricsRow& r) { rows.push_back(r); });
  Channel a = admit(broker, 1, 2);
  update(broker, a, {2.0, 0.0});
  update(broker, a, {-1.0, 0.0});
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) CHECK(row.training_error == row.validation_error);
}

TEST_CASE("an injected clock drives expiry") {
  std::int64_t now = 1000;
  BrokerConfig cfg = quiet_config();
  cfg.client_timeout = 50;
  Broker broker(make_task(2, 1, 8), cfg);
  broker.set_clock([&now] { return now; });

  Channel a = admit(broker, 1, 2);
  now += 49;
  CHECK(poll(broker, a.token).status == "active");  // exactly at the limit
  now += 51;
  CHECK(error_code(broker.handle(0, PollMsg{"m-test", a.token})) ==
        ErrorCode::not_admitted);
}

TEST_CASE("handle_payload decodes, dispatches and encodes") {
  Broker broker(make_task(), quiet_config());

  const std::string garbage_reply = broker.handle_payload(1, "{not json");
  CHECK(error_code(decode(garbage_reply)) == ErrorCode::malformed);

  const std::string join_reply =
      broker.handle_payload(1, encode(Message{JoinMsg{"m-test"}}));
  CHECK(std::holds_alternative<PuzzleMsg>(decode(join_reply)));
}
