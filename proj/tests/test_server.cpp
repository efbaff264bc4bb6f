#include <doctest.h>

#include <future>
#include <map>
#include <mutex>

#include "helpers.hpp"
#include "opal/labeling_server.hpp"

// after Eigen: resolv.h defines a _res macro
#include <httplib.h>

using namespace opal;

namespace {

nlohmann::json get_json(httplib::Client& c, const std::string& path, int expect) {
  auto res = c.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return nlohmann::json::parse(res->body);
}

httplib::Result post_label(httplib::Client& c, const nlohmann::json& body) {
  return c.Post("/api/label", body.dump(), "application/json");
}

CandidatePair tiny_pair(PairId id) {
  const OfflineDataset d = test::small_maze_dataset(1, 400, 400);
  return {id, make_snippet(d.trajectories[0], 0, 3), make_snippet(d.trajectories[0], 10, 3)};
}

// Remembers every pair the loop asks about, so the test can play oracle.
class RecordingLabeler final : public Labeler {
 public:
  explicit RecordingLabeler(QuerySession& s) : inner_(s) {}
  LabelerKind kind() const override { return LabelerKind::HUMAN; }
  Answer answer(const CandidatePair& pair) override {
    {
      std::lock_guard lock(mu);
      seen[pair.pair_id] = pair;
    }
    return inner_.answer(pair);
  }
  std::mutex mu;
  std::map<PairId, CandidatePair> seen;

 private:
  SessionLabeler inner_;
};

}  // namespace

TEST_CASE("session and query endpoints") {
  QuerySession session("s1", test::umaze(), QuerySchedule::maze());
  LabelingServer server(session);
  const int port = server.start("127.0.0.1", 0);
  httplib::Client c("127.0.0.1", port);

  const auto s = get_json(c, "/api/session", 200);
  CHECK(s["session_id"] == "s1");
  CHECK(s["labeled_count"] == 0);
  CHECK(s["total_budget"] == 15);
  const auto none = get_json(c, "/api/query", 404);
  CHECK(none.contains("error"));
  CHECK(none["status"] == "preparing");

  auto answer = std::async(std::launch::async, [&] { return session.ask(tiny_pair(42)); });
  while (!session.pending_id()) std::this_thread::yield();

  const auto q1 = get_json(c, "/api/query", 200);
  const auto q2 = get_json(c, "/api/query", 200);
  CHECK(q1 == q2);
  CHECK(q1["pair_id"] == 42);
  CHECK(q1["env_name"] == "umaze-mini");
  CHECK(q1["layout"].size() == 5);
  CHECK(q1["snippet_a"].size() == 4);
  CHECK(q1["snippet_a"][0].size() == 2);

  // stale and malformed posts change nothing
  auto stale = post_label(c, {{"pair_id", 41}, {"choice", "a"}});
  REQUIRE(stale);
  CHECK(stale->status == 409);
  CHECK(nlohmann::json::parse(stale->body)["accepted"] == false);
  CHECK(session.pending_id() == std::optional<PairId>(42));
  CHECK(post_label(c, {{"pair_id", 42}, {"choice", "tie"}})->status == 400);
  CHECK(post_label(c, {{"pair_id", 42}})->status == 400);
  CHECK(c.Post("/api/label", "not json", "application/json")->status == 400);
  CHECK(session.labeled_count() == 0);
  CHECK(get_json(c, "/api/query", 200) == q1);

  auto ok = post_label(c, {{"pair_id", 42}, {"choice", "b"}});
  REQUIRE(ok);
  CHECK(ok->status == 200);
  const auto body = nlohmann::json::parse(ok->body);
  CHECK(body["accepted"] == true);
  CHECK(body["next_available"] == true);
  CHECK(answer.get() == Answer::B);
  CHECK(session.labeled_count() == 1);
  CHECK(session.answered()[0].label == Preference::B_PREFERRED);
  CHECK(session.answered()[0].labeler == LabelerKind::HUMAN);

  // a second answer to the same pair is stale
  CHECK(post_label(c, {{"pair_id", 42}, {"choice", "a"}})->status == 409);
  CHECK(get_json(c, "/api/session", 200)["labeled_count"] == 1);
  server.stop();
}

TEST_CASE("skip does not count toward the budget") {
  QuerySchedule sched;
  sched.n_initial = 1;
  sched.n_rounds = 0;
  QuerySession session("s2", test::umaze(), sched);
  auto first = std::async(std::launch::async, [&] { return session.ask(tiny_pair(1)); });
  while (!session.pending_id()) std::this_thread::yield();
  const auto r = session.submit(1, Answer::SKIP);
  CHECK(r.result == QuerySession::SubmitResult::ACCEPTED);
  CHECK(r.next_available);
  CHECK(first.get() == Answer::SKIP);
  auto second = std::async(std::launch::async, [&] { return session.ask(tiny_pair(2)); });
  while (!session.pending_id()) std::this_thread::yield();
  CHECK_FALSE(session.submit(2, Answer::A).next_available);
  CHECK(second.get() == Answer::A);
}

TEST_CASE("closing the session aborts a waiting loop") {
  QuerySession session("s3", test::umaze(), QuerySchedule::maze());
  auto pending = std::async(std::launch::async, [&] { return session.ask(tiny_pair(7)); });
  while (!session.pending_id()) std::this_thread::yield();
  session.close();
  CHECK_THROWS_AS(pending.get(), LabelingAborted);
  CHECK(session.submit(7, Answer::A).result == QuerySession::SubmitResult::STALE);
  CHECK_THROWS_AS(session.ask(tiny_pair(8)), LabelingAborted);
}

TEST_CASE("a full labeling session over HTTP matches the oracle loop") {
  const OfflineDataset d = test::small_maze_dataset(3, 4000, 400);
  const RewardFreeDataset rf(d);
  OpalConfig cfg;
  cfg.reward.hidden = {16};
  cfg.reward.ensemble_size = 3;
  cfg.pool_pairs = 60;
  cfg.held_out_pairs = 0;
  cfg.snippet_len = 20;

  QuerySession session("http", test::umaze(), cfg.schedule);
  LabelingServer server(session);
  const int port = server.start("127.0.0.1", 0);
  RecordingLabeler labeler(session);
  auto loop = std::async(std::launch::async, [&] {
    LoopHooks hooks;
    hooks.on_status = [&](const char* s) { session.set_status(s); };
    return run_opal_loop(rf, cfg, labeler, 2, nullptr, hooks);
  });

  OracleLabeler oracle(d);
  httplib::Client c("127.0.0.1", port);
  std::size_t posted = 0;
  while (loop.wait_for(std::chrono::milliseconds(0)) != std::future_status::ready) {
    auto res = c.Get("/api/query");
    REQUIRE(res);
    if (res->status == 404) {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
      continue;
    }
    const auto q = nlohmann::json::parse(res->body);
    const PairId id = q["pair_id"].get<PairId>();
    CandidatePair pair;
    {
      std::lock_guard lock(labeler.mu);
      pair = labeler.seen.at(id);
    }
    const Answer a = oracle.answer(pair);
    const std::string choice = a == Answer::A ? "a" : a == Answer::B ? "b" : "skip";
    auto r = post_label(c, {{"pair_id", id}, {"choice", choice}});
    REQUIRE(r);
    CHECK(r->status == 200);
    ++posted;
  }
  const OpalResult http = loop.get();
  server.stop();

  CHECK(http.transcript.size() == posted);
  CHECK(http.buffer.records.size() == 15);
  CHECK(session.labeled_count() == 15);

  const OpalResult direct = run_opal_loop(rf, cfg, oracle, 2);
  CHECK(direct.transcript == http.transcript);
  REQUIRE(direct.buffer.records.size() == http.buffer.records.size());
  for (std::size_t i = 0; i < direct.buffer.records.size(); ++i) {
    CHECK(direct.buffer.records[i].pair_id == http.buffer.records[i].pair_id);
    CHECK(direct.buffer.records[i].label == http.buffer.records[i].label);
    CHECK(http.buffer.records[i].labeler == LabelerKind::HUMAN);
  }
  CHECK(direct.posterior == http.posterior);
}
