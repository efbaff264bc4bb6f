#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "opal/env.hpp"
#include "opal/labeling.hpp"

namespace opal {

// Shared state between the labeling loop (one thread, blocked in ask) and
// HTTP handlers. Holds at most one pending query.
class QuerySession {
 public:
  QuerySession(std::string session_id, const Environment& env, QuerySchedule schedule);

  const std::string& session_id() const { return session_id_; }
  const QuerySchedule& schedule() const { return schedule_; }

  // Loop side. Blocks until submit() answers this pair or close() is called
  // (the latter throws LabelingAborted).
  Answer ask(const CandidatePair& pair);
  void set_status(std::string status);
  void close();

  enum class SubmitResult { ACCEPTED, STALE };
  struct Submitted {
    SubmitResult result = SubmitResult::STALE;
    bool next_available = false;
  };
  Submitted submit(PairId pair_id, Answer answer);

  std::optional<PairId> pending_id() const;
  std::optional<nlohmann::json> pending_query() const;  // wire format of GET /api/query
  nlohmann::json summary() const;                        // wire format of GET /api/session
  std::vector<PreferenceRecord> answered() const;
  std::size_t labeled_count() const;

 private:
  struct Pending {
    CandidatePair pair;
    std::chrono::system_clock::time_point issued_at;
    nlohmann::json wire;
    std::optional<Answer> reply;
  };

  nlohmann::json snippet_points(const Snippet& s) const;

  std::string session_id_;
  const Environment& env_;
  QuerySchedule schedule_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Pending> pending_;
  std::vector<PreferenceRecord> answered_;
  std::size_t consumed_ = 0;  // answers that used up a budget slot
  std::string status_ = "preparing";
  bool closed_ = false;
};

class SessionLabeler final : public Labeler {
 public:
  explicit SessionLabeler(QuerySession& session) : session_(session) {}
  LabelerKind kind() const override { return LabelerKind::HUMAN; }
  Answer answer(const CandidatePair& pair) override { return session_.ask(pair); }

 private:
  QuerySession& session_;
};

// HTTP front end for a QuerySession. Optionally serves static files (the web
// UI bundle) from static_dir.
class LabelingServer {
 public:
  explicit LabelingServer(QuerySession& session, std::filesystem::path static_dir = {});
  ~LabelingServer();
  LabelingServer(const LabelingServer&) = delete;
  LabelingServer& operator=(const LabelingServer&) = delete;

  // Starts listening on a background thread; port 0 picks a free port.
  // Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace opal
