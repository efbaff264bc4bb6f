#include "opal/labeling_server.hpp"

#include <httplib.h>

namespace opal {

QuerySession::QuerySession(std::string session_id, const Environment& env, QuerySchedule schedule)
    : session_id_(std::move(session_id)), env_(env), schedule_(schedule) {
  schedule_.validate();
}

nlohmann::json QuerySession::snippet_points(const Snippet& s) const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& tr : s.transitions) {
    const auto p = env_.display_point(tr.state);
    pts.push_back({p[0], p[1]});
  }
  if (!s.transitions.empty()) {
    const auto p = env_.display_point(s.transitions.back().next_state);
    pts.push_back({p[0], p[1]});
  }
  return pts;
}

Answer QuerySession::ask(const CandidatePair& pair) {
  std::unique_lock lock(mu_);
  if (closed_) throw LabelingAborted("labeling session closed");
  Pending p;
  p.pair = pair;
  p.issued_at = std::chrono::system_clock::now();
  p.wire = {{"pair_id", pair.pair_id},
            {"env_name", env_.name()},
            {"layout", env_.layout_rows()},
            {"snippet_a", snippet_points(pair.snippet_a)},
            {"snippet_b", snippet_points(pair.snippet_b)}};
  pending_ = std::move(p);
  status_ = "waiting_for_label";
  cv_.wait(lock, [this] { return closed_ || pending_->reply.has_value(); });
  if (!pending_->reply) {
    pending_.reset();
    throw LabelingAborted("labeling session closed while waiting for a label");
  }
  const Answer a = *pending_->reply;
  pending_.reset();
  status_ = "training";
  return a;
}

void QuerySession::set_status(std::string status) {
  std::lock_guard lock(mu_);
  status_ = std::move(status);
}

void QuerySession::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

QuerySession::Submitted QuerySession::submit(PairId pair_id, Answer answer) {
  Submitted out;
  {
    std::lock_guard lock(mu_);
    if (closed_ || !pending_ || pending_->reply || pending_->pair.pair_id != pair_id) {
      out.next_available = pending_.has_value() && !pending_->reply;
      return out;
    }
    pending_->reply = answer;
    if (answer != Answer::SKIP) ++consumed_;
    if (answer == Answer::A || answer == Answer::B) {
      PreferenceRecord r;
      r.pair_id = pair_id;
      r.snippet_a = pending_->pair.snippet_a;
      r.snippet_b = pending_->pair.snippet_b;
      r.label = answer == Answer::A ? Preference::A_PREFERRED : Preference::B_PREFERRED;
      r.labeler = LabelerKind::HUMAN;
      answered_.push_back(std::move(r));
    }
    out.result = SubmitResult::ACCEPTED;
    out.next_available = consumed_ < schedule_.total_budget();
  }
  cv_.notify_all();
  return out;
}

std::optional<PairId> QuerySession::pending_id() const {
  std::lock_guard lock(mu_);
  if (!pending_ || pending_->reply) return std::nullopt;
  return pending_->pair.pair_id;
}

std::optional<nlohmann::json> QuerySession::pending_query() const {
  std::lock_guard lock(mu_);
  if (!pending_ || pending_->reply) return std::nullopt;
  return pending_->wire;
}

nlohmann::json QuerySession::summary() const {
  std::lock_guard lock(mu_);
  return {{"session_id", session_id_},
          {"labeled_count", answered_.size()},
          {"total_budget", schedule_.total_budget()},
          {"status", status_}};
}

std::vector<PreferenceRecord> QuerySession::answered() const {
  std::lock_guard lock(mu_);
  return answered_;
}

std::size_t QuerySession::labeled_count() const {
  std::lock_guard lock(mu_);
  return answered_.size();
}

struct LabelingServer::Impl {
  httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

LabelingServer::LabelingServer(QuerySession& session, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.Get("/api/session", [&session](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, session.summary());
  });
  srv.Get("/api/query", [&session](const httplib::Request&, httplib::Response& res) {
    if (auto q = session.pending_query()) {
      send_json(res, 200, *q);
    } else {
      send_json(res, 404, {{"error", "no pending query"}, {"status", session.summary()["status"]}});
    }
  });
  srv.Post("/api/label", [&session](const httplib::Request& req, httplib::Response& res) {
    PairId pair_id = 0;
    Answer choice = Answer::A;
    try {
      const auto body = nlohmann::json::parse(req.body);
      pair_id = body.at("pair_id").get<PairId>();
      const auto c = body.at("choice").get<std::string>();
      if (c != "a" && c != "b" && c != "skip") throw std::invalid_argument("choice must be a, b or skip");
      choice = answer_from_string(c);
    } catch (const std::exception& e) {
      send_json(res, 400, {{"accepted", false}, {"next_available", false}, {"error", e.what()}});
      return;
    }
    const auto r = session.submit(pair_id, choice);
    if (r.result == QuerySession::SubmitResult::ACCEPTED) {
      send_json(res, 200, {{"accepted", true}, {"next_available", r.next_available}});
    } else {
      send_json(res, 409, {{"accepted", false},
                           {"next_available", r.next_available},
                           {"error", "pair " + std::to_string(pair_id) + " is not pending"}});
    }
  });
  if (!static_dir.empty()) srv.set_mount_point("/", static_dir.string());
}

LabelingServer::~LabelingServer() { stop(); }

int LabelingServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&srv] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  return bound;
}

void LabelingServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace opal
