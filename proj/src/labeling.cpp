#include "opal/labeling.hpp"

#include <stdexcept>

#include "opal/dataset_io.hpp"
#include "opal/evaluation.hpp"

namespace opal {

void QuerySchedule::validate() const {
  if (n_initial == 0 || epochs_initial == 0 || pairs_per_round == 0 || epochs_per_round == 0) {
    throw std::invalid_argument("schedule counts must be >= 1 (except n_rounds)");
  }
}

nlohmann::json to_json(const QuerySchedule& s) {
  return {{"n_initial", s.n_initial},
          {"epochs_initial", s.epochs_initial},
          {"pairs_per_round", s.pairs_per_round},
          {"epochs_per_round", s.epochs_per_round},
          {"n_rounds", s.n_rounds}};
}

QuerySchedule schedule_from_json(const nlohmann::json& j) {
  QuerySchedule s;
  s.n_initial = j.value("n_initial", s.n_initial);
  s.epochs_initial = j.value("epochs_initial", s.epochs_initial);
  s.pairs_per_round = j.value("pairs_per_round", s.pairs_per_round);
  s.epochs_per_round = j.value("epochs_per_round", s.epochs_per_round);
  s.n_rounds = j.value("n_rounds", s.n_rounds);
  s.validate();
  return s;
}

const char* to_string(Answer a) {
  switch (a) {
    case Answer::A: return "a";
    case Answer::B: return "b";
    case Answer::TIE: return "tie";
    case Answer::SKIP: return "skip";
  }
  return "?";
}

Answer answer_from_string(const std::string& s) {
  if (s == "a") return Answer::A;
  if (s == "b") return Answer::B;
  if (s == "tie") return Answer::TIE;
  if (s == "skip") return Answer::SKIP;
  throw std::invalid_argument("unknown answer '" + s + "'");
}

Answer oracle_label(const Snippet& a, const Snippet& b, const SnippetReturnFn& gt_return) {
  const double ra = gt_return(a);
  const double rb = gt_return(b);
  if (ra > rb) return Answer::A;
  if (rb > ra) return Answer::B;
  return Answer::TIE;
}

OracleLabeler::OracleLabeler(const OfflineDataset& dataset) : dataset_(dataset) {
  for (std::size_t i = 0; i < dataset_.trajectories.size(); ++i) {
    index_.emplace(dataset_.trajectories[i].id, i);
  }
}

double OracleLabeler::gt_return(const Snippet& snippet) const {
  const auto it = index_.find(snippet.source_id);
  if (it == index_.end()) throw std::out_of_range("unknown trajectory '" + snippet.source_id + "'");
  const Trajectory& traj = dataset_.trajectories[it->second];
  if (snippet.start + snippet.length > traj.size()) {
    throw std::out_of_range("snippet exceeds trajectory '" + traj.id + "'");
  }
  double total = 0.0;
  for (std::size_t t = snippet.start; t < snippet.start + snippet.length; ++t) {
    const auto& r = traj.transitions[t].gt_reward;
    if (!r) throw std::invalid_argument("trajectory '" + traj.id + "' has no ground-truth reward");
    total += *r;
  }
  return total;
}

Answer OracleLabeler::answer(const CandidatePair& pair) {
  return oracle_label(pair.snippet_a, pair.snippet_b,
                      [this](const Snippet& s) { return gt_return(s); });
}

ReplayLabeler::ReplayLabeler(std::vector<TranscriptEntry> transcript, Labeler& live)
    : transcript_(std::move(transcript)), live_(live) {}

Answer ReplayLabeler::answer(const CandidatePair& pair) {
  if (next_ < transcript_.size()) {
    const auto& e = transcript_[next_++];
    if (e.pair_id != pair.pair_id) {
      throw std::runtime_error("transcript diverged: recorded pair " + std::to_string(e.pair_id) +
                               ", loop asked for " + std::to_string(pair.pair_id));
    }
    return e.answer;
  }
  return live_.answer(pair);
}

namespace {

PreferenceRecord make_record(const CandidatePair& pair, Answer answer, LabelerKind kind) {
  PreferenceRecord r;
  r.pair_id = pair.pair_id;
  r.snippet_a = pair.snippet_a;
  r.snippet_b = pair.snippet_b;
  r.label = answer == Answer::A ? Preference::A_PREFERRED : Preference::B_PREFERRED;
  r.labeler = kind;
  return r;
}

class Loop {
 public:
  Loop(const RewardFreeDataset& dataset, const OpalConfig& cfg, Labeler& labeler, std::uint64_t seed,
       const LoopHooks& hooks)
      : dataset_(dataset), cfg_(cfg), labeler_(labeler), seed_(seed), hooks_(hooks) {}

  OpalResult run(const OracleLabeler* evaluator) {
    cfg_.schedule.validate();
    status("preparing");
    PairId next_id = 0;
    if (evaluator != nullptr && cfg_.held_out_pairs > 0) {
      CandidatePool held = build_pool(dataset_, cfg_.held_out_pairs, cfg_.snippet_len,
                                      derive_seed(seed_, 1), next_id);
      for (const auto& p : held.pairs()) {
        const Answer a = oracle_label(p.snippet_a, p.snippet_b,
                                      [evaluator](const Snippet& s) { return evaluator->gt_return(s); });
        if (a == Answer::TIE) continue;
        out_.buffer.held_out.push_back(make_record(p, a, LabelerKind::ORACLE));
      }
    }
    next_id += cfg_.held_out_pairs;

    pool_ = build_pool(dataset_, cfg_.pool_pairs, cfg_.snippet_len, derive_seed(seed_, 2), next_id);
    next_id += cfg_.pool_pairs;
    for (const auto& p : pool_.pairs()) out_.pool_ids.push_back(p.pair_id);

    std::vector<std::vector<double>> states;
    for (const auto& t : dataset_.trajectories()) {
      for (const auto& tr : t.transitions) states.push_back(tr.state);
    }
    out_.posterior = make_posterior(cfg_.posterior_kind, dataset_.state_dim(), cfg_.reward,
                                    derive_seed(seed_, 3), states);
    RewardTrainer trainer(out_.posterior, cfg_.reward, derive_seed(seed_, 4));

    const auto& sched = cfg_.schedule;
    // Initial batch: uniformly random pairs.
    ask(select_queries(pool_, out_.posterior, Acquisition::RANDOM, pool_.unlabeled_count(),
                       derive_seed(seed_, 100)),
        sched.n_initial);
    finish_round(0, trainer, sched.epochs_initial);

    for (std::size_t round = 1; round <= sched.n_rounds; ++round) {
      if (cfg_.rebuild_pool && round > 1) {
        pool_ = build_pool(dataset_, cfg_.pool_pairs, cfg_.snippet_len, derive_seed(seed_, 200 + round),
                           next_id);
        next_id += cfg_.pool_pairs;
      }
      status("selecting");
      const auto ranking = select_queries(pool_, out_.posterior, cfg_.acquisition,
                                          pool_.unlabeled_count(), derive_seed(seed_, 100 + round),
                                          cfg_.reward.beta);
      ask(ranking, sched.pairs_per_round);
      finish_round(round, trainer, sched.epochs_per_round);
    }
    status("done");
    return std::move(out_);
  }

 private:
  // Walks the ranking until `count` non-skip answers are collected. A skip is
  // replaced by the next candidate; a tie uses up its slot.
  void ask(const std::vector<PairId>& ranking, std::size_t count) {
    std::size_t answered = 0;
    for (PairId id : ranking) {
      if (answered == count) break;
      if (pool_.is_labeled(id)) continue;
      const CandidatePair& pair = pool_.get(id);
      status("waiting_for_label");
      const Answer a = labeler_.answer(pair);
      pool_.mark_labeled(id);
      out_.transcript.push_back({id, a});
      if (hooks_.on_answer) hooks_.on_answer(out_.transcript);
      if (a == Answer::SKIP) {
        out_.discarded.push_back(id);
        continue;
      }
      ++answered;
      if (a == Answer::TIE) {
        out_.discarded.push_back(id);
        continue;
      }
      out_.buffer.add(make_record(pair, a, labeler_.kind()));
      if (hooks_.on_progress) hooks_.on_progress(out_.buffer.records.size());
    }
  }

  void finish_round(std::size_t round, RewardTrainer& trainer, std::size_t epochs) {
    status("training");
    RoundMetrics m;
    m.round = round;
    m.labeled = out_.buffer.records.size();
    if (!out_.buffer.records.empty()) m.train_loss = trainer.train(out_.buffer, epochs);
    if (!out_.buffer.held_out.empty()) {
      m.holdout_accuracy = holdout_accuracy(out_.posterior, out_.buffer.held_out, cfg_.reward.beta,
                                            derive_seed(seed_, 300 + round));
    }
    out_.rounds.push_back(std::move(m));
  }

  void status(const char* s) {
    if (hooks_.on_status) hooks_.on_status(s);
  }

  const RewardFreeDataset& dataset_;
  const OpalConfig& cfg_;
  Labeler& labeler_;
  std::uint64_t seed_;
  const LoopHooks& hooks_;
  CandidatePool pool_;
  OpalResult out_;
};

}  // namespace

OpalResult run_opal_loop(const RewardFreeDataset& dataset, const OpalConfig& config, Labeler& labeler,
                         std::uint64_t seed, const OracleLabeler* evaluator, const LoopHooks& hooks) {
  return Loop(dataset, config, labeler, seed, hooks).run(evaluator);
}

nlohmann::json to_json(const std::vector<TranscriptEntry>& transcript) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : transcript) j.push_back({{"pair_id", e.pair_id}, {"answer", to_string(e.answer)}});
  return j;
}

std::vector<TranscriptEntry> transcript_from_json(const nlohmann::json& j) {
  std::vector<TranscriptEntry> out;
  for (const auto& e : j) {
    out.push_back({e.at("pair_id").get<PairId>(), answer_from_string(e.at("answer").get<std::string>())});
  }
  return out;
}

nlohmann::json to_json(const PreferenceBuffer& buffer) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : buffer.records) records.push_back(to_json(r));
  nlohmann::json held = nlohmann::json::array();
  for (const auto& r : buffer.held_out) held.push_back(to_json(r));
  return {{"records", records}, {"held_out", held}};
}

PreferenceBuffer buffer_from_json(const nlohmann::json& j) {
  PreferenceBuffer b;
  for (const auto& r : j.at("records")) b.records.push_back(record_from_json(r));
  for (const auto& r : j.at("held_out")) b.held_out.push_back(record_from_json(r));
  b.validate();
  return b;
}

}  // namespace opal
