#include "opal/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>

#include "opal/dataset_gen.hpp"
#include "opal/dataset_io.hpp"

namespace opal {

namespace {

// Reads keys from one JSON object and complains about the ones nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  std::optional<nlohmann::json> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(name_ + ": unknown key '" + k + "'");
    }
  }

  const std::string& name() const { return name_; }

 private:
  const nlohmann::json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

OptimizerConfig::Kind optimizer_kind(const std::string& s, const std::string& where) {
  if (s == "adam") return OptimizerConfig::Kind::ADAM;
  if (s == "momentum") return OptimizerConfig::Kind::MOMENTUM;
  throw ConfigError(where + ": unknown optimizer '" + s + "'");
}

const char* optimizer_name(OptimizerConfig::Kind k) {
  return k == OptimizerConfig::Kind::ADAM ? "adam" : "momentum";
}

void read_optimizer(Section& s, OptimizerConfig& opt) {
  std::string kind = optimizer_name(opt.kind);
  s.read("optimizer", kind);
  opt.kind = optimizer_kind(kind, s.name());
  s.read("lr", opt.lr);
  if (!(opt.lr > 0.0)) throw ConfigError(s.name() + ".lr must be positive");
}

template <typename F>
auto wrap_invalid(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void validate(const PipelineConfig& c) {
  wrap_invalid("env", [&] { return make_environment(c.env); });
  for (const auto& e : c.degradation_envs) {
    wrap_invalid("degradation.envs", [&] { return make_environment(e); });
  }
  if (c.dataset_path.empty() && (c.dataset_steps == 0 || c.traj_len == 0)) {
    throw ConfigError("dataset: steps and traj_len must be >= 1");
  }
  const auto& o = c.opal;
  if (o.snippet_len == 0) throw ConfigError("opal.snippet_len must be >= 1");
  if (o.pool_pairs == 0) throw ConfigError("opal.pool_pairs must be >= 1");
  wrap_invalid("opal.schedule", [&] { o.schedule.validate(); return 0; });
  if (o.posterior_kind == PosteriorKind::ENSEMBLE && o.reward.ensemble_size < 2) {
    throw ConfigError("reward.ensemble_size must be >= 2");
  }
  if (o.posterior_kind == PosteriorKind::DROPOUT &&
      (!(o.reward.dropout_rate > 0.0 && o.reward.dropout_rate < 1.0) || o.reward.dropout_samples < 2)) {
    throw ConfigError("reward: dropout needs 0 < dropout_rate < 1 and dropout_samples >= 2");
  }
  if (!(o.reward.beta > 0.0)) throw ConfigError("reward.beta must be positive");
  const auto& a = c.awr;
  if (!(a.gamma >= 0.0 && a.gamma <= 1.0)) throw ConfigError("awr.gamma must be in [0, 1]");
  if (!(a.temperature > 0.0)) throw ConfigError("awr.temperature must be positive");
  if (!(a.max_weight > 0.0)) throw ConfigError("awr.max_weight must be positive");
  if (c.eval_episodes == 0) throw ConfigError("eval.episodes must be >= 1");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}


}  // namespace

PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  Section top(j, "config");
  top.read("env", c.env);
  top.read("seed", c.seed);

  if (auto d = top.sub("dataset")) {
    Section s(*d, "dataset");
    s.read("steps", c.dataset_steps);
    s.read("traj_len", c.traj_len);
    s.read("path", c.dataset_path);
    s.finish();
  }
  if (auto r = top.sub("reward")) {
    Section s(*r, "reward");
    auto& rc = c.opal.reward;
    s.read("hidden", rc.hidden);
    s.read("ensemble_size", rc.ensemble_size);
    s.read("dropout_rate", rc.dropout_rate);
    s.read("dropout_samples", rc.dropout_samples);
    s.read("beta", rc.beta);
    s.read("batch_size", rc.batch_size);
    read_optimizer(s, rc.optimizer);
    s.finish();
  }
  if (auto o = top.sub("opal")) {
    Section s(*o, "opal");
    std::string posterior = to_string(c.opal.posterior_kind);
    std::string acquisition = to_string(c.opal.acquisition);
    s.read("posterior", posterior);
    s.read("acquisition", acquisition);
    c.opal.posterior_kind = wrap_invalid("opal.posterior", [&] { return posterior_kind_from_string(posterior); });
    c.opal.acquisition = wrap_invalid("opal.acquisition", [&] { return acquisition_from_string(acquisition); });
    s.read("pool_pairs", c.opal.pool_pairs);
    s.read("held_out_pairs", c.opal.held_out_pairs);
    s.read("snippet_len", c.opal.snippet_len);
    s.read("rebuild_pool", c.opal.rebuild_pool);
    if (auto sched = s.sub("schedule")) {
      Section ss(*sched, "opal.schedule");
      auto& q = c.opal.schedule;
      ss.read("n_initial", q.n_initial);
      ss.read("epochs_initial", q.epochs_initial);
      ss.read("pairs_per_round", q.pairs_per_round);
      ss.read("epochs_per_round", q.epochs_per_round);
      ss.read("n_rounds", q.n_rounds);
      ss.finish();
    }
    s.finish();
  }
  if (auto a = top.sub("awr")) {
    Section s(*a, "awr");
    auto& ac = c.awr;
    s.read("gamma", ac.gamma);
    s.read("temperature", ac.temperature);
    s.read("max_weight", ac.max_weight);
    s.read("iterations", ac.iterations);
    s.read("value_epochs", ac.value_epochs);
    s.read("policy_epochs", ac.policy_epochs);
    s.read("batch_size", ac.batch_size);
    s.read("hidden", ac.hidden);
    read_optimizer(s, ac.policy_optimizer);
    ac.value_optimizer = ac.policy_optimizer;
    s.finish();
  }
  if (auto e = top.sub("eval")) {
    Section s(*e, "eval");
    s.read("episodes", c.eval_episodes);
    s.read("horizon", c.eval_horizon);
    s.finish();
  }
  if (auto d = top.sub("degradation")) {
    Section s(*d, "degradation");
    s.read("envs", c.degradation_envs);
    s.read("seeds", c.degradation_seeds);
    s.finish();
  }
  top.finish();
  validate(c);
  return c;
}

nlohmann::json to_json(const PipelineConfig& c) {
  const auto& rc = c.opal.reward;
  return {
      {"env", c.env},
      {"seed", c.seed},
      {"dataset", {{"steps", c.dataset_steps}, {"traj_len", c.traj_len}, {"path", c.dataset_path}}},
      {"reward",
       {{"hidden", rc.hidden},
        {"ensemble_size", rc.ensemble_size},
        {"dropout_rate", rc.dropout_rate},
        {"dropout_samples", rc.dropout_samples},
        {"beta", rc.beta},
        {"batch_size", rc.batch_size},
        {"optimizer", optimizer_name(rc.optimizer.kind)},
        {"lr", rc.optimizer.lr}}},
      {"opal",
       {{"posterior", to_string(c.opal.posterior_kind)},
        {"acquisition", to_string(c.opal.acquisition)},
        {"pool_pairs", c.opal.pool_pairs},
        {"held_out_pairs", c.opal.held_out_pairs},
        {"snippet_len", c.opal.snippet_len},
        {"rebuild_pool", c.opal.rebuild_pool},
        {"schedule", to_json(c.opal.schedule)}}},
      {"awr",
       {{"gamma", c.awr.gamma},
        {"temperature", c.awr.temperature},
        {"max_weight", c.awr.max_weight},
        {"iterations", c.awr.iterations},
        {"value_epochs", c.awr.value_epochs},
        {"policy_epochs", c.awr.policy_epochs},
        {"batch_size", c.awr.batch_size},
        {"hidden", c.awr.hidden},
        {"optimizer", optimizer_name(c.awr.policy_optimizer.kind)},
        {"lr", c.awr.policy_optimizer.lr}}},
      {"eval", {{"episodes", c.eval_episodes}, {"horizon", c.eval_horizon}}},
      {"degradation", {{"envs", c.degradation_envs}, {"seeds", c.degradation_seeds}}},
  };
}

PipelineConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const PipelineConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return hex64(h);
}

OfflineDataset make_dataset(const PipelineConfig& config) {
  if (!config.dataset_path.empty()) {
    OfflineDataset d = load_dataset(config.dataset_path);
    if (d.env_name != config.env) {
      throw ConfigError("dataset was generated for '" + d.env_name + "', config says '" + config.env + "'");
    }
    return d;
  }
  const auto env = make_environment(config.env);
  return gen_dataset(*env, config.dataset_steps, config.seed, config.traj_len);
}

std::size_t eval_horizon(const PipelineConfig& config, const Environment& env) {
  return config.eval_horizon == 0 ? env.horizon() : config.eval_horizon;
}

double evaluate_greedy(const PipelineConfig& config, const Environment& env, const PolicyModel& policy,
                       std::uint64_t seed) {
  return evaluate_policy(policy, env, config.eval_episodes, eval_horizon(config, env),
                         derive_seed(seed, 9000), ActionMode::GREEDY)
      .mean_return;
}

Baselines evaluate_baselines(const PipelineConfig& config, const Environment& env,
                             const OfflineDataset& dataset, std::uint64_t seed) {
  Baselines b;
  const RewardFreeDataset rf(dataset);
  const auto gt_rewards = resolve_rewards({RewardKind::GROUND_TRUTH}, dataset);
  b.gt = evaluate_greedy(config, env, train_awr(rf, gt_rewards, config.awr, seed), seed);
  b.random = evaluate_policy(random_policy(env.state_dim(), env.action_count()), env, config.eval_episodes,
                             eval_horizon(config, env), derive_seed(seed, 9000), ActionMode::SAMPLE)
                 .mean_return;
  return b;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw Error("write failed: " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir,
                            Labeler* labeler) {
  validate(config);
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir);
  auto stage = [](const char* name, auto&& f) {
    try {
      return f();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
  };

  const auto env = make_environment(config.env);
  const OfflineDataset dataset = stage("gen-data", [&] {
    OfflineDataset d = make_dataset(config);
    if (write) save_dataset(d, out_dir / "dataset.jsonl");
    return d;
  });
  const RewardFreeDataset reward_free(dataset);
  OracleLabeler oracle(dataset);
  Labeler& active = labeler != nullptr ? *labeler : oracle;

  PipelineResult result;
  const std::uint64_t steps_before = env_step_count();
  result.loop = stage("label", [&] {
    LoopHooks hooks;
    if (write) {
      hooks.on_answer = [&](const std::vector<TranscriptEntry>& t) {
        write_json({{"seed", config.seed}, {"transcript", to_json(t)}}, out_dir / "transcript.json");
      };
    }
    OpalResult r = run_opal_loop(reward_free, config.opal, active, config.seed, &oracle, hooks);
    if (write) {
      write_json(to_json(r.buffer), out_dir / "preferences.json");
      save_posterior(r.posterior, out_dir / "reward_checkpoint.json");
    }
    return r;
  });
  const auto rewards = stage("relabel", [&] {
    return relabel_dataset(result.loop.posterior, reward_free, derive_seed(config.seed, 8000));
  });
  result.policy = stage("train-policy", [&] {
    PolicyModel p = train_awr(reward_free, rewards, config.awr, config.seed);
    if (write) save_policy(p, out_dir / "policy.json");
    return p;
  });
  result.env_steps_during_learning = env_step_count() - steps_before;

  stage("eval", [&] {
    const Baselines b = evaluate_baselines(config, *env, dataset, config.seed);
    RunReport& r = result.report;
    r.env = config.env;
    r.acquisition = to_string(config.opal.acquisition);
    r.posterior_kind = to_string(config.opal.posterior_kind);
    r.queries_used = result.loop.transcript.size();
    r.policy_return = evaluate_greedy(config, *env, result.policy, config.seed);
    r.gt_return = b.gt;
    r.random_return = b.random;
    r.normalized_score = normalized_score(r.policy_return, b.gt, b.random);
    for (const auto& m : result.loop.rounds) {
      if (m.holdout_accuracy) r.holdout_accuracy.push_back(*m.holdout_accuracy);
    }
    return 0;
  });

  if (write) {
    write_json(report_json(result), out_dir / "report.json");
    write_json({{"config", to_json(config)},
                {"config_hash", config_hash(config)},
                {"seed", config.seed},
                {"artifacts",
                 {"dataset.jsonl", "transcript.json", "preferences.json", "reward_checkpoint.json",
                  "policy.json", "report.json"}}},
               out_dir / "manifest.json");
  }
  return result;
}

nlohmann::json report_json(const PipelineResult& result) {
  nlohmann::json j = to_json(result.report);
  j["labeled_pairs"] = result.loop.buffer.records.size();
  j["discarded_pairs"] = result.loop.discarded;
  j["env_steps_during_learning"] = result.env_steps_during_learning;
  return j;
}

std::vector<DegradationRow> run_degradation_study(const PipelineConfig& config) {
  validate(config);
  const std::vector<std::string> envs =
      config.degradation_envs.empty() ? std::vector<std::string>{config.env} : config.degradation_envs;
  const std::vector<std::uint64_t> seeds =
      config.degradation_seeds.empty() ? std::vector<std::uint64_t>{config.seed} : config.degradation_seeds;
  std::vector<DegradationRow> rows;
  for (const auto& name : envs) {
    const auto env = make_environment(name);
    DegradationRow row;
    row.env = name;
    for (std::uint64_t seed : seeds) {
      PipelineConfig c = config;
      c.env = name;
      c.seed = seed;
      const OfflineDataset dataset = make_dataset(c);
      const RewardFreeDataset rf(dataset);
      const Baselines b = evaluate_baselines(c, *env, dataset, seed);
      auto score = [&](RewardKind kind) {
        return evaluate_greedy(c, *env, train_awr(rf, resolve_rewards({kind}, dataset), c.awr, seed), seed);
      };
      row.gt += b.gt;
      row.random += b.random;
      row.avg += score(RewardKind::AVERAGE);
      row.zero += score(RewardKind::ZERO);
      row.bc += evaluate_greedy(c, *env, train_bc(rf, c.awr, seed), seed);
    }
    const double n = static_cast<double>(seeds.size());
    row.gt /= n;
    row.avg /= n;
    row.zero /= n;
    row.bc /= n;
    row.random /= n;
    row.seeds = seeds.size();
    row.degradation_pct = degradation_pct(row.gt, row.avg, row.zero, row.random);
    row.flagged = row.degradation_pct >= kDegradationThreshold;
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json to_json(const std::vector<DegradationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"env", r.env},
                   {"gt", r.gt},
                   {"avg", r.avg},
                   {"zero", r.zero},
                   {"bc", r.bc},
                   {"random", r.random},
                   {"degradation_pct", r.degradation_pct},
                   {"flagged", r.flagged},
                   {"seeds", r.seeds}});
  }
  return out;
}

}  // namespace opal
