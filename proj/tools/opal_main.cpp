#include <chrono>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "opal/dataset_gen.hpp"
#include "opal/dataset_io.hpp"
#include "opal/labeling_server.hpp"
#include "opal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace opal;

namespace {

constexpr int kConfigExit = 2;
constexpr int kStageExit = 3;

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = "opal-out";
  std::string config_path;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig c = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (g.seed_set) c.seed = g.seed;
  return c;
}

fs::path out_path(const Globals& g, const std::string& explicit_path, const char* default_name) {
  if (!explicit_path.empty()) return explicit_path;
  fs::create_directories(g.out_dir);
  return fs::path(g.out_dir) / default_name;
}

OfflineDataset require_dataset(const std::string& path) {
  if (path.empty()) throw ConfigError("--dataset is required");
  return load_dataset(path);
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"opal: offline preference-based apprenticeship learning"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--out-dir", g.out_dir, "directory for outputs");
  app.add_option("--config", g.config_path, "pipeline config (JSON)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
  std::string gen_env = "umaze-mini", gen_out;
  std::size_t gen_steps = 50000, gen_traj_len = 1000;
  gen->add_option("--env", gen_env)->check(CLI::IsMember(environment_names()));
  gen->add_option("--steps", gen_steps);
  gen->add_option("--traj-len", gen_traj_len);
  gen->add_option("--out", gen_out);

  // label
  auto* label = app.add_subcommand("label", "run the labeling loop with the oracle labeler");
  std::string label_dataset, label_acq, label_resume;
  label->add_option("--dataset", label_dataset);
  label->add_option("--acquisition", label_acq)->check(CLI::IsMember({"random", "disagree", "infogain"}));
  label->add_option("--resume", label_resume, "transcript.json from an interrupted run");

  // train-reward
  auto* train_reward_cmd = app.add_subcommand("train-reward", "fit a reward posterior to a preference file");
  std::string tr_dataset, tr_prefs, tr_out;
  std::size_t tr_epochs = 15;
  train_reward_cmd->add_option("--dataset", tr_dataset);
  train_reward_cmd->add_option("--preferences", tr_prefs)->required();
  train_reward_cmd->add_option("--epochs", tr_epochs);
  train_reward_cmd->add_option("--out", tr_out);

  // relabel
  auto* relabel = app.add_subcommand("relabel", "replace dataset rewards with the learned reward");
  std::string rl_dataset, rl_reward, rl_out;
  relabel->add_option("--dataset", rl_dataset);
  relabel->add_option("--reward", rl_reward)->required();
  relabel->add_option("--out", rl_out);

  // train-policy
  auto* train_policy = app.add_subcommand("train-policy", "train an AWR policy");
  std::string tp_dataset, tp_rewards = "stored", tp_out;
  train_policy->add_option("--dataset", tp_dataset);
  train_policy->add_option("--rewards", tp_rewards, "stored | zero | average | bc")
      ->check(CLI::IsMember({"stored", "zero", "average", "bc"}));
  train_policy->add_option("--out", tp_out);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a policy with the ground-truth reward");
  std::string ev_policy, ev_env, ev_rollouts;
  std::size_t ev_rollout_count = 5;
  bool ev_random = false;
  eval->add_option("--policy", ev_policy);
  eval->add_flag("--random", ev_random, "evaluate the uniform random policy");
  eval->add_option("--env", ev_env);
  eval->add_option("--rollouts", ev_rollouts, "write rollout polylines to this JSON file");
  eval->add_option("--rollout-count", ev_rollout_count);

  auto* degradation = app.add_subcommand("degradation", "trivial-reward degradation study");

  // serve
  auto* serve = app.add_subcommand("serve", "serve labeling queries over HTTP");
  std::string sv_dataset, sv_schedule, sv_acq, sv_static, sv_host = "127.0.0.1";
  int sv_port = 8080;
  bool sv_resume = false;
  double sv_linger = 5.0;
  serve->add_option("--dataset", sv_dataset);
  serve->add_option("--schedule", sv_schedule, "query schedule (JSON)");
  serve->add_option("--acquisition", sv_acq)->check(CLI::IsMember({"random", "disagree", "infogain"}));
  serve->add_option("--port", sv_port);
  serve->add_option("--host", sv_host);
  serve->add_option("--static-dir", sv_static, "web UI assets");
  serve->add_flag("--resume", sv_resume, "continue from <out-dir>/session.json");
  serve->add_option("--linger", sv_linger, "seconds to keep serving after the last label");

  auto* pipeline = app.add_subcommand("pipeline", "gen-data -> label -> relabel -> train-policy -> eval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    PipelineConfig cfg;
    try {
      cfg = resolve_config(g);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kConfigExit;
    }

    if (*gen) {
      const auto env = make_environment(gen_env);
      const OfflineDataset d = gen_dataset(*env, gen_steps, cfg.seed, gen_traj_len);
      const fs::path out = out_path(g, gen_out, "dataset.jsonl");
      save_dataset(d, out);
      std::cout << "wrote " << d.trajectories.size() << " trajectories (" << d.transition_count()
                << " transitions) to " << out.string() << "\n";
    } else if (*label) {
      if (!label_acq.empty()) cfg.opal.acquisition = acquisition_from_string(label_acq);
      const OfflineDataset d = label_dataset.empty() ? make_dataset(cfg) : load_dataset(label_dataset);
      OracleLabeler oracle(d);
      std::vector<TranscriptEntry> prior;
      if (!label_resume.empty()) prior = transcript_from_json(read_json(label_resume).at("transcript"));
      ReplayLabeler labeler(prior, oracle);
      fs::create_directories(g.out_dir);
      const fs::path dir = g.out_dir;
      LoopHooks hooks;
      hooks.on_answer = [&](const std::vector<TranscriptEntry>& t) {
        write_json({{"seed", cfg.seed}, {"transcript", to_json(t)}}, dir / "transcript.json");
      };
      const OpalResult r = run_opal_loop(RewardFreeDataset(d), cfg.opal, labeler, cfg.seed, &oracle, hooks);
      write_json(to_json(r.buffer), dir / "preferences.json");
      save_posterior(r.posterior, dir / "reward_checkpoint.json");
      nlohmann::json rounds = nlohmann::json::array();
      for (const auto& m : r.rounds) {
        rounds.push_back({{"round", m.round},
                          {"labeled", m.labeled},
                          {"holdout_accuracy", m.holdout_accuracy ? nlohmann::json(*m.holdout_accuracy) : nlohmann::json()}});
      }
      print_json({{"labeled_pairs", r.buffer.records.size()}, {"discarded", r.discarded}, {"rounds", rounds}});
    } else if (*train_reward_cmd) {
      const OfflineDataset d = tr_dataset.empty() ? make_dataset(cfg) : load_dataset(tr_dataset);
      const PreferenceBuffer buffer = buffer_from_json(read_json(tr_prefs));
      const RewardFreeDataset rf(d);
      std::vector<std::vector<double>> states;
      for (const auto& t : rf.trajectories()) {
        for (const auto& tr : t.transitions) states.push_back(tr.state);
      }
      RewardPosterior post = make_posterior(cfg.opal.posterior_kind, rf.state_dim(), cfg.opal.reward,
                                            derive_seed(cfg.seed, 3), states);
      post = train_reward(std::move(post), buffer, tr_epochs, cfg.opal.reward, derive_seed(cfg.seed, 4));
      const fs::path out = out_path(g, tr_out, "reward_checkpoint.json");
      save_posterior(post, out);
      nlohmann::json summary = {{"records", buffer.records.size()}, {"out", out.string()}};
      if (!buffer.held_out.empty()) {
        summary["holdout_accuracy"] = holdout_accuracy(post, buffer.held_out, cfg.opal.reward.beta);
      }
      print_json(summary);
    } else if (*relabel) {
      OfflineDataset d = rl_dataset.empty() ? make_dataset(cfg) : load_dataset(rl_dataset);
      const RewardPosterior post = load_posterior(rl_reward);
      const auto rewards = relabel_dataset(post, RewardFreeDataset(d), derive_seed(cfg.seed, 8000));
      std::size_t i = 0;
      for (auto& t : d.trajectories) {
        t.meta["rewards"] = "learned";
        for (auto& tr : t.transitions) tr.gt_reward = rewards[i++];
      }
      const fs::path out = out_path(g, rl_out, "relabeled.jsonl");
      save_dataset(d, out);
      std::cout << "wrote relabeled dataset to " << out.string() << "\n";
    } else if (*train_policy) {
      const OfflineDataset d = tp_dataset.empty() ? make_dataset(cfg) : load_dataset(tp_dataset);
      const RewardFreeDataset rf(d);
      PolicyModel p = [&] {
        if (tp_rewards == "bc") return train_bc(rf, cfg.awr, cfg.seed);
        const RewardKind kind = tp_rewards == "zero"      ? RewardKind::ZERO
                                : tp_rewards == "average" ? RewardKind::AVERAGE
                                                          : RewardKind::GROUND_TRUTH;
        return train_awr(rf, resolve_rewards({kind}, d), cfg.awr, cfg.seed);
      }();
      const fs::path out = out_path(g, tp_out, "policy.json");
      save_policy(p, out);
      std::cout << "wrote policy to " << out.string() << "\n";
    } else if (*eval) {
      const auto env = make_environment(ev_env.empty() ? cfg.env : ev_env);
      if (ev_policy.empty() && !ev_random) throw ConfigError("eval needs --policy or --random");
      const PolicyModel p = ev_random ? random_policy(env->state_dim(), env->action_count()) : load_policy(ev_policy);
      const ActionMode mode = ev_random ? ActionMode::SAMPLE : ActionMode::GREEDY;
      const EvalResult r = evaluate_policy(p, *env, cfg.eval_episodes, eval_horizon(cfg, *env),
                                           derive_seed(cfg.seed, 9000), mode);
      if (!ev_rollouts.empty()) {
        write_rollouts(collect_rollouts(p, *env, ev_rollout_count, eval_horizon(cfg, *env),
                                        derive_seed(cfg.seed, 9000), mode),
                       *env, ev_rollouts);
      }
      print_json({{"env", env->name()},
                  {"episodes", cfg.eval_episodes},
                  {"mean_return", r.mean_return},
                  {"standard_error", r.standard_error},
                  {"mean_discounted_return", r.mean_discounted_return}});
    } else if (*degradation) {
      const auto rows = run_degradation_study(cfg);
      fs::create_directories(g.out_dir);
      write_json(to_json(rows), fs::path(g.out_dir) / "degradation.json");
      print_json(to_json(rows));
    } else if (*serve) {
      if (!sv_acq.empty()) cfg.opal.acquisition = acquisition_from_string(sv_acq);
      if (!sv_schedule.empty()) {
        try {
          cfg.opal.schedule = schedule_from_json(read_json(sv_schedule));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("schedule: ") + e.what());
        }
      }
      const OfflineDataset d = sv_dataset.empty() ? make_dataset(cfg) : require_dataset(sv_dataset);
      const auto env = make_environment(d.env_name);
      fs::create_directories(g.out_dir);
      const fs::path dir = g.out_dir;
      const fs::path session_file = dir / "session.json";

      std::string session_id = "session-" + std::to_string(cfg.seed);
      std::vector<TranscriptEntry> prior;
      if (sv_resume) {
        const auto saved = read_json(session_file);
        session_id = saved.at("session_id").get<std::string>();
        prior = transcript_from_json(saved.at("transcript"));
        cfg.seed = saved.at("seed").get<std::uint64_t>();
      }
      QuerySession session(session_id, *env, cfg.opal.schedule);
      SessionLabeler human(session);
      ReplayLabeler labeler(prior, human);
      OracleLabeler evaluator(d);

      LabelingServer server(session, sv_static);
      const int port = server.start(sv_host, sv_port);
      std::cout << "serving session " << session_id << " on http://" << sv_host << ":" << port << "\n"
                << std::flush;

      LoopHooks hooks;
      hooks.on_answer = [&](const std::vector<TranscriptEntry>& t) {
        write_json({{"session_id", session_id}, {"seed", cfg.seed}, {"transcript", to_json(t)}}, session_file);
      };
      hooks.on_status = [&](const char* s) { session.set_status(s); };
      const OpalResult r = run_opal_loop(RewardFreeDataset(d), cfg.opal, labeler, cfg.seed, &evaluator, hooks);
      write_json(to_json(r.buffer), dir / "preferences.json");
      save_posterior(r.posterior, dir / "reward_checkpoint.json");
      session.set_status("done");
      std::cout << "session complete: " << r.buffer.records.size() << " labeled pairs\n" << std::flush;
      std::this_thread::sleep_for(std::chrono::duration<double>(sv_linger));
      session.close();
      server.stop();
    } else if (*pipeline) {
      const PipelineResult r = run_pipeline(cfg, g.out_dir);
      print_json(report_json(r));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const StageError& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return kStageExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStageExit;
  }
  return 0;
}
