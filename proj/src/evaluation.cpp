#include "opal/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "opal/errors.hpp"
#include "opal/maze.hpp"

namespace opal {

namespace {

struct Episode {
  double ret = 0.0;
  double discounted = 0.0;
  std::vector<std::array<double, 2>> points;
};

Episode run_episode(const PolicyModel& policy, const Environment& env, std::size_t horizon,
                    std::uint64_t seed, std::size_t episode, ActionMode mode, bool keep_points) {
  Rng rng = make_rng(seed, 7000 + episode);
  State s = env.initial_state(rng);
  Episode ep;
  double discount = 1.0;
  if (keep_points) ep.points.push_back(env.display_point(s));
  for (std::size_t t = 0; t < horizon; ++t) {
    const int a = mode == ActionMode::GREEDY ? policy.greedy_action(s) : policy.sample_action(s, rng);
    State next = env.step(s, a);
    const double r = env.reward(s, next);
    ep.ret += r;
    ep.discounted += discount * r;
    discount *= kEvalGamma;
    s = std::move(next);
    if (keep_points) ep.points.push_back(env.display_point(s));
  }
  return ep;
}

}  // namespace

EvalResult evaluate_policy(const PolicyModel& policy, const Environment& env, std::size_t n_episodes,
                           std::size_t horizon, std::uint64_t seed, ActionMode mode) {
  if (policy.state_dim() != env.state_dim() || policy.action_count() != env.action_count()) {
    throw std::invalid_argument("policy does not match environment '" + env.name() + "'");
  }
  EvalResult out;
  if (n_episodes == 0) return out;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    const Episode ep = run_episode(policy, env, horizon, seed, e, mode, false);
    out.episode_returns.push_back(ep.ret);
    out.mean_return += ep.ret;
    out.mean_discounted_return += ep.discounted;
  }
  const double n = static_cast<double>(n_episodes);
  out.mean_return /= n;
  out.mean_discounted_return /= n;
  if (n_episodes > 1) {
    double ss = 0.0;
    for (double r : out.episode_returns) ss += (r - out.mean_return) * (r - out.mean_return);
    out.standard_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

double normalized_score(double x, double gt_score, double random_score) {
  const double denom = gt_score - random_score;
  if (denom == 0.0) throw std::invalid_argument("normalized score undefined: gt equals random");
  return 100.0 * (x - random_score) / denom;
}

double degradation_pct(double gt, double avg, double zero, double random) {
  if (gt == 0.0) throw std::invalid_argument("degradation undefined for GT = 0");
  const double best_trivial = std::max({avg, zero, random});
  return std::max(gt - best_trivial, 0.0) / std::abs(gt) * 100.0;
}

double holdout_accuracy(const RewardPosterior& posterior, std::span<const PreferenceRecord> held_out,
                        double beta, std::uint64_t seed) {
  if (held_out.empty()) throw std::invalid_argument("held-out set is empty");
  std::vector<const Snippet*> snippets;
  snippets.reserve(2 * held_out.size());
  for (const auto& r : held_out) {
    snippets.push_back(&r.winner());
    snippets.push_back(&r.loser());
  }
  const auto samples = draw_posterior_samples(posterior, seed);
  const auto table = posterior_returns(posterior, snippets, samples);
  std::size_t correct = 0;
  for (std::size_t j = 0; j < held_out.size(); ++j) {
    double p = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      p += bt_winner_probability(table[s][2 * j], table[s][2 * j + 1], beta);
    }
    p /= static_cast<double>(samples.size());
    if (p > 0.5) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(held_out.size());
}

const char* to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::LEARNED: return "learned";
    case RewardKind::GROUND_TRUTH: return "gt";
    case RewardKind::ZERO: return "zero";
    case RewardKind::AVERAGE: return "avg";
  }
  return "?";
}

std::vector<double> resolve_rewards(const RewardSource& source, const OfflineDataset& dataset) {
  const std::size_t n = dataset.transition_count();
  switch (source.kind) {
    case RewardKind::ZERO: return std::vector<double>(n, 0.0);
    case RewardKind::LEARNED:
      if (source.posterior == nullptr) throw std::invalid_argument("LEARNED rewards need a posterior");
      return relabel_dataset(*source.posterior, RewardFreeDataset(dataset), source.seed);
    case RewardKind::GROUND_TRUTH:
    case RewardKind::AVERAGE: {
      std::vector<double> r;
      r.reserve(n);
      for (const auto& traj : dataset.trajectories) {
        for (const auto& tr : traj.transitions) {
          if (!tr.gt_reward) throw std::invalid_argument("dataset has no ground-truth rewards");
          r.push_back(*tr.gt_reward);
        }
      }
      if (source.kind == RewardKind::AVERAGE && n > 0) {
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(n);
        std::fill(r.begin(), r.end(), mean);
      }
      return r;
    }
  }
  return {};
}

std::vector<Rollout> collect_rollouts(const PolicyModel& policy, const Environment& env, std::size_t n,
                                      std::size_t horizon, std::uint64_t seed, ActionMode mode) {
  std::vector<Rollout> out;
  for (std::size_t e = 0; e < n; ++e) {
    out.push_back({e, run_episode(policy, env, horizon, seed, e, mode, true).points});
  }
  return out;
}

void write_rollouts(const std::vector<Rollout>& rollouts, const Environment& env,
                    const std::filesystem::path& path) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& r : rollouts) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : r.points) points.push_back({p[0], p[1]});
    nlohmann::json item{{"episode", r.episode}, {"points", points}};
    if (!r.points.empty()) {
      item["start"] = points.front();
      item["end"] = points.back();
    }
    items.push_back(std::move(item));
  }
  const nlohmann::json doc{{"env_name", env.name()}, {"layout", env.layout_rows()}, {"rollouts", items}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << doc.dump() << '\n';
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void export_rollouts(const PolicyModel& policy, const Environment& env, std::size_t n,
                     std::uint64_t seed, const std::filesystem::path& path, ActionMode mode) {
  write_rollouts(collect_rollouts(policy, env, n, env.horizon(), seed, mode), env, path);
}

std::vector<Rollout> load_rollouts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<Rollout> out;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& item : doc.at("rollouts")) {
      Rollout r;
      r.episode = item.at("episode").get<std::size_t>();
      for (const auto& p : item.at("points")) r.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      out.push_back(std::move(r));
    }
  } catch (const std::exception& e) {
    throw FormatError(0, e.what());
  }
  return out;
}

double net_angular_progress(std::span<const Rollout> rollouts, std::array<double, 2> center) {
  double total = 0.0;
  for (const auto& r : rollouts) {
    for (std::size_t i = 1; i < r.points.size(); ++i) {
      total += angular_progress(center, r.points[i - 1], r.points[i]);
    }
  }
  return total;
}

nlohmann::json to_json(const RunReport& report) {
  return {{"env", report.env},
          {"acquisition", report.acquisition},
          {"posterior_kind", report.posterior_kind},
          {"queries_used", report.queries_used},
          {"policy_return", report.policy_return},
          {"gt_return", report.gt_return},
          {"random_return", report.random_return},
          {"normalized_score", report.normalized_score},
          {"holdout_accuracy", report.holdout_accuracy}};
}

}  // namespace opal
