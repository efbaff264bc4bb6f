#include "opal/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "opal/errors.hpp"

namespace opal {

namespace {

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (std::isinf(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd snippet_pair_states(const Snippet& a, const Snippet& b) {
  const std::size_t dim = a.transitions.front().state.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dim),
                    static_cast<Eigen::Index>(a.length + b.length));
  Eigen::Index col = 0;
  for (const Snippet* s : {&a, &b}) {
    for (const auto& tr : s->transitions) {
      for (std::size_t k = 0; k < dim; ++k) m(static_cast<Eigen::Index>(k), col) = tr.state[k];
      ++col;
    }
  }
  return m;
}

}  // namespace

const char* to_string(PosteriorKind kind) {
  return kind == PosteriorKind::ENSEMBLE ? "ensemble" : "dropout";
}

PosteriorKind posterior_kind_from_string(const std::string& s) {
  if (s == "ensemble") return PosteriorKind::ENSEMBLE;
  if (s == "dropout") return PosteriorKind::DROPOUT;
  throw std::invalid_argument("unknown posterior kind '" + s + "'");
}

std::size_t RewardPosterior::sample_count() const {
  return kind == PosteriorKind::ENSEMBLE ? members.size() : n_samples;
}

void RewardPosterior::validate() const {
  if (kind == PosteriorKind::ENSEMBLE) {
    if (members.size() < 2) throw std::invalid_argument("an ensemble needs at least 2 members");
    return;
  }
  if (members.size() != 1) throw std::invalid_argument("a dropout posterior has exactly one net");
  if (!(members.front().dropout_rate() > 0.0)) {
    throw std::invalid_argument("a dropout posterior needs dropout_rate > 0");
  }
  if (n_samples < 2) throw std::invalid_argument("a dropout posterior needs n_samples >= 2");
}

RewardPosterior make_posterior(PosteriorKind kind, std::size_t state_dim,
                               const RewardModelConfig& config, std::uint64_t seed,
                               std::span<const std::vector<double>> states) {
  std::vector<std::size_t> sizes{state_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(1);

  RewardPosterior post;
  post.kind = kind;
  post.seed = seed;
  const std::size_t n_members = kind == PosteriorKind::ENSEMBLE ? config.ensemble_size : 1;
  post.n_samples = kind == PosteriorKind::DROPOUT ? config.dropout_samples : 0;
  const double rate = kind == PosteriorKind::DROPOUT ? config.dropout_rate : 0.0;
  for (std::size_t m = 0; m < n_members; ++m) {
    RewardNet net(sizes, rate);
    Rng rng = make_rng(seed, 1000 + m);
    net.init(rng);
    if (!states.empty()) fit_input_normalization(net, states);
    post.members.push_back(std::move(net));
  }
  post.validate();
  return post;
}

void PreferenceBuffer::add(PreferenceRecord record) {
  for (const auto& h : held_out) {
    if (h.pair_id == record.pair_id) {
      throw std::invalid_argument("pair " + std::to_string(record.pair_id) + " is held out");
    }
  }
  records.push_back(std::move(record));
}

void PreferenceBuffer::validate() const {
  std::set<PairId> ids;
  for (const auto& r : held_out) ids.insert(r.pair_id);
  for (const auto& r : records) {
    if (ids.count(r.pair_id) != 0) {
      throw std::invalid_argument("pair " + std::to_string(r.pair_id) +
                                  " is both a training and a held-out record");
    }
  }
}

double bt_probability(double return_a, double return_b, double beta) {
  const double a = beta * return_a;
  const double b = beta * return_b;
  return std::exp(b - log_sum_exp(a, b));
}

double bt_winner_probability(double return_winner, double return_loser, double beta) {
  return sigmoid(beta * (return_winner - return_loser));
}

LossAndGrad bt_loss_and_grad(const RewardNet& net, std::span<const PreferenceRecord> batch,
                             double beta, Rng* dropout_rng) {
  if (batch.empty()) throw std::invalid_argument("empty preference batch");
  LossAndGrad out;
  out.grad.assign(net.param_count(), 0.0);
  const bool use_dropout = dropout_rng != nullptr && net.dropout_rate() > 0.0;
  Mlp::Cache cache;
  for (const auto& rec : batch) {
    const Snippet& a = rec.snippet_a;
    const Snippet& b = rec.snippet_b;
    if (a.length != b.length) throw std::invalid_argument("snippet pair lengths differ");
    std::optional<DropoutMask> mask;
    if (use_dropout) mask = net.sample_mask(*dropout_rng);
    const Eigen::MatrixXd states = snippet_pair_states(a, b);
    const Eigen::MatrixXd r = net.forward(states, mask ? &*mask : nullptr, cache);
    const auto la = static_cast<Eigen::Index>(a.length);
    const auto lb = static_cast<Eigen::Index>(b.length);
    const double ra = r.leftCols(la).sum();
    const double rb = r.rightCols(lb).sum();
    const bool a_wins = rec.label == Preference::A_PREFERRED;
    const double margin = beta * (a_wins ? ra - rb : rb - ra);
    out.loss += softplus(-margin);
    // d loss / d R_winner = -beta * sigmoid(-margin); the loser gets the opposite sign.
    const double g = beta * sigmoid(-margin);
    Eigen::MatrixXd d_out(1, la + lb);
    d_out.leftCols(la).setConstant(a_wins ? -g : g);
    d_out.rightCols(lb).setConstant(a_wins ? g : -g);
    net.backward(cache, d_out, mask ? &*mask : nullptr, out.grad);
  }
  return out;
}

RewardTrainer::RewardTrainer(RewardPosterior& posterior, RewardModelConfig config,
                             std::uint64_t seed)
    : posterior_(posterior), cfg_(std::move(config)) {
  posterior_.validate();
  for (std::size_t m = 0; m < posterior_.members.size(); ++m) {
    optimizers_.emplace_back(cfg_.optimizer, posterior_.members[m].param_count());
    rngs_.push_back(make_rng(seed, 2000 + m));
  }
}

std::vector<double> RewardTrainer::train(const PreferenceBuffer& buffer, std::size_t epochs) {
  if (buffer.records.empty()) throw std::invalid_argument("no preference records to train on");
  buffer.validate();
  const std::size_t n = buffer.records.size();
  const std::size_t batch = cfg_.batch_size == 0 ? n : std::min(cfg_.batch_size, n);
  std::vector<double> epoch_loss(epochs, 0.0);
  std::vector<PreferenceRecord> shuffled;
  for (std::size_t m = 0; m < posterior_.members.size(); ++m) {
    RewardNet& net = posterior_.members[m];
    Rng& rng = rngs_[m];
    std::vector<std::size_t> order(n);
    for (std::size_t e = 0; e < epochs; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
      double total = 0.0;
      for (std::size_t begin = 0; begin < n; begin += batch) {
        shuffled.clear();
        for (std::size_t i = begin; i < std::min(n, begin + batch); ++i) {
          shuffled.push_back(buffer.records[order[i]]);
        }
        auto lg = bt_loss_and_grad(net, shuffled, cfg_.beta, &rng);
        total += lg.loss;
        optimizers_[m].step(net.params(), lg.grad);
      }
      epoch_loss[e] += total / static_cast<double>(n);
    }
  }
  for (auto& l : epoch_loss) l /= static_cast<double>(posterior_.members.size());
  return epoch_loss;
}

RewardPosterior train_reward(RewardPosterior posterior, const PreferenceBuffer& buffer,
                             std::size_t epochs, const RewardModelConfig& config,
                             std::uint64_t seed) {
  RewardTrainer trainer(posterior, config, seed);
  trainer.train(buffer, epochs);
  return posterior;
}

std::vector<PosteriorSample> draw_posterior_samples(const RewardPosterior& posterior,
                                                    std::uint64_t seed) {
  posterior.validate();
  std::vector<PosteriorSample> samples;
  if (posterior.kind == PosteriorKind::ENSEMBLE) {
    for (std::size_t m = 0; m < posterior.members.size(); ++m) samples.push_back({m, std::nullopt});
    return samples;
  }
  Rng rng = make_rng(seed, 3000);
  for (std::size_t k = 0; k < posterior.n_samples; ++k) {
    samples.push_back({0, posterior.members.front().sample_mask(rng)});
  }
  return samples;
}

Eigen::VectorXd sample_state_rewards(const RewardPosterior& posterior, const PosteriorSample& sample,
                                     const Eigen::MatrixXd& states) {
  const RewardNet& net = posterior.members.at(sample.member);
  return net.forward(states, sample.mask ? &*sample.mask : nullptr).row(0).transpose();
}

std::vector<std::vector<double>> posterior_returns(const RewardPosterior& posterior,
                                                   std::span<const Snippet* const> snippets,
                                                   std::span<const PosteriorSample> samples) {
  std::vector<std::vector<double>> out(samples.size(), std::vector<double>(snippets.size(), 0.0));
  if (snippets.empty()) return out;
  const std::size_t dim = snippets.front()->transitions.front().state.size();
  constexpr std::size_t kChunkStates = 8192;

  std::size_t first = 0;
  while (first < snippets.size()) {
    std::size_t last = first;
    std::size_t n_states = 0;
    while (last < snippets.size() && (n_states == 0 || n_states + snippets[last]->length <= kChunkStates)) {
      n_states += snippets[last]->length;
      ++last;
    }
    Eigen::MatrixXd states(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n_states));
    Eigen::Index col = 0;
    for (std::size_t j = first; j < last; ++j) {
      for (const auto& tr : snippets[j]->transitions) {
        for (std::size_t k = 0; k < dim; ++k) states(static_cast<Eigen::Index>(k), col) = tr.state[k];
        ++col;
      }
    }
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const Eigen::VectorXd r = sample_state_rewards(posterior, samples[s], states);
      Eigen::Index pos = 0;
      for (std::size_t j = first; j < last; ++j) {
        double total = 0.0;
        for (std::size_t t = 0; t < snippets[j]->length; ++t) total += r[pos++];
        out[s][j] = total;
      }
    }
    first = last;
  }
  return out;
}

std::vector<double> posterior_return_samples(const RewardPosterior& posterior, const Snippet& snippet,
                                             std::uint64_t seed) {
  const auto samples = draw_posterior_samples(posterior, seed);
  const Snippet* ptr = &snippet;
  const auto table = posterior_returns(posterior, std::span<const Snippet* const>(&ptr, 1), samples);
  std::vector<double> out;
  out.reserve(table.size());
  for (const auto& row : table) out.push_back(row.front());
  return out;
}

std::vector<double> relabel_dataset(const RewardPosterior& posterior, const RewardFreeDataset& dataset,
                                    std::uint64_t seed) {
  std::vector<std::vector<double>> states;
  states.reserve(dataset.transition_count());
  for (const auto& traj : dataset.trajectories()) {
    for (const auto& tr : traj.transitions) states.push_back(tr.state);
  }
  std::vector<double> rewards(states.size(), 0.0);
  if (states.empty()) return rewards;

  const Eigen::MatrixXd m = stack_states(states);
  const auto samples = draw_posterior_samples(posterior, seed);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m.cols());
  for (const auto& s : samples) mean += sample_state_rewards(posterior, s, m);
  mean /= static_cast<double>(samples.size());

  const double mu = mean.mean();
  const double var = (mean.array() - mu).square().mean();
  if (var < kRelabelVarianceFloor) return rewards;
  const double inv_sd = 1.0 / std::sqrt(var);
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    rewards[static_cast<std::size_t>(i)] = (mean[i] - mu) * inv_sd;
  }
  return rewards;
}

nlohmann::json to_json(const RewardPosterior& posterior) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : posterior.members) members.push_back(to_json(m));
  return {{"format", "opal-reward-checkpoint"},
          {"version", 1},
          {"kind", to_string(posterior.kind)},
          {"seed", posterior.seed},
          {"n_samples", posterior.n_samples},
          {"layer_sizes", posterior.members.empty() ? std::vector<std::size_t>{}
                                                    : posterior.members.front().layer_sizes()},
          {"members", std::move(members)}};
}

RewardPosterior posterior_from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "opal-reward-checkpoint" || j.at("version").get<int>() != 1) {
    throw std::invalid_argument("not a version-1 reward checkpoint");
  }
  RewardPosterior post;
  post.kind = posterior_kind_from_string(j.at("kind").get<std::string>());
  post.seed = j.at("seed").get<std::uint64_t>();
  post.n_samples = j.at("n_samples").get<std::size_t>();
  for (const auto& m : j.at("members")) post.members.push_back(mlp_from_json(m));
  post.validate();
  return post;
}

void save_posterior(const RewardPosterior& posterior, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << to_json(posterior).dump() << '\n';
}

RewardPosterior load_posterior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  try {
    return posterior_from_json(nlohmann::json::parse(in));
  } catch (const std::exception& e) {
    throw FormatError(0, e.what());
  }
}

}  // namespace opal
