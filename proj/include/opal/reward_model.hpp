#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opal/mlp.hpp"
#include "opal/trajectory.hpp"

namespace opal {

// Scalar state reward network r(s).
using RewardNet = Mlp;

enum class PosteriorKind { ENSEMBLE, DROPOUT };

const char* to_string(PosteriorKind kind);
PosteriorKind posterior_kind_from_string(const std::string& s);

struct RewardModelConfig {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t ensemble_size = 7;
  double dropout_rate = 0.5;
  std::size_t dropout_samples = 30;
  double beta = 1.0;
  OptimizerConfig optimizer{};
  // Mini-batch size in preference pairs; 0 means all current pairs.
  std::size_t batch_size = 0;
};

// Approximate reward posterior: M independently seeded nets (ENSEMBLE) or one
// dropout net sampled n_samples times (DROPOUT).
struct RewardPosterior {
  PosteriorKind kind = PosteriorKind::ENSEMBLE;
  std::vector<RewardNet> members;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  // Number of return samples per query: members for ENSEMBLE, n_samples for DROPOUT.
  std::size_t sample_count() const;
  void validate() const;
  bool operator==(const RewardPosterior&) const = default;
};

// Fresh, untrained posterior. Input normalization is fitted to `states`
// (typically every state of the reward-free dataset).
RewardPosterior make_posterior(PosteriorKind kind, std::size_t state_dim,
                               const RewardModelConfig& config, std::uint64_t seed,
                               std::span<const std::vector<double>> states = {});

struct PreferenceBuffer {
  std::vector<PreferenceRecord> records;
  std::vector<PreferenceRecord> held_out;  // evaluation only, never trained on

  void add(PreferenceRecord record);
  void validate() const;  // throws if train and held-out share a pair_id
};

// P(B preferred) under Bradley-Terry, computed in log space.
double bt_probability(double return_a, double return_b, double beta);
// P(winner preferred); symmetric in the ordering of the pair.
double bt_winner_probability(double return_winner, double return_loser, double beta);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Negative log-likelihood summed over the batch, with its gradient. When the
// net has dropout and dropout_rng is given, one mask is drawn per record and
// shared by both snippets, in the forward and backward pass alike.
LossAndGrad bt_loss_and_grad(const RewardNet& net, std::span<const PreferenceRecord> batch,
                             double beta, Rng* dropout_rng = nullptr);

// Trains every member of a posterior. Optimizer state and RNG streams persist
// across calls, so repeated train() calls continue one run.
class RewardTrainer {
 public:
  RewardTrainer(RewardPosterior& posterior, RewardModelConfig config, std::uint64_t seed);

  // Returns the mean (over members) training loss after each epoch.
  std::vector<double> train(const PreferenceBuffer& buffer, std::size_t epochs);

 private:
  RewardPosterior& posterior_;
  RewardModelConfig cfg_;
  std::vector<Optimizer> optimizers_;
  std::vector<Rng> rngs_;
};

// One-shot training from a fresh optimizer state.
RewardPosterior train_reward(RewardPosterior posterior, const PreferenceBuffer& buffer,
                             std::size_t epochs, const RewardModelConfig& config,
                             std::uint64_t seed);

// A concrete draw from the posterior: a member, plus a dropout mask for DROPOUT.
struct PosteriorSample {
  std::size_t member = 0;
  std::optional<DropoutMask> mask;
};

// ENSEMBLE: one sample per member, dropout off. DROPOUT: n_samples fresh
// masks drawn from `seed`.
std::vector<PosteriorSample> draw_posterior_samples(const RewardPosterior& posterior,
                                                    std::uint64_t seed);

// rewards[i] for each column state, under one posterior sample.
Eigen::VectorXd sample_state_rewards(const RewardPosterior& posterior, const PosteriorSample& sample,
                                     const Eigen::MatrixXd& states);

// returns[k][j]: undiscounted return of snippets[j] under sample k.
std::vector<std::vector<double>> posterior_returns(const RewardPosterior& posterior,
                                                   std::span<const Snippet* const> snippets,
                                                   std::span<const PosteriorSample> samples);

std::vector<double> posterior_return_samples(const RewardPosterior& posterior, const Snippet& snippet,
                                             std::uint64_t seed);

inline constexpr double kRelabelVarianceFloor = 1e-12;

// Posterior-mean reward per transition (trajectory order), standardized to
// zero mean and unit variance. Variance below the floor yields all zeros.
std::vector<double> relabel_dataset(const RewardPosterior& posterior, const RewardFreeDataset& dataset,
                                    std::uint64_t seed);

nlohmann::json to_json(const RewardPosterior& posterior);
RewardPosterior posterior_from_json(const nlohmann::json& j);
void save_posterior(const RewardPosterior& posterior, const std::filesystem::path& path);
RewardPosterior load_posterior(const std::filesystem::path& path);

}  // namespace opal
