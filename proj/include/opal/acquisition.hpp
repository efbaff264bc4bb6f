#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "opal/reward_model.hpp"
#include "opal/trajectory.hpp"

namespace opal {

enum class Acquisition { RANDOM, DISAGREE, INFOGAIN };

const char* to_string(Acquisition a);
Acquisition acquisition_from_string(const std::string& s);

struct CandidatePair {
  PairId pair_id = 0;
  Snippet snippet_a;
  Snippet snippet_b;
};

// The fixed set of snippet pairs the loop may ask about. Pairs are kept in
// ascending pair_id order; once labeled (or discarded) a pair is never offered again.
class CandidatePool {
 public:
  CandidatePool() = default;
  explicit CandidatePool(std::vector<CandidatePair> pairs);

  const std::vector<CandidatePair>& pairs() const { return pairs_; }
  const CandidatePair& get(PairId id) const;
  bool contains(PairId id) const;
  bool is_labeled(PairId id) const { return labeled_.count(id) != 0; }
  void mark_labeled(PairId id);
  const std::set<PairId>& labeled_ids() const { return labeled_; }
  std::vector<PairId> unlabeled_ids() const;
  std::size_t unlabeled_count() const { return pairs_.size() - labeled_.size(); }

 private:
  std::vector<CandidatePair> pairs_;
  std::set<PairId> labeled_;
};

// n_pairs pairs of equal-length snippets, each snippet at a uniformly chosen
// (trajectory, offset). Pair ids are first_id, first_id + 1, ...
CandidatePool build_pool(const RewardFreeDataset& dataset, std::size_t n_pairs,
                         std::size_t snippet_len, std::uint64_t seed, PairId first_id = 0);

// p(1 - p) where p is the fraction of samples with return(B) > return(A);
// ties count toward A.
double disagreement_score(std::span<const double> samples_a, std::span<const double> samples_b);

// Binary entropy in bits.
double binary_entropy_bits(double p);

// Mutual information (bits) between the preference outcome and the posterior
// sample: H(mean p_i) - mean H(p_i), p_i the Bradley-Terry P(B preferred).
double info_gain_score(std::span<const double> samples_a, std::span<const double> samples_b,
                       double beta);

// Score of every unlabeled pair (ascending pair_id), from one posterior draw.
struct PoolScores {
  std::vector<PairId> ids;
  std::vector<double> scores;
};
PoolScores score_pool(const CandidatePool& pool, const RewardPosterior& posterior,
                      Acquisition method, std::uint64_t seed, double beta);

// RANDOM: uniform over unlabeled pairs. Otherwise the best-scoring unlabeled
// pair, ties to the lowest pair_id. Throws if nothing is left to ask.
PairId select_query(const CandidatePool& pool, const RewardPosterior& posterior, Acquisition method,
                    std::uint64_t seed, double beta = 1.0);

// The `count` best pairs (or `count` random ones), in selection order.
std::vector<PairId> select_queries(const CandidatePool& pool, const RewardPosterior& posterior,
                                   Acquisition method, std::size_t count, std::uint64_t seed,
                                   double beta = 1.0);

}  // namespace opal
