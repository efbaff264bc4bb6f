#include "opal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace opal {

const char* to_string(Acquisition a) {
  switch (a) {
    case Acquisition::RANDOM: return "random";
    case Acquisition::DISAGREE: return "disagree";
    case Acquisition::INFOGAIN: return "infogain";
  }
  return "?";
}

Acquisition acquisition_from_string(const std::string& s) {
  if (s == "random") return Acquisition::RANDOM;
  if (s == "disagree") return Acquisition::DISAGREE;
  if (s == "infogain") return Acquisition::INFOGAIN;
  throw std::invalid_argument("unknown acquisition '" + s + "' (expected random|disagree|infogain)");
}

CandidatePool::CandidatePool(std::vector<CandidatePair> pairs) : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end(),
            [](const auto& x, const auto& y) { return x.pair_id < y.pair_id; });
  for (std::size_t i = 1; i < pairs_.size(); ++i) {
    if (pairs_[i].pair_id == pairs_[i - 1].pair_id) {
      throw std::invalid_argument("duplicate pair_id " + std::to_string(pairs_[i].pair_id));
    }
  }
}

const CandidatePair& CandidatePool::get(PairId id) const {
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), id,
                             [](const CandidatePair& p, PairId v) { return p.pair_id < v; });
  if (it == pairs_.end() || it->pair_id != id) {
    throw std::out_of_range("pair " + std::to_string(id) + " is not in the pool");
  }
  return *it;
}

bool CandidatePool::contains(PairId id) const {
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), id,
                             [](const CandidatePair& p, PairId v) { return p.pair_id < v; });
  return it != pairs_.end() && it->pair_id == id;
}

void CandidatePool::mark_labeled(PairId id) {
  if (!contains(id)) throw std::out_of_range("pair " + std::to_string(id) + " is not in the pool");
  labeled_.insert(id);
}

std::vector<PairId> CandidatePool::unlabeled_ids() const {
  std::vector<PairId> ids;
  ids.reserve(unlabeled_count());
  for (const auto& p : pairs_) {
    if (!is_labeled(p.pair_id)) ids.push_back(p.pair_id);
  }
  return ids;
}

CandidatePool build_pool(const RewardFreeDataset& dataset, std::size_t n_pairs,
                         std::size_t snippet_len, std::uint64_t seed, PairId first_id) {
  const auto& trajs = dataset.trajectories();
  if (snippet_len == 0) throw std::invalid_argument("snippet_len must be >= 1");
  if (trajs.empty()) throw std::invalid_argument("dataset has no trajectories");
  for (const auto& t : trajs) {
    if (t.size() < snippet_len) {
      throw std::invalid_argument("snippet_len " + std::to_string(snippet_len) +
                                  " exceeds trajectory '" + t.id + "' of length " +
                                  std::to_string(t.size()));
    }
  }
  Rng rng = make_rng(seed, 4000);
  const auto draw = [&]() {
    const Trajectory& t = trajs[uniform_index(rng, trajs.size())];
    const std::size_t start = uniform_index(rng, t.size() - snippet_len + 1);
    return make_snippet(t, start, snippet_len);
  };
  std::vector<CandidatePair> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    CandidatePair p;
    p.pair_id = first_id + i;
    p.snippet_a = draw();
    p.snippet_b = draw();
    pairs.push_back(std::move(p));
  }
  return CandidatePool(std::move(pairs));
}

double disagreement_score(std::span<const double> samples_a, std::span<const double> samples_b) {
  if (samples_a.size() != samples_b.size()) {
    throw std::invalid_argument("sample lists have different lengths");
  }
  if (samples_a.size() < 2) throw std::invalid_argument("disagreement needs at least 2 samples");
  std::size_t favor_b = 0;
  for (std::size_t i = 0; i < samples_a.size(); ++i) {
    if (samples_b[i] > samples_a[i]) ++favor_b;
  }
  const double p = static_cast<double>(favor_b) / static_cast<double>(samples_a.size());
  return p * (1.0 - p);
}

double binary_entropy_bits(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
  return h;
}

double info_gain_score(std::span<const double> samples_a, std::span<const double> samples_b,
                       double beta) {
  if (samples_a.size() != samples_b.size()) {
    throw std::invalid_argument("sample lists have different lengths");
  }
  if (samples_a.size() < 2) throw std::invalid_argument("information gain needs at least 2 samples");
  const std::size_t m = samples_a.size();
  std::vector<double> p(m);
  for (std::size_t i = 0; i < m; ++i) p[i] = bt_probability(samples_a[i], samples_b[i], beta);
  if (std::all_of(p.begin(), p.end(), [&](double v) { return v == p.front(); })) return 0.0;

  double p_bar = 0.0;
  double mean_entropy = 0.0;
  for (double v : p) {
    p_bar += v;
    mean_entropy += binary_entropy_bits(v);
  }
  p_bar /= static_cast<double>(m);
  mean_entropy /= static_cast<double>(m);
  const double gain = binary_entropy_bits(p_bar) - mean_entropy;
  return gain < 0.0 && gain >= -1e-12 ? 0.0 : gain;
}

PoolScores score_pool(const CandidatePool& pool, const RewardPosterior& posterior,
                      Acquisition method, std::uint64_t seed, double beta) {
  PoolScores out;
  out.ids = pool.unlabeled_ids();
  if (method == Acquisition::RANDOM) {
    out.scores.assign(out.ids.size(), 0.0);
    return out;
  }
  std::vector<const Snippet*> snippets;
  snippets.reserve(2 * out.ids.size());
  for (PairId id : out.ids) {
    const auto& p = pool.get(id);
    snippets.push_back(&p.snippet_a);
    snippets.push_back(&p.snippet_b);
  }
  const auto samples = draw_posterior_samples(posterior, seed);
  const auto table = posterior_returns(posterior, snippets, samples);

  std::vector<double> ra(samples.size()), rb(samples.size());
  out.scores.reserve(out.ids.size());
  for (std::size_t j = 0; j < out.ids.size(); ++j) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      ra[s] = table[s][2 * j];
      rb[s] = table[s][2 * j + 1];
    }
    out.scores.push_back(method == Acquisition::DISAGREE ? disagreement_score(ra, rb)
                                                         : info_gain_score(ra, rb, beta));
  }
  return out;
}

std::vector<PairId> select_queries(const CandidatePool& pool, const RewardPosterior& posterior,
                                   Acquisition method, std::size_t count, std::uint64_t seed,
                                   double beta) {
  if (pool.unlabeled_count() == 0) throw std::invalid_argument("no unlabeled pairs left in the pool");
  if (method == Acquisition::RANDOM) {
    std::vector<PairId> ids = pool.unlabeled_ids();
    Rng rng = make_rng(seed, 5000);
    const std::size_t k = std::min(count, ids.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
    ids.resize(k);
    return ids;
  }
  const PoolScores scored = score_pool(pool, posterior, method, seed, beta);
  std::vector<std::size_t> order(scored.ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // ids are ascending, so a stable sort on score breaks ties by lowest pair_id.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return scored.scores[x] > scored.scores[y]; });
  order.resize(std::min(count, order.size()));
  std::vector<PairId> ids;
  ids.reserve(order.size());
  for (std::size_t i : order) ids.push_back(scored.ids[i]);
  return ids;
}

PairId select_query(const CandidatePool& pool, const RewardPosterior& posterior, Acquisition method,
                    std::uint64_t seed, double beta) {
  return select_queries(pool, posterior, method, 1, seed, beta).front();
}

}  // namespace opal
