#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "opal/reward_model.hpp"

using namespace opal;

namespace {

// Snippets over 2-D states with a known structure.
Snippet line_snippet(const std::string& id, double offset, std::size_t len) {
  Snippet s;
  s.source_id = id;
  s.length = len;
  for (std::size_t i = 0; i < len; ++i) {
    const double t = static_cast<double>(i);
    s.transitions.push_back({{offset + 0.1 * t, -offset}, 0, {offset + 0.1 * (t + 1), -offset}, std::nullopt});
  }
  return s;
}

PreferenceBuffer toy_buffer(std::size_t n, std::uint64_t seed) {
  // Preferred snippet is the one with larger x (true reward r = x).
  Rng rng = make_rng(seed, 0);
  PreferenceBuffer b;
  for (std::size_t i = 0; i < n; ++i) {
    const double oa = uniform_real(rng, -2, 2), ob = uniform_real(rng, -2, 2);
    PreferenceRecord r{i, line_snippet("a", oa, 3), line_snippet("b", ob, 3),
                       oa > ob ? Preference::A_PREFERRED : Preference::B_PREFERRED, LabelerKind::ORACLE};
    b.add(r);
  }
  return b;
}

}  // namespace

TEST_CASE("Bradley-Terry probability examples") {
  CHECK(bt_probability(1.3, 1.3, 1.0) == doctest::Approx(0.5));
  CHECK(bt_probability(0.0, std::log(3.0), 1.0) == doctest::Approx(0.75));
  Rng rng = make_rng(0, 0);
  for (int i = 0; i < 100; ++i) {
    const double a = uniform_real(rng, -50, 50), b = uniform_real(rng, -50, 50);
    const double beta = uniform_real(rng, 0.1, 3);
    CHECK(bt_probability(a, b, beta) + bt_probability(b, a, beta) == doctest::Approx(1.0));
    CHECK(bt_winner_probability(b, a, beta) == doctest::Approx(bt_probability(a, b, beta)));
  }
}

TEST_CASE("Bradley-Terry probability is stable for large returns") {
  const double p = bt_probability(-1000.0, 1000.0, 1.0);
  CHECK(std::isfinite(p));
  CHECK(p == 1.0);
  CHECK(bt_probability(1000.0, -1000.0, 1.0) == 0.0);
  CHECK(bt_probability(1000.0, 1000.5, 1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-0.5))));
}

TEST_CASE("Bradley-Terry loss gradient matches finite differences") {
  const PreferenceBuffer buf = toy_buffer(6, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Mlp net({2, 6, 5, 1});
    Rng rng = make_rng(seed, 3);
    net.init(rng);
    for (auto& v : net.params()) v += 0.1 * uniform_real(rng, -1, 1);
    const auto lg = bt_loss_and_grad(net, buf.records, 0.8);
    for (std::size_t k = 0; k < net.param_count(); ++k) {
      Mlp plus = net, minus = net;
      const double h = 1e-6;
      plus.params()[k] += h;
      minus.params()[k] -= h;
      const double fd = (bt_loss_and_grad(plus, buf.records, 0.8).loss -
                         bt_loss_and_grad(minus, buf.records, 0.8).loss) / (2 * h);
      CHECK(lg.grad[k] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
    }
  }
}

TEST_CASE("loss is the summed negative log-likelihood") {
  const PreferenceBuffer buf = toy_buffer(4, 2);
  Mlp net({2, 4, 1});
  Rng rng = make_rng(1, 0);
  net.init(rng);
  double expected = 0.0;
  for (const auto& r : buf.records) {
    auto ret = [&](const Snippet& s) {
      double sum = 0.0;
      for (const auto& tr : s.transitions) {
        Eigen::MatrixXd x(2, 1);
        x << tr.state[0], tr.state[1];
        sum += net.forward(x)(0, 0);
      }
      return sum;
    };
    expected -= std::log(bt_winner_probability(ret(r.winner()), ret(r.loser()), 1.5));
  }
  CHECK(bt_loss_and_grad(net, buf.records, 1.5).loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("preference buffer keeps train and held-out disjoint") {
  PreferenceBuffer b = toy_buffer(3, 0);
  PreferenceRecord h = b.records[0];
  h.pair_id = 100;
  b.held_out.push_back(h);
  CHECK_NOTHROW(b.validate());
  h.pair_id = 1;
  b.held_out.push_back(h);
  CHECK_THROWS(b.validate());
  PreferenceBuffer c;
  c.held_out.push_back(h);
  CHECK_THROWS(c.add(h));
}

TEST_CASE("posterior construction and validation") {
  RewardModelConfig cfg;
  cfg.hidden = {8};
  const RewardPosterior e = make_posterior(PosteriorKind::ENSEMBLE, 2, cfg, 0);
  CHECK(e.members.size() == 7);
  CHECK(e.sample_count() == 7);
  CHECK_FALSE(e.members[0].params() == e.members[1].params());
  const RewardPosterior d = make_posterior(PosteriorKind::DROPOUT, 2, cfg, 0);
  CHECK(d.members.size() == 1);
  CHECK(d.sample_count() == 30);
  CHECK(d.members[0].dropout_rate() == 0.5);
  cfg.ensemble_size = 1;
  CHECK_THROWS(make_posterior(PosteriorKind::ENSEMBLE, 2, cfg, 0));
  CHECK(posterior_kind_from_string("dropout") == PosteriorKind::DROPOUT);
  CHECK_THROWS(posterior_kind_from_string("bootstrap"));
}

TEST_CASE("training fits a separable preference set") {
  const PreferenceBuffer train = toy_buffer(40, 5);
  PreferenceBuffer eval = toy_buffer(200, 6);
  for (auto& r : eval.records) r.pair_id += 1000;
  for (auto kind : {PosteriorKind::ENSEMBLE, PosteriorKind::DROPOUT}) {
    RewardModelConfig cfg;
    cfg.hidden = {16, 16};
    cfg.ensemble_size = 3;
    cfg.dropout_samples = 10;
    cfg.optimizer = {OptimizerConfig::Kind::ADAM, 1e-2};
    RewardPosterior post = make_posterior(kind, 2, cfg, 1);
    RewardTrainer trainer(post, cfg, 2);
    const auto curve = trainer.train(train, 100);
    CHECK(curve.back() < curve.front());
    // the learned reward orders held-out pairs like r = x
    std::size_t correct = 0;
    for (const auto& r : eval.records) {
      const auto rw = posterior_return_samples(post, r.winner(), 3);
      const auto rl = posterior_return_samples(post, r.loser(), 3);
      double mw = 0, ml = 0;
      for (double v : rw) mw += v;
      for (double v : rl) ml += v;
      correct += mw > ml ? 1 : 0;
    }
    CHECK(static_cast<double>(correct) / 200.0 > 0.9);
  }
}

TEST_CASE("trainer is deterministic and continues across calls") {
  const PreferenceBuffer buf = toy_buffer(10, 3);
  RewardModelConfig cfg;
  cfg.hidden = {8};
  cfg.ensemble_size = 2;
  RewardPosterior a = make_posterior(PosteriorKind::ENSEMBLE, 2, cfg, 4);
  RewardPosterior b = a;
  RewardTrainer ta(a, cfg, 9), tb(b, cfg, 9);
  ta.train(buf, 3);
  ta.train(buf, 2);
  tb.train(buf, 3);
  tb.train(buf, 2);
  CHECK(a == b);
}

TEST_CASE("posterior draws: ensemble members, dropout masks") {
  RewardModelConfig cfg;
  cfg.hidden = {8, 8};
  cfg.dropout_samples = 5;
  const RewardPosterior d = make_posterior(PosteriorKind::DROPOUT, 2, cfg, 0);
  const auto draws = draw_posterior_samples(d, 11);
  CHECK(draws.size() == 5);
  for (const auto& s : draws) CHECK(s.mask.has_value());
  const auto again = draw_posterior_samples(d, 11);
  for (std::size_t i = 0; i < draws.size(); ++i) CHECK(*draws[i].mask == *again[i].mask);
  const RewardPosterior e = make_posterior(PosteriorKind::ENSEMBLE, 2, cfg, 0);
  const auto ed = draw_posterior_samples(e, 11);
  CHECK(ed.size() == 7);
  for (std::size_t i = 0; i < ed.size(); ++i) {
    CHECK(ed[i].member == i);
    CHECK_FALSE(ed[i].mask.has_value());
  }
}

TEST_CASE("posterior returns table matches per-state sums") {
  RewardModelConfig cfg;
  cfg.hidden = {8};
  cfg.ensemble_size = 3;
  const RewardPosterior post = make_posterior(PosteriorKind::ENSEMBLE, 2, cfg, 0);
  const Snippet a = line_snippet("a", 0.5, 4), b = line_snippet("b", -1.0, 2);
  const std::vector<const Snippet*> ptrs{&a, &b};
  const auto samples = draw_posterior_samples(post, 0);
  const auto table = posterior_returns(post, ptrs, samples);
  REQUIRE(table.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    double sa = 0;
    for (const auto& tr : a.transitions) {
      Eigen::MatrixXd x(2, 1);
      x << tr.state[0], tr.state[1];
      sa += post.members[k].forward(x)(0, 0);
    }
    CHECK(table[k][0] == doctest::Approx(sa).epsilon(1e-12));
  }
}

TEST_CASE("relabeling standardizes the posterior-mean reward") {
  const OfflineDataset d = test::small_maze_dataset(2, 2000, 500);
  const RewardFreeDataset rf(d);
  RewardModelConfig cfg;
  cfg.hidden = {8};
  cfg.ensemble_size = 2;
  std::vector<std::vector<double>> states;
  for (const auto& t : rf.trajectories()) {
    for (const auto& tr : t.transitions) states.push_back(tr.state);
  }
  RewardPosterior post = make_posterior(PosteriorKind::ENSEMBLE, 4, cfg, 3, states);
  for (auto& m : post.members) {
    for (auto& v : m.params()) v += 0.01;
  }
  const auto r = relabel_dataset(post, rf, 0);
  REQUIRE(r.size() == 2000);
  double mean = 0, var = 0;
  for (double v : r) mean += v;
  mean /= 2000.0;
  for (double v : r) var += (v - mean) * (v - mean);
  var /= 2000.0;
  CHECK(std::abs(mean) < 1e-9);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-9));

  // a constant reward model relabels to all zeros
  RewardPosterior flat = make_posterior(PosteriorKind::ENSEMBLE, 4, cfg, 3, states);
  for (auto& m : flat.members) std::fill(m.params().begin(), m.params().end(), 0.0);
  for (double v : relabel_dataset(flat, rf, 0)) CHECK(v == 0.0);
}

TEST_CASE("posterior checkpoint round trip") {
  RewardModelConfig cfg;
  cfg.hidden = {5};
  const RewardPosterior post = make_posterior(PosteriorKind::DROPOUT, 3, cfg, 8);
  const auto dir = test::scratch_dir("posterior");
  save_posterior(post, dir / "p.json");
  CHECK(load_posterior(dir / "p.json") == post);
  auto j = to_json(post);
  j["version"] = 99;
  CHECK_THROWS(posterior_from_json(j));
}
