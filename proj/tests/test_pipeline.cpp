#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "opal/dataset_io.hpp"
#include "opal/pipeline.hpp"

using namespace opal;

namespace {

nlohmann::json tiny_json() {
  return {{"env", "umaze-mini"},
          {"seed", 3},
          {"dataset", {{"steps", 2000}, {"traj_len", 200}}},
          {"reward", {{"hidden", {16}}, {"ensemble_size", 3}}},
          {"opal", {{"pool_pairs", 40}, {"held_out_pairs", 20}, {"snippet_len", 20}}},
          {"awr", {{"iterations", 1}, {"value_epochs", 1}, {"policy_epochs", 1}, {"hidden", {16}}}},
          {"eval", {{"episodes", 3}, {"horizon", 50}}}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config defaults and overrides") {
  const PipelineConfig d = config_from_json(nlohmann::json::object());
  CHECK(d.env == "umaze-mini");
  CHECK(d.opal.pool_pairs == 2000);
  CHECK(d.opal.held_out_pairs == 500);
  CHECK(d.opal.reward.ensemble_size == 7);
  CHECK(d.opal.schedule.total_budget() == 15);
  CHECK(d.awr.max_weight == 20.0);
  CHECK(d.awr.batch_size == 256);

  const PipelineConfig t = config_from_json(tiny_json());
  CHECK(t.seed == 3);
  CHECK(t.dataset_steps == 2000);
  CHECK(t.opal.reward.hidden == std::vector<std::size_t>{16});
  CHECK(config_from_json(to_json(t)).dataset_steps == 2000);
  CHECK(to_json(config_from_json(to_json(t))) == to_json(t));
}

TEST_CASE("bad configs are rejected with ConfigError") {
  auto with = [](const nlohmann::json& patch) {
    nlohmann::json j = tiny_json();
    j.merge_patch(patch);
    return j;
  };
  CHECK_THROWS_AS(config_from_json(with({{"colour", 1}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"opal", {{"acquisition", "bald"}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"opal", {{"posterior", "gp"}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"env", "atlantis"}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"reward", {{"ensemble_size", 1}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"reward", {{"beta", "high"}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"awr", {{"gamma", 1.5}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"opal", {{"schedule", {{"pairs_per_round", 0}}}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"opal", {{"schedule", {{"rounds", 3}}}}}})), ConfigError);
  CHECK_THROWS_AS(config_from_json(with({{"eval", {{"episodes", 0}}}})), ConfigError);

  const auto dir = test::scratch_dir("badconfig");
  {
    std::ofstream f(dir / "c.json");
    f << "{ not json";
  }
  CHECK_THROWS_AS(load_config(dir / "c.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const PipelineConfig a = config_from_json(tiny_json());
  const std::string h = config_hash(a);
  CHECK(h.size() == 16);
  CHECK(config_hash(config_from_json(tiny_json())) == h);
  PipelineConfig b = a;
  b.awr.temperature = 2.0;
  CHECK(config_hash(b) != h);
}

TEST_CASE("a small end-to-end run is byte-identical when repeated") {
  const PipelineConfig c = config_from_json(tiny_json());
  const auto d1 = test::scratch_dir("run1"), d2 = test::scratch_dir("run2");
  const PipelineResult r1 = run_pipeline(c, d1);
  run_pipeline(c, d2);
  for (const char* f : {"dataset.jsonl", "transcript.json", "preferences.json", "reward_checkpoint.json",
                        "policy.json", "report.json", "manifest.json"}) {
    REQUIRE(std::filesystem::exists(d1 / f));
    CHECK_MESSAGE(slurp(d1 / f) == slurp(d2 / f), f);
  }
  CHECK(r1.env_steps_during_learning == 0);
  CHECK(r1.report.queries_used == 15);
  CHECK(r1.report.holdout_accuracy.size() == 11);

  const auto manifest = read_json(d1 / "manifest.json");
  CHECK(manifest["config_hash"] == config_hash(c));
  CHECK(manifest["seed"] == 3);
  const auto report = read_json(d1 / "report.json");
  CHECK(report["env_steps_during_learning"] == 0);
  CHECK(report["normalized_score"].get<double>() ==
        doctest::Approx(normalized_score(r1.report.policy_return, r1.report.gt_return, r1.report.random_return)));

  // the saved dataset can drive a second run
  PipelineConfig from_file = c;
  from_file.dataset_path = (d1 / "dataset.jsonl").string();
  CHECK(make_dataset(from_file) == make_dataset(c));
  from_file.env = "open";
  CHECK_THROWS_AS(make_dataset(from_file), ConfigError);
}

TEST_CASE("stage failures name the stage") {
  PipelineConfig c = config_from_json(tiny_json());
  c.opal.snippet_len = 500;  // longer than any trajectory
  try {
    run_pipeline(c, {});
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "label");
  }
}

TEST_CASE("degradation rows follow the flag rule") {
  nlohmann::json j = tiny_json();
  j["degradation"] = {{"envs", {"umaze-mini"}}, {"seeds", {1, 2}}};
  const auto rows = run_degradation_study(config_from_json(j));
  REQUIRE(rows.size() == 1);
  const auto& r = rows[0];
  CHECK(r.seeds == 2);
  CHECK(r.degradation_pct == doctest::Approx(degradation_pct(r.gt, r.avg, r.zero, r.random)));
  CHECK(r.flagged == (r.degradation_pct >= 25.0));
  const auto out = to_json(rows);
  CHECK(out[0]["env"] == "umaze-mini");
  CHECK(out[0]["flagged"] == r.flagged);
}
