#include "opal/dataset_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "opal/errors.hpp"

namespace opal {

using nlohmann::json;

namespace {

json transitions_to_json(const std::vector<Transition>& transitions) {
  json states = json::array();
  json actions = json::array();
  json next_states = json::array();
  json rewards = json::array();
  for (const auto& tr : transitions) {
    states.push_back(tr.state);
    actions.push_back(tr.action);
    next_states.push_back(tr.next_state);
    rewards.push_back(tr.gt_reward ? json(*tr.gt_reward) : json(nullptr));
  }
  return json{{"states", std::move(states)},
              {"actions", std::move(actions)},
              {"next_states", std::move(next_states)},
              {"gt_rewards", std::move(rewards)}};
}

std::vector<Transition> transitions_from_json(const json& j) {
  const auto& states = j.at("states");
  const auto& actions = j.at("actions");
  const auto& next_states = j.at("next_states");
  const auto& rewards = j.at("gt_rewards");
  const std::size_t n = states.size();
  if (actions.size() != n || next_states.size() != n || rewards.size() != n) {
    throw std::invalid_argument("transition arrays have different lengths");
  }
  std::vector<Transition> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    out[t].state = states[t].get<State>();
    out[t].action = actions[t].get<int>();
    out[t].next_state = next_states[t].get<State>();
    if (!rewards[t].is_null()) out[t].gt_reward = rewards[t].get<double>();
  }
  return out;
}

}  // namespace

const char* to_string(Preference p) {
  return p == Preference::A_PREFERRED ? "a" : "b";
}

const char* to_string(LabelerKind k) {
  return k == LabelerKind::ORACLE ? "oracle" : "human";
}

json to_json(const Trajectory& traj) {
  json j = transitions_to_json(traj.transitions);
  j["record"] = "trajectory";
  j["id"] = traj.id;
  j["meta"] = traj.meta;
  return j;
}

Trajectory trajectory_from_json(const json& j) {
  if (j.at("record").get<std::string>() != "trajectory") {
    throw std::invalid_argument("expected a trajectory record");
  }
  Trajectory t;
  t.id = j.at("id").get<std::string>();
  t.meta = j.at("meta").get<std::map<std::string, std::string>>();
  t.transitions = transitions_from_json(j);
  return t;
}

json to_json(const Snippet& snippet) {
  json j = transitions_to_json(snippet.transitions);
  j["source_id"] = snippet.source_id;
  j["start"] = snippet.start;
  j["length"] = snippet.length;
  return j;
}

Snippet snippet_from_json(const json& j) {
  Snippet s;
  s.source_id = j.at("source_id").get<std::string>();
  s.start = j.at("start").get<std::size_t>();
  s.length = j.at("length").get<std::size_t>();
  s.transitions = transitions_from_json(j);
  if (s.transitions.size() != s.length) throw std::invalid_argument("snippet length mismatch");
  return s;
}

json to_json(const PreferenceRecord& record) {
  return json{{"pair_id", record.pair_id},
              {"snippet_a", to_json(record.snippet_a)},
              {"snippet_b", to_json(record.snippet_b)},
              {"label", to_string(record.label)},
              {"labeler", to_string(record.labeler)}};
}

PreferenceRecord record_from_json(const json& j) {
  PreferenceRecord r;
  r.pair_id = j.at("pair_id").get<PairId>();
  r.snippet_a = snippet_from_json(j.at("snippet_a"));
  r.snippet_b = snippet_from_json(j.at("snippet_b"));
  const auto label = j.at("label").get<std::string>();
  if (label == "a") {
    r.label = Preference::A_PREFERRED;
  } else if (label == "b") {
    r.label = Preference::B_PREFERRED;
  } else {
    throw std::invalid_argument("unknown label '" + label + "'");
  }
  const auto labeler = j.at("labeler").get<std::string>();
  if (labeler == "oracle") {
    r.labeler = LabelerKind::ORACLE;
  } else if (labeler == "human") {
    r.labeler = LabelerKind::HUMAN;
  } else {
    throw std::invalid_argument("unknown labeler '" + labeler + "'");
  }
  return r;
}

void write_dataset(const OfflineDataset& dataset, std::ostream& out) {
  const json header{{"record", "header"},
                    {"env_name", dataset.env_name},
                    {"state_dim", dataset.state_dim},
                    {"action_count", dataset.action_count},
                    {"format_version", dataset.format_version},
                    {"trajectory_count", dataset.trajectories.size()}};
  out << header.dump() << '\n';
  for (const auto& t : dataset.trajectories) out << to_json(t).dump() << '\n';
}

OfflineDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(0, "missing header");

  OfflineDataset d;
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    if (header.at("record").get<std::string>() != "header") {
      throw std::invalid_argument("first record is not a header");
    }
    d.format_version = header.at("format_version").get<int>();
    if (d.format_version != OfflineDataset::kFormatVersion) {
      throw std::invalid_argument("unsupported format_version " +
                                  std::to_string(d.format_version));
    }
    d.env_name = header.at("env_name").get<std::string>();
    d.state_dim = header.at("state_dim").get<std::size_t>();
    d.action_count = header.at("action_count").get<std::size_t>();
    expected = header.at("trajectory_count").get<std::size_t>();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(0, e.what());
  }

  d.trajectories.reserve(expected);
  for (std::size_t i = 1; i <= expected; ++i) {
    if (!std::getline(in, line)) {
      throw FormatError(i, "file truncated: expected " + std::to_string(expected) +
                               " trajectories, found " + std::to_string(i - 1));
    }
    try {
      Trajectory t = trajectory_from_json(json::parse(line));
      validate(t, d.state_dim, d.action_count);
      d.trajectories.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw FormatError(i, e.what());
    }
  }
  while (std::getline(in, line)) {
    if (!line.empty()) throw FormatError(expected + 1, "unexpected trailing record");
  }
  return d;
}

void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_dataset(dataset, out);
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

OfflineDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_dataset(in);
}

}  // namespace opal
