#pragma once

#include <filesystem>
#include <string>

#include "opal/dataset_gen.hpp"
#include "opal/env.hpp"
#include "opal/maze.hpp"

namespace opal::test {

inline const MazeEnv& umaze() {
  static const auto env = make_environment("umaze-mini");
  return dynamic_cast<const MazeEnv&>(*env);
}

inline OfflineDataset small_maze_dataset(std::uint64_t seed = 1, std::size_t steps = 4000,
                                         std::size_t traj_len = 400) {
  return gen_maze_dataset(umaze(), steps, seed, traj_len);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("opal-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace opal::test
