#pragma once

#include <string>
#include <vector>

#include "saladworld/world.hpp"

namespace saladworld {

// Reference row for one benchmark level. Loaders validate parsed level files
// against these counts, and tests replay the walkthroughs against
// expected_scores (cumulative score checkpoints, final entry = max score).
struct LevelCatalogEntry {
  int level = 0;
  int rooms = 0;
  int objects = 0;
  int subtasks = 0;
  int actions = 0;
  std::vector<int> expected_scores;    // along the shipped walkthrough
  std::vector<int> achievable_scores;  // across all legal subtask orders
};

const std::vector<LevelCatalogEntry>& level_catalog();

// Directory resolution for the shipped level files: explicit override, then
// $SALADWORLD_LEVELS, then the build-time source path, then ./data/levels.
void set_level_data_dir(const std::string& dir);
std::string level_data_dir();

WorldSpec load_world_file(const std::string& path);
WorldSpec load_level(int level);                    // 1..7, validates vs catalog
std::vector<std::string> walkthrough(int level);    // command lines
std::string serialize_world(const WorldSpec& spec); // canonical level-file text

}  // namespace saladworld
