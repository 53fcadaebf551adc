#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include "doctest.h"
#include "saladworld/levels.hpp"

using namespace saladworld;

namespace {

std::string write_temp(const std::string& text) {
  static int counter = 0;
  std::string path = "/tmp/saladworld_levels_test_" + std::to_string(counter++) + ".level";
  std::ofstream out(path);
  out << text;
  return path;
}

// Replays the shipped walkthrough; returns the cumulative score checkpoints.
std::vector<int> replay(const WorldSpec& w, const std::vector<std::string>& cmds,
                        bool* done_out) {
  GameState s = initial_state(w);
  std::vector<int> checkpoints;
  bool done = false;
  for (const auto& cmd : cmds) {
    CHECK(!done);  // nothing after the final score
    Transition tr = step(w, s, parse_command(w, cmd));
    s = tr.next;
    if (tr.reward > 0) checkpoints.push_back(s.score);
    done = tr.done;
  }
  if (done_out) *done_out = done;
  return checkpoints;
}

}  // namespace

TEST_CASE("catalog rows") {
  const auto& cat = level_catalog();
  REQUIRE(cat.size() == 7);
  auto row = [&](int lvl) { return cat[lvl - 1]; };
  for (int lvl = 1; lvl <= 7; ++lvl) CHECK(row(lvl).level == lvl);

  CHECK(std::vector<int>{row(1).rooms, row(2).rooms, row(3).rooms, row(4).rooms,
                         row(5).rooms, row(6).rooms, row(7).rooms} ==
        std::vector<int>{4, 7, 7, 9, 11, 12, 12});
  CHECK(std::vector<int>{row(1).objects, row(2).objects, row(3).objects, row(4).objects,
                         row(5).objects, row(6).objects, row(7).objects} ==
        std::vector<int>{2, 4, 4, 8, 15, 20, 20});
  CHECK(std::vector<int>{row(1).subtasks, row(2).subtasks, row(3).subtasks, row(4).subtasks,
                         row(5).subtasks, row(6).subtasks, row(7).subtasks} ==
        std::vector<int>{2, 3, 3, 4, 5, 6, 7});
  CHECK(std::vector<int>{row(1).actions, row(2).actions, row(3).actions, row(4).actions,
                         row(5).actions, row(6).actions, row(7).actions} ==
        std::vector<int>{8, 15, 15, 50, 141, 283, 295});

  CHECK(row(1).expected_scores == std::vector<int>{10, 15});
  CHECK(row(2).expected_scores == std::vector<int>{10, 15, 20});
  CHECK(row(3).expected_scores == std::vector<int>{10, 15, 20});
  CHECK(row(4).expected_scores == std::vector<int>{10, 15, 20, 25});
  CHECK(row(5).expected_scores == std::vector<int>{10, 15, 20, 25, 30});
  CHECK(row(6).expected_scores == std::vector<int>{10, 15, 20, 25, 30, 35});
  CHECK(row(7).expected_scores == std::vector<int>{10, 15, 20, 25, 30, 35, 40});

  CHECK(row(1).achievable_scores == std::vector<int>{10, 15});
  for (int lvl = 2; lvl <= 7; ++lvl) {
    std::vector<int> ladder;
    for (int v = 5; v <= row(lvl).expected_scores.back(); v += 5) ladder.push_back(v);
    CHECK(row(lvl).achievable_scores == ladder);
  }
}

TEST_CASE("levels load and match their catalog rows") {
  for (int lvl = 1; lvl <= 7; ++lvl) {
    CAPTURE(lvl);
    WorldSpec w = load_level(lvl);
    const auto& row = level_catalog()[lvl - 1];
    CHECK(w.level == lvl);
    CHECK(int(w.rooms.size()) == row.rooms);
    CHECK(int(w.objects.size()) == row.objects);
    CHECK(int(w.subtasks.size()) == row.subtasks);
    CHECK(int(w.action_set.size()) == row.actions);
    CHECK(w.action_texts.size() == w.action_set.size());
    CHECK(w.max_score() == row.expected_scores.back());
    CHECK(w.vocab.size() > 0);
    for (std::size_t i = 0; i < w.action_set.size(); ++i) {
      CHECK(w.action_index(w.action_set[i]) == int(i));
      CHECK(parse_command(w, w.action_texts[i]) == w.action_set[i]);
    }
  }
  CHECK_THROWS_AS(load_level(0), ValidationError);
  CHECK_THROWS_AS(load_level(8), ValidationError);
}

TEST_CASE("walkthroughs hit every checkpoint and finish the game") {
  for (int lvl = 1; lvl <= 7; ++lvl) {
    CAPTURE(lvl);
    WorldSpec w = load_level(lvl);
    bool done = false;
    std::vector<int> checkpoints = replay(w, walkthrough(lvl), &done);
    CHECK(done);
    CHECK(checkpoints == level_catalog()[lvl - 1].expected_scores);
  }
}

TEST_CASE("reachable scores equal the catalog's achievable set") {
  // exhaustive search is cheap on the small maps
  for (int lvl = 1; lvl <= 3; ++lvl) {
    CAPTURE(lvl);
    WorldSpec w = load_level(lvl);
    GameState start = initial_state(w);
    std::unordered_set<std::string> seen{state_key(start)};
    std::deque<GameState> frontier{start};
    std::set<int> scores;
    while (!frontier.empty()) {
      GameState s = frontier.front();
      frontier.pop_front();
      for (int a = 0; a < int(w.action_set.size()); ++a) {
        Transition tr = step_action(w, s, a);
        if (tr.reward > 0) scores.insert(tr.next.score);
        if (seen.insert(state_key(tr.next)).second) frontier.push_back(tr.next);
      }
    }
    std::vector<int> got(scores.begin(), scores.end());
    CHECK(got == level_catalog()[lvl - 1].achievable_scores);
  }
}

TEST_CASE("serialization is a fixpoint") {
  for (int lvl = 1; lvl <= 7; ++lvl) {
    CAPTURE(lvl);
    WorldSpec w = load_level(lvl);
    std::string text = serialize_world(w);
    std::string path = write_temp(text);
    WorldSpec back = load_world_file(path);
    CHECK(serialize_world(back) == text);
    CHECK(back.action_texts == w.action_texts);
    CHECK(back.subtasks == w.subtasks);
    CHECK(initial_state(back) == initial_state(w));
    std::remove(path.c_str());
  }
}

TEST_CASE("loader rejects malformed files") {
  std::string good = serialize_world(load_level(1));

  auto mutate = [&](const std::string& from, const std::string& to) {
    std::string text = good;
    auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), to);
    std::string path = write_temp(text);
    CHECK_THROWS_AS((void)load_world_file(path), ParseError);
    std::remove(path.c_str());
  };

  mutate("[actions]", "[misc]");                    // missing required section
  mutate("take lettuce", "take moonrock");          // unparseable action
  mutate("go east\n", "go east\ngo east\n");        // duplicate action
  mutate("go east\n", "go  east\n");                // not canonical
  mutate("visited(market)", "visited(moon)");       // unknown room in predicate
  CHECK_THROWS_AS((void)load_world_file("/tmp/does_not_exist.level"), ParseError);

  // count mismatches against the catalog are caught by load_level
  std::string dir = "/tmp/saladworld_levels_dir";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/level1.level");
    out << serialize_world(load_level(2));  // wrong shape for level 1
  }
  std::string saved = level_data_dir();
  set_level_data_dir(dir);
  CHECK_THROWS_AS((void)load_level(1), ParseError);
  set_level_data_dir(saved);
}
