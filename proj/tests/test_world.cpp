#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <deque>
#include <set>
#include <unordered_set>

#include "doctest.h"
#include "saladworld/levels.hpp"
#include "saladworld/world.hpp"

using namespace saladworld;

namespace {

// Two rooms joined by a locked door, with a key chain: the iron key sits
// inside a box that only the brass key opens. Exercises every verb.
WorldSpec micro_world() {
  WorldSpec w;
  w.level = 1;
  w.title = "micro";
  w.rooms.resize(2);
  w.rooms[0].id = "pantry";
  w.rooms[0].name = "pantry";
  w.rooms[1].id = "hall";
  w.rooms[1].name = "hall";
  w.doors.push_back({"iron_door", "iron door", 3, true});
  w.rooms[0].exits[int(Direction::East)] = {1, 0};
  w.rooms[1].exits[int(Direction::West)] = {0, 0};

  auto obj = [&](const char* id, const char* name, ObjectKind kind, FixtureType fix,
                 bool sharp, int lock_key, bool in_fixture, int at) {
    ObjectSpec o;
    o.id = id;
    o.name = name;
    o.kind = kind;
    o.fixture = fix;
    o.sharp = sharp;
    o.lock_key = lock_key;
    o.starts_in_fixture = in_fixture;
    o.start_at = at;
    w.objects.push_back(o);
  };
  obj("table", "table", ObjectKind::Fixture, FixtureType::Surface, false, -1, false, 0);
  obj("box", "box", ObjectKind::Fixture, FixtureType::Container, false, 2, false, 0);
  obj("brass_key", "brass key", ObjectKind::Key, FixtureType::None, false, -1, false, 0);
  obj("iron_key", "iron key", ObjectKind::Key, FixtureType::None, false, -1, true, 1);
  obj("tomato", "tomato", ObjectKind::Food, FixtureType::None, false, -1, false, 1);
  obj("knife", "knife", ObjectKind::Portable, FixtureType::None, true, -1, false, 0);

  w.subtasks.push_back({"sliced", 5, {{Atom::FlagSet, 4, int(kFlagSliced)}}});
  w.subtasks.push_back({"served", 10, {{Atom::ObjectAt, 4, 0}}});
  w.subtasks.push_back({"meal", 5, {{Atom::FlagSet, 0, int(kFlagPrepared)}}});

  for (const char* text : {
           "look", "inventory", "go east", "go west", "go north",
           "take brass key", "take iron key", "take tomato", "take knife", "take table",
           "take iron key from box", "take tomato from box",
           "put tomato on table", "put knife on table",
           "insert tomato into box",
           "open iron door with iron key", "open iron door with brass key",
           "open box with brass key", "open box with iron key", "open box",
           "slice tomato with knife", "slice tomato with brass key",
           "prepare meal",
       }) {
    Command c = parse_command(w, text);
    REQUIRE(w.action_index(c) < 0);
    w.action_set.push_back(c);
    w.action_texts.push_back(command_text(w, c));
  }
  w.vocab = build_vocab(w);
  return w;
}

Transition go(const WorldSpec& w, GameState& s, const std::string& text) {
  Transition tr = step(w, s, parse_command(w, text));
  s = tr.next;
  return tr;
}

}  // namespace

TEST_CASE("directions") {
  CHECK(opposite(Direction::North) == Direction::South);
  CHECK(opposite(Direction::East) == Direction::West);
  CHECK(opposite(Direction::Up) == Direction::Down);
  CHECK(std::string(to_string(Direction::West)) == "west");
  CHECK(direction_from("south").value() == Direction::South);
  CHECK(!direction_from("sideways").has_value());
}

TEST_CASE("tokenize splits on punctuation and lowercases") {
  CHECK(tokenize("You can't go that way.") ==
        std::vector<std::string>{"you", "can", "t", "go", "that", "way"});
  CHECK(tokenize("  Take   the BRASS key! ") ==
        std::vector<std::string>{"take", "the", "brass", "key"});
  CHECK(tokenize("...").empty());
}

TEST_CASE("vocab is sorted, closed, and rejects unknown words") {
  Vocab v = Vocab::build({"pear apple", "apple banana"});
  CHECK(v.words == std::vector<std::string>{"apple", "banana", "pear"});
  CHECK(v.id("banana") == 1);
  CHECK(v.encode("apple pear") == std::vector<int>{0, 2});
  CHECK_THROWS_AS((void)v.id("kiwi"), std::exception);
  CHECK_THROWS_AS((void)v.encode("apple kiwi"), std::exception);
}

TEST_CASE("initial state follows the spec fields") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  CHECK(s.agent_room == 0);
  CHECK(s.object_location == std::vector<int>{0, 0, 0, int(w.rooms.size()) + 1, 1, 0});
  CHECK(s.door_open == std::vector<unsigned char>{0});
  CHECK(s.visited == std::set<int>{0});
  CHECK(s.score == 0);
  CHECK(s.subtasks_completed() == 0);
}

TEST_CASE("parse round trips and aliases") {
  WorldSpec w = micro_world();
  for (std::size_t i = 0; i < w.action_set.size(); ++i) {
    Command c = parse_command(w, w.action_texts[i]);
    CHECK(c == w.action_set[i]);
    CHECK(command_text(w, c) == w.action_texts[i]);
  }
  CHECK(parse_command(w, "get knife") == parse_command(w, "take the knife"));
  CHECK(parse_command(w, "take iron key") == Command{Verb::Take, 3, -1});
  CHECK(parse_command(w, "open iron door with iron key") ==
        Command{Verb::Open, int(w.objects.size()) + 0, 3});
  CHECK_THROWS_AS(parse_command(w, ""), ParseError);
  CHECK_THROWS_AS(parse_command(w, "dance"), ParseError);
  CHECK_THROWS_AS(parse_command(w, "go sideways"), ParseError);
  CHECK_THROWS_AS(parse_command(w, "take moon"), ParseError);
  CHECK_THROWS_AS(parse_command(w, "put knife under table"), ParseError);
  CHECK_THROWS_AS(parse_command(w, "take knife now"), ParseError);
}

TEST_CASE("commands outside the action set are rejected") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  CHECK_THROWS_AS(step(w, s, parse_command(w, "go south")), ValidationError);
  CHECK_THROWS_AS(step_action(w, s, -1), ValidationError);
  CHECK_THROWS_AS(step_action(w, s, int(w.action_set.size())), ValidationError);
}

TEST_CASE("renders") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  CHECK(render_look(w, s) ==
        "You are in the pantry. Exits: east (closed iron door). "
        "You see: table, box, brass key, knife. The box is closed.");
  CHECK(render_inventory(w, s) == "You are carrying nothing.");
  go(w, s, "take knife");
  CHECK(render_inventory(w, s) == "You are carrying: knife.");
  go(w, s, "put knife on table");
  CHECK(render_look(w, s) ==
        "You are in the pantry. Exits: east (closed iron door). "
        "You see: table, box, brass key. On the table: knife. The box is closed.");
}

TEST_CASE("refusals leave the state untouched") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  auto refuse = [&](const std::string& text, const std::string& feedback) {
    Transition tr = step(w, s, parse_command(w, text));
    CHECK(tr.feedback == feedback);
    CHECK(!tr.admissible);
    CHECK(tr.reward == 0);
    CHECK(tr.next == s);
  };
  refuse("go west", "You can't go that way.");
  refuse("go east", "The iron door is closed.");
  refuse("take tomato", "You can't take that.");       // other room
  refuse("take table", "You can't take that.");        // fixture
  refuse("take iron key", "You can't take that.");     // closed box
  refuse("take iron key from box", "You can't take that.");
  refuse("put tomato on table", "You can't do that."); // not carried
  refuse("insert tomato into box", "You can't do that.");
  refuse("open box", "That doesn't work.");            // bare open never unlocks
  refuse("open box with iron key", "That doesn't work.");
  refuse("open box with brass key", "That doesn't work.");  // key not carried
  refuse("open iron door with iron key", "That doesn't work.");
  refuse("slice tomato with knife", "You can't slice that.");  // not carried
  refuse("prepare meal", "Nothing happens.");          // earlier subtasks open
}

TEST_CASE("full verb chain with rewards") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);

  CHECK(go(w, s, "take brass key").feedback == "You take the brass key.");
  CHECK(go(w, s, "open box with brass key").feedback ==
        "You open the box with the brass key.");
  CHECK(render_look(w, s) ==
        "You are in the pantry. Exits: east (closed iron door). "
        "You see: table, box, knife. In the box: iron key.");
  CHECK(go(w, s, "open box with brass key").feedback == "That doesn't work.");

  CHECK(go(w, s, "take iron key from box").feedback ==
        "You take the iron key from the box.");
  CHECK(go(w, s, "open iron door with brass key").feedback == "That doesn't work.");
  CHECK(go(w, s, "open iron door with iron key").feedback ==
        "You open the iron door with the iron key.");

  Transition move = go(w, s, "go east");
  CHECK(move.admissible);
  CHECK(move.feedback == "You are in the hall. Exits: west (open iron door). You see: tomato.");
  CHECK(s.visited == std::set<int>{0, 1});

  CHECK(go(w, s, "take knife").feedback == "You can't take that.");
  CHECK(go(w, s, "take tomato").feedback == "You take the tomato.");
  CHECK(go(w, s, "slice tomato with brass key").feedback == "You can't slice that.");
  Transition sliced = go(w, s, "slice tomato with knife");
  CHECK(sliced.feedback == "You can't slice that.");  // knife still in pantry
  go(w, s, "go west");
  go(w, s, "take knife");

  sliced = go(w, s, "slice tomato with knife");
  CHECK(sliced.feedback == "You slice the tomato with the knife.");
  CHECK(sliced.reward == 5);
  CHECK(go(w, s, "slice tomato with knife").feedback == "You can't slice that.");

  CHECK(go(w, s, "prepare meal").feedback == "Nothing happens.");
  Transition served = go(w, s, "put tomato on table");
  CHECK(served.feedback == "You put the tomato on the table.");
  CHECK(served.reward == 10);
  CHECK(!served.done);

  Transition meal = go(w, s, "prepare meal");
  CHECK(meal.feedback == "You prepare the meal.");
  CHECK(meal.reward == 5);
  CHECK(meal.done);
  CHECK(s.score == 20);
  CHECK(s.subtasks_completed() == 3);
  CHECK(go(w, s, "prepare meal").feedback == "Nothing happens.");

  // insert works once the box is open, and rewards never repeat
  go(w, s, "take tomato");
  CHECK(go(w, s, "insert tomato into box").feedback == "You put the tomato into the box.");
  CHECK(go(w, s, "take iron key from box").feedback == "You can't take that.");  // carried
  Transition again = go(w, s, "put tomato on table");
  CHECK(again.feedback == "You can't do that.");  // tomato in box, not carried
  go(w, s, "take tomato from box");
  again = go(w, s, "put tomato on table");
  CHECK(again.admissible);
  CHECK(again.reward == 0);
}

TEST_CASE("look and inventory never change state") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  for (const char* text : {"look", "inventory"}) {
    Transition tr = step(w, s, parse_command(w, text));
    CHECK(!tr.admissible);
    CHECK(tr.next == s);
  }
  CHECK(step(w, s, parse_command(w, "look")).feedback == render_look(w, s));
  CHECK(step(w, s, parse_command(w, "inventory")).feedback == render_inventory(w, s));
}

TEST_CASE("render_feedback is a pure preview") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  std::string key_before = state_key(s);
  CHECK(render_feedback(w, s, parse_command(w, "take knife")) == "You take the knife.");
  CHECK(state_key(s) == key_before);
}

TEST_CASE("state_key separates every field") {
  WorldSpec w = micro_world();
  GameState a = initial_state(w);
  GameState b = a;
  CHECK(state_key(a) == state_key(b));
  b.agent_room = 1;
  CHECK(state_key(a) != state_key(b));
  b = a;
  b.object_location[5] = kInInventory;
  CHECK(state_key(a) != state_key(b));
  b = a;
  b.door_open[0] = 1;
  CHECK(state_key(a) != state_key(b));
  b = a;
  b.object_flags[4] |= kFlagSliced;
  CHECK(state_key(a) != state_key(b));
  b = a;
  b.visited.insert(1);
  CHECK(state_key(a) != state_key(b));
}

TEST_CASE("vocab covers everything the engine can emit") {
  WorldSpec w = micro_world();
  GameState s = initial_state(w);
  // walk a few states and encode every render + feedback
  std::vector<std::string> texts = {render_look(w, s), render_inventory(w, s)};
  for (std::size_t i = 0; i < w.action_set.size(); ++i)
    texts.push_back(render_feedback(w, s, w.action_set[i]));
  for (const auto& t : texts) CHECK_NOTHROW((void)w.vocab.encode(t));
}

TEST_CASE("level 1 exhaustive reachability invariants") {
  WorldSpec w = load_level(1);
  GameState start = initial_state(w);
  std::unordered_set<std::string> seen{state_key(start)};
  std::deque<GameState> frontier{start};
  long transitions = 0;
  while (!frontier.empty()) {
    GameState s = frontier.front();
    frontier.pop_front();
    bool s_done = s.subtasks_completed() == int(w.subtasks.size());
    for (int a = 0; a < int(w.action_set.size()); ++a) {
      Transition tr = step_action(w, s, a);
      ++transitions;
      CHECK(tr.admissible == !(tr.next == s));
      if (!tr.admissible) {
        CHECK(tr.reward == 0);
        CHECK(tr.next.score == s.score);
      }
      CHECK(tr.done == (tr.next.subtasks_completed() == int(w.subtasks.size())));
      if (s_done) CHECK(tr.reward == 0);  // score is capped at max
      CHECK(tr.next.score <= w.max_score());
      if (seen.insert(state_key(tr.next)).second) {
        frontier.push_back(tr.next);
        CHECK_NOTHROW((void)w.vocab.encode(tr.feedback));
        CHECK_NOTHROW((void)w.vocab.encode(render_look(w, tr.next)));
      }
    }
  }
  // 4 rooms x carried/market/counter lettuce x visited sets, minus unreachable
  // combinations
  CHECK(seen.size() == 22);
  // oracle matches the per-action admissible flags
  std::vector<int> adm = admissible_set_oracle(w, start);
  for (int a = 0; a < int(w.action_set.size()); ++a) {
    bool in = std::find(adm.begin(), adm.end(), a) != adm.end();
    CHECK(in == step_action(w, start, a).admissible);
  }
}
