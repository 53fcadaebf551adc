#pragma once

#include <array>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "saladworld/text.hpp"

namespace saladworld {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Direction { North = 0, South, East, West, Up, Down };
constexpr int kDirectionCount = 6;

Direction opposite(Direction d);
const char* to_string(Direction d);
std::optional<Direction> direction_from(const std::string& word);

enum class Verb { Go = 0, Take, Put, Insert, Open, Slice, Prepare, Look, Inventory };
const char* to_string(Verb v);

enum class ObjectKind { Portable = 0, Key, Food, Fixture };
enum class FixtureType { None = 0, Surface, Container };

// Per-object state bits.
enum ObjFlag : unsigned {
  kFlagSliced = 1u << 0,
  kFlagPrepared = 1u << 1,
  kFlagOpen = 1u << 2,  // lockable containers
};

// A command is a verb plus up to two resolved arguments. For Go, arg1 is a
// direction index; for door commands arg1 is a door index; everything else
// indexes into WorldSpec::objects.
struct Command {
  Verb verb = Verb::Look;
  int arg1 = -1;
  int arg2 = -1;

  bool operator==(const Command&) const = default;
  bool operator<(const Command& o) const {
    if (verb != o.verb) return verb < o.verb;
    if (arg1 != o.arg1) return arg1 < o.arg1;
    return arg2 < o.arg2;
  }
};

struct Exit {
  int room = -1;  // -1 = no exit
  int door = -1;  // -1 = open passage
};

struct RoomSpec {
  std::string id;
  std::string name;
  std::array<Exit, kDirectionCount> exits{};
};

struct DoorSpec {
  std::string id;
  std::string name;
  int key_object = -1;
  bool starts_closed = true;
};

struct ObjectSpec {
  std::string id;
  std::string name;
  ObjectKind kind = ObjectKind::Portable;
  FixtureType fixture = FixtureType::None;
  bool sharp = false;            // usable as a slicing tool
  int lock_key = -1;             // containers: key object id, -1 = never locked
  bool starts_in_fixture = false;
  int start_at = -1;             // room index, or fixture object index
};

// Subtask predicates are conjunctions of these atoms.
struct Atom {
  enum Type { ObjectAt, DoorOpen, RoomVisited, FlagSet } type = ObjectAt;
  int a = -1;  // object / door / room
  int b = -1;  // fixture object (ObjectAt) or ObjFlag bit (FlagSet)

  bool operator==(const Atom&) const = default;
};

struct SubtaskSpec {
  std::string id;
  int points = 0;
  std::vector<Atom> all_of;

  bool operator==(const SubtaskSpec&) const = default;
};

struct WorldSpec {
  int level = 0;
  std::string title;
  int start_room = 0;
  std::vector<RoomSpec> rooms;
  std::vector<DoorSpec> doors;
  std::vector<ObjectSpec> objects;
  std::vector<SubtaskSpec> subtasks;
  std::vector<Command> action_set;
  std::vector<std::string> action_texts;  // canonical text per action id
  Vocab vocab;

  int room_index(const std::string& id) const;    // -1 when absent
  int object_index(const std::string& id) const;
  int door_index(const std::string& id) const;
  int action_index(const Command& c) const;
  int max_score() const;
};

// Object locations are encoded in one int per object: a room index, or
// rooms.size() + fixture object index, or kInInventory.
constexpr int kInInventory = -1;

struct GameState {
  int agent_room = 0;
  std::vector<int> object_location;
  std::vector<unsigned char> door_open;
  std::vector<unsigned> object_flags;
  std::vector<unsigned char> subtask_done;
  std::set<int> visited;
  int score = 0;

  bool operator==(const GameState&) const = default;

  bool in_inventory(int obj) const { return object_location[obj] == kInInventory; }
  int subtasks_completed() const;
};

struct Transition {
  GameState next;
  std::string feedback;
  int reward = 0;
  bool admissible = false;  // e_t: did the command change the state
  bool done = false;        // all subtasks complete
};

GameState initial_state(const WorldSpec& spec);

// Applies a command. Commands outside the action set are rejected with
// ValidationError; failed commands inside it return e = 0 and a refusal.
Transition step(const WorldSpec& spec, const GameState& state, const Command& cmd);
Transition step_action(const WorldSpec& spec, const GameState& state, int action_id);

// Ground-truth admissible set, computed by probing step() for every action.
std::vector<int> admissible_set_oracle(const WorldSpec& spec, const GameState& state);

Command parse_command(const WorldSpec& spec, const std::string& text);
std::string command_text(const WorldSpec& spec, const Command& cmd);

std::string render_look(const WorldSpec& spec, const GameState& state);
std::string render_inventory(const WorldSpec& spec, const GameState& state);
std::string render_feedback(const WorldSpec& spec, const GameState& state, const Command& cmd);

// Canonical serialization of a state (used for hashing / BFS in tests).
std::string state_key(const GameState& state);

// Template sentences used by the renderers; build_vocab folds these plus all
// names into the closed per-level vocabulary.
std::vector<std::string> feedback_templates();
Vocab build_vocab(const WorldSpec& spec);

}  // namespace saladworld
