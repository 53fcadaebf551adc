#include "saladworld/world.hpp"

#include <algorithm>
#include <sstream>

namespace saladworld {

namespace {

const char* kDirNames[kDirectionCount] = {"north", "south", "east", "west", "up", "down"};
const char* kVerbNames[] = {"go",    "take",    "put",  "insert", "open",
                            "slice", "prepare", "look", "inventory"};

// Fixed refusal strings; failed commands never depend on hidden detail beyond
// what the templates show.
const char* kCantGo = "You can't go that way.";
const char* kCantTake = "You can't take that.";
const char* kCantDo = "You can't do that.";
const char* kNoWork = "That doesn't work.";
const char* kCantSlice = "You can't slice that.";
const char* kNothing = "Nothing happens.";

int fixture_loc(const WorldSpec& spec, int fixture) {
  return static_cast<int>(spec.rooms.size()) + fixture;
}

bool is_portable(const ObjectSpec& o) { return o.kind != ObjectKind::Fixture; }

bool container_open(const GameState& s, const ObjectSpec& o, int obj) {
  if (o.lock_key < 0) return true;
  return (s.object_flags[obj] & kFlagOpen) != 0;
}

// Room index of a fixture (fixtures never move).
int fixture_room(const WorldSpec& spec, int obj) {
  return spec.objects[obj].start_at;
}

}  // namespace

Direction opposite(Direction d) {
  switch (d) {
    case Direction::North: return Direction::South;
    case Direction::South: return Direction::North;
    case Direction::East: return Direction::West;
    case Direction::West: return Direction::East;
    case Direction::Up: return Direction::Down;
    case Direction::Down: return Direction::Up;
  }
  return Direction::North;
}

const char* to_string(Direction d) { return kDirNames[static_cast<int>(d)]; }

std::optional<Direction> direction_from(const std::string& word) {
  for (int i = 0; i < kDirectionCount; ++i) {
    if (word == kDirNames[i]) return static_cast<Direction>(i);
  }
  return std::nullopt;
}

const char* to_string(Verb v) { return kVerbNames[static_cast<int>(v)]; }

int WorldSpec::room_index(const std::string& id) const {
  for (int i = 0; i < static_cast<int>(rooms.size()); ++i)
    if (rooms[i].id == id) return i;
  return -1;
}

int WorldSpec::object_index(const std::string& id) const {
  for (int i = 0; i < static_cast<int>(objects.size()); ++i)
    if (objects[i].id == id) return i;
  return -1;
}

int WorldSpec::door_index(const std::string& id) const {
  for (int i = 0; i < static_cast<int>(doors.size()); ++i)
    if (doors[i].id == id) return i;
  return -1;
}

int WorldSpec::action_index(const Command& c) const {
  for (int i = 0; i < static_cast<int>(action_set.size()); ++i)
    if (action_set[i] == c) return i;
  return -1;
}

int WorldSpec::max_score() const {
  int total = 0;
  for (const auto& st : subtasks) total += st.points;
  return total;
}

int GameState::subtasks_completed() const {
  int n = 0;
  for (auto b : subtask_done) n += b ? 1 : 0;
  return n;
}

GameState initial_state(const WorldSpec& spec) {
  GameState s;
  s.agent_room = spec.start_room;
  s.object_location.resize(spec.objects.size());
  for (int i = 0; i < static_cast<int>(spec.objects.size()); ++i) {
    const auto& o = spec.objects[i];
    s.object_location[i] = o.starts_in_fixture ? fixture_loc(spec, o.start_at) : o.start_at;
  }
  s.door_open.assign(spec.doors.size(), 0);
  for (int d = 0; d < static_cast<int>(spec.doors.size()); ++d)
    s.door_open[d] = spec.doors[d].starts_closed ? 0 : 1;
  s.object_flags.assign(spec.objects.size(), 0u);
  s.subtask_done.assign(spec.subtasks.size(), 0);
  s.visited.insert(spec.start_room);
  return s;
}

namespace {

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

// Whether object obj can be picked up with a bare "take" from the current
// room: lying in the room, on a surface, or inside an open container.
bool reachable_portable(const WorldSpec& spec, const GameState& s, int obj) {
  const auto& o = spec.objects[obj];
  if (!is_portable(o)) return false;
  int loc = s.object_location[obj];
  if (loc == s.agent_room) return true;
  int nrooms = static_cast<int>(spec.rooms.size());
  if (loc >= nrooms) {
    int fix = loc - nrooms;
    if (fixture_room(spec, fix) != s.agent_room) return false;
    const auto& f = spec.objects[fix];
    if (f.fixture == FixtureType::Surface) return true;
    return container_open(s, f, fix);
  }
  return false;
}

bool eval_atom(const WorldSpec& spec, const GameState& s, const Atom& a) {
  switch (a.type) {
    case Atom::ObjectAt: return s.object_location[a.a] == fixture_loc(spec, a.b);
    case Atom::DoorOpen: return s.door_open[a.a] != 0;
    case Atom::RoomVisited: return s.visited.count(a.a) > 0;
    case Atom::FlagSet: return (s.object_flags[a.a] & static_cast<unsigned>(a.b)) != 0;
  }
  return false;
}

bool eval_predicate(const WorldSpec& spec, const GameState& s, const SubtaskSpec& st) {
  for (const auto& atom : st.all_of)
    if (!eval_atom(spec, s, atom)) return false;
  return true;
}

// Index of the meal anchor: the object carrying a prepared() predicate atom.
int meal_anchor(const WorldSpec& spec, int* subtask_out) {
  for (int i = 0; i < static_cast<int>(spec.subtasks.size()); ++i) {
    for (const auto& atom : spec.subtasks[i].all_of) {
      if (atom.type == Atom::FlagSet && (atom.b & kFlagPrepared)) {
        if (subtask_out) *subtask_out = i;
        return atom.a;
      }
    }
  }
  return -1;
}

// Applies cmd to s in place; returns the feedback. Failed commands leave s
// untouched.
std::string exec(const WorldSpec& spec, GameState& s, const Command& cmd) {
  int nobj = static_cast<int>(spec.objects.size());
  switch (cmd.verb) {
    case Verb::Look:
      return render_look(spec, s);
    case Verb::Inventory:
      return render_inventory(spec, s);
    case Verb::Go: {
      const Exit& e = spec.rooms[s.agent_room].exits[cmd.arg1];
      if (e.room < 0) return kCantGo;
      if (e.door >= 0 && !s.door_open[e.door])
        return "The " + spec.doors[e.door].name + " is closed.";
      s.agent_room = e.room;
      s.visited.insert(e.room);
      return render_look(spec, s);
    }
    case Verb::Take: {
      int obj = cmd.arg1;
      if (obj < 0 || obj >= nobj) return kCantTake;
      if (s.in_inventory(obj)) return kCantTake;
      if (cmd.arg2 >= 0) {  // take <obj> from <fixture>
        int fix = cmd.arg2;
        const auto& f = spec.objects[fix];
        if (f.fixture == FixtureType::None) return kCantTake;
        if (fixture_room(spec, fix) != s.agent_room) return kCantTake;
        if (s.object_location[obj] != fixture_loc(spec, fix)) return kCantTake;
        if (f.fixture == FixtureType::Container && !container_open(s, f, fix)) return kCantTake;
        s.object_location[obj] = kInInventory;
        return "You take the " + spec.objects[obj].name + " from the " + f.name + ".";
      }
      if (!reachable_portable(spec, s, obj)) return kCantTake;
      s.object_location[obj] = kInInventory;
      return "You take the " + spec.objects[obj].name + ".";
    }
    case Verb::Put: {
      int obj = cmd.arg1, fix = cmd.arg2;
      if (obj < 0 || fix < 0 || fix >= nobj) return kCantDo;
      const auto& f = spec.objects[fix];
      if (!s.in_inventory(obj)) return kCantDo;
      if (f.fixture != FixtureType::Surface) return kCantDo;
      if (fixture_room(spec, fix) != s.agent_room) return kCantDo;
      s.object_location[obj] = fixture_loc(spec, fix);
      return "You put the " + spec.objects[obj].name + " on the " + f.name + ".";
    }
    case Verb::Insert: {
      int obj = cmd.arg1, fix = cmd.arg2;
      if (obj < 0 || fix < 0 || fix >= nobj) return kCantDo;
      const auto& f = spec.objects[fix];
      if (!s.in_inventory(obj)) return kCantDo;
      if (f.fixture != FixtureType::Container) return kCantDo;
      if (fixture_room(spec, fix) != s.agent_room) return kCantDo;
      if (!container_open(s, f, fix)) return kCantDo;
      s.object_location[obj] = fixture_loc(spec, fix);
      return "You put the " + spec.objects[obj].name + " into the " + f.name + ".";
    }
    case Verb::Open: {
      if (cmd.arg2 < 0) return kNoWork;  // bare open never succeeds on locks
      int key = cmd.arg2;
      if (cmd.arg1 >= nobj) {  // door target
        int door = cmd.arg1 - nobj;
        const auto& d = spec.doors[door];
        bool adjacent = false;
        for (const auto& e : spec.rooms[s.agent_room].exits)
          if (e.door == door) adjacent = true;
        if (!adjacent || s.door_open[door]) return kNoWork;
        if (d.key_object != key || !s.in_inventory(key)) return kNoWork;
        s.door_open[door] = 1;
        return "You open the " + d.name + " with the " + spec.objects[key].name + ".";
      }
      int fix = cmd.arg1;
      const auto& f = spec.objects[fix];
      if (f.fixture != FixtureType::Container || f.lock_key < 0) return kNoWork;
      if (fixture_room(spec, fix) != s.agent_room) return kNoWork;
      if (s.object_flags[fix] & kFlagOpen) return kNoWork;
      if (f.lock_key != key || !s.in_inventory(key)) return kNoWork;
      s.object_flags[fix] |= kFlagOpen;
      return "You open the " + f.name + " with the " + spec.objects[key].name + ".";
    }
    case Verb::Slice: {
      int obj = cmd.arg1, tool = cmd.arg2;
      if (obj < 0 || tool < 0) return kCantSlice;
      if (spec.objects[obj].kind != ObjectKind::Food) return kCantSlice;
      if (!spec.objects[tool].sharp) return kCantSlice;
      if (!s.in_inventory(obj) || !s.in_inventory(tool)) return kCantSlice;
      if (s.object_flags[obj] & kFlagSliced) return kCantSlice;
      s.object_flags[obj] |= kFlagSliced;
      return "You slice the " + spec.objects[obj].name + " with the " +
             spec.objects[tool].name + ".";
    }
    case Verb::Prepare: {
      int meal_subtask = -1;
      int anchor = meal_anchor(spec, &meal_subtask);
      if (anchor < 0) return kNothing;
      if (s.agent_room != fixture_room(spec, anchor)) return kNothing;
      if (s.object_flags[anchor] & kFlagPrepared) return kNothing;
      for (int i = 0; i < static_cast<int>(spec.subtasks.size()); ++i)
        if (i != meal_subtask && !s.subtask_done[i]) return kNothing;
      s.object_flags[anchor] |= kFlagPrepared;
      return "You prepare the meal.";
    }
  }
  return kNothing;
}

}  // namespace

Transition step_action(const WorldSpec& spec, const GameState& state, int action_id) {
  if (action_id < 0 || action_id >= static_cast<int>(spec.action_set.size()))
    throw ValidationError("action id out of range");
  Transition tr;
  tr.next = state;
  tr.feedback = exec(spec, tr.next, spec.action_set[action_id]);
  for (int i = 0; i < static_cast<int>(spec.subtasks.size()); ++i) {
    if (!tr.next.subtask_done[i] && eval_predicate(spec, tr.next, spec.subtasks[i])) {
      tr.next.subtask_done[i] = 1;
      tr.reward += spec.subtasks[i].points;
    }
  }
  tr.next.score += tr.reward;
  tr.admissible = !(tr.next == state);
  tr.done = tr.next.subtasks_completed() == static_cast<int>(spec.subtasks.size());
  return tr;
}

Transition step(const WorldSpec& spec, const GameState& state, const Command& cmd) {
  int id = spec.action_index(cmd);
  if (id < 0)
    throw ValidationError("command outside the action set: " + command_text(spec, cmd));
  return step_action(spec, state, id);
}

std::vector<int> admissible_set_oracle(const WorldSpec& spec, const GameState& state) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(spec.action_set.size()); ++i)
    if (step_action(spec, state, i).admissible) out.push_back(i);
  return out;
}

std::string render_look(const WorldSpec& spec, const GameState& s) {
  const RoomSpec& room = spec.rooms[s.agent_room];
  std::string out = "You are in the " + room.name + ".";
  std::vector<std::string> exits;
  for (int d = 0; d < kDirectionCount; ++d) {
    const Exit& e = room.exits[d];
    if (e.room < 0) continue;
    std::string item = kDirNames[d];
    if (e.door >= 0) {
      item += s.door_open[e.door] ? " (open " : " (closed ";
      item += spec.doors[e.door].name + ")";
    }
    exits.push_back(item);
  }
  if (!exits.empty()) out += " Exits: " + join_names(exits) + ".";
  std::vector<std::string> here;
  for (int i = 0; i < static_cast<int>(spec.objects.size()); ++i)
    if (s.object_location[i] == s.agent_room) here.push_back(spec.objects[i].name);
  if (!here.empty()) out += " You see: " + join_names(here) + ".";
  int nrooms = static_cast<int>(spec.rooms.size());
  for (int f = 0; f < static_cast<int>(spec.objects.size()); ++f) {
    const auto& o = spec.objects[f];
    if (o.fixture == FixtureType::None || fixture_room(spec, f) != s.agent_room) continue;
    if (o.fixture == FixtureType::Container && !container_open(s, o, f)) {
      out += " The " + o.name + " is closed.";
      continue;
    }
    std::vector<std::string> contents;
    for (int i = 0; i < static_cast<int>(spec.objects.size()); ++i)
      if (s.object_location[i] == nrooms + f) contents.push_back(spec.objects[i].name);
    if (contents.empty()) continue;
    if (o.fixture == FixtureType::Surface)
      out += " On the " + o.name + ": " + join_names(contents) + ".";
    else
      out += " In the " + o.name + ": " + join_names(contents) + ".";
  }
  return out;
}

std::string render_inventory(const WorldSpec& spec, const GameState& s) {
  std::vector<std::string> carried;
  for (int i = 0; i < static_cast<int>(spec.objects.size()); ++i)
    if (s.object_location[i] == kInInventory) carried.push_back(spec.objects[i].name);
  if (carried.empty()) return "You are carrying nothing.";
  return "You are carrying: " + join_names(carried) + ".";
}

std::string render_feedback(const WorldSpec& spec, const GameState& state, const Command& cmd) {
  GameState scratch = state;
  return exec(spec, scratch, cmd);
}

std::string command_text(const WorldSpec& spec, const Command& cmd) {
  int nobj = static_cast<int>(spec.objects.size());
  auto obj = [&](int i) { return spec.objects[i].name; };
  switch (cmd.verb) {
    case Verb::Look: return "look";
    case Verb::Inventory: return "inventory";
    case Verb::Go: return std::string("go ") + kDirNames[cmd.arg1];
    case Verb::Take:
      if (cmd.arg2 >= 0) return "take " + obj(cmd.arg1) + " from " + obj(cmd.arg2);
      return "take " + obj(cmd.arg1);
    case Verb::Put: return "put " + obj(cmd.arg1) + " on " + obj(cmd.arg2);
    case Verb::Insert: return "insert " + obj(cmd.arg1) + " into " + obj(cmd.arg2);
    case Verb::Open: {
      std::string target =
          cmd.arg1 >= nobj ? spec.doors[cmd.arg1 - nobj].name : obj(cmd.arg1);
      if (cmd.arg2 < 0) return "open " + target;
      return "open " + target + " with " + obj(cmd.arg2);
    }
    case Verb::Slice: return "slice " + obj(cmd.arg1) + " with " + obj(cmd.arg2);
    case Verb::Prepare: return "prepare meal";
  }
  return "look";
}

namespace {

// Longest name match against a token table starting at pos; returns (index,
// tokens consumed) or (-1, 0).
std::pair<int, int> match_name(const std::vector<std::vector<std::string>>& table,
                               const std::vector<std::string>& toks, std::size_t pos) {
  int best = -1, best_len = 0;
  for (int i = 0; i < static_cast<int>(table.size()); ++i) {
    const auto& name = table[i];
    if (name.empty() || pos + name.size() > toks.size()) continue;
    bool ok = true;
    for (std::size_t j = 0; j < name.size(); ++j)
      if (toks[pos + j] != name[j]) { ok = false; break; }
    if (ok && static_cast<int>(name.size()) > best_len) {
      best = i;
      best_len = static_cast<int>(name.size());
    }
  }
  return {best, best_len};
}

}  // namespace

Command parse_command(const WorldSpec& spec, const std::string& text) {
  std::vector<std::string> toks;
  for (auto& t : tokenize(text))
    if (t != "the" && t != "a" && t != "an") toks.push_back(t);
  if (toks.empty()) throw ParseError("empty command");

  std::vector<std::vector<std::string>> obj_names, door_names;
  for (const auto& o : spec.objects) obj_names.push_back(tokenize(o.name));
  for (const auto& d : spec.doors) door_names.push_back(tokenize(d.name));
  int nobj = static_cast<int>(spec.objects.size());

  auto need_object = [&](std::size_t& pos, const char* what) {
    auto [idx, len] = match_name(obj_names, toks, pos);
    if (idx < 0) throw ParseError(std::string("unknown ") + what + " in: " + text);
    pos += len;
    return idx;
  };
  auto expect_word = [&](std::size_t& pos, const std::string& word) {
    if (pos >= toks.size() || toks[pos] != word)
      throw ParseError("expected '" + word + "' in: " + text);
    ++pos;
  };
  auto expect_end = [&](std::size_t pos) {
    if (pos != toks.size()) throw ParseError("trailing words in: " + text);
  };

  const std::string& verb = toks[0];
  std::size_t pos = 1;
  if (verb == "look") {
    expect_end(pos);
    return {Verb::Look, -1, -1};
  }
  if (verb == "inventory") {
    expect_end(pos);
    return {Verb::Inventory, -1, -1};
  }
  if (verb == "go") {
    if (pos >= toks.size()) throw ParseError("go where? " + text);
    auto dir = direction_from(toks[pos]);
    if (!dir) throw ParseError("unknown direction: " + toks[pos]);
    expect_end(pos + 1);
    return {Verb::Go, static_cast<int>(*dir), -1};
  }
  if (verb == "take" || verb == "get") {
    int obj = need_object(pos, "object");
    if (pos < toks.size() && toks[pos] == "from") {
      ++pos;
      int fix = need_object(pos, "fixture");
      expect_end(pos);
      return {Verb::Take, obj, fix};
    }
    expect_end(pos);
    return {Verb::Take, obj, -1};
  }
  if (verb == "put") {
    int obj = need_object(pos, "object");
    expect_word(pos, "on");
    int fix = need_object(pos, "fixture");
    expect_end(pos);
    return {Verb::Put, obj, fix};
  }
  if (verb == "insert") {
    int obj = need_object(pos, "object");
    expect_word(pos, "into");
    int fix = need_object(pos, "fixture");
    expect_end(pos);
    return {Verb::Insert, obj, fix};
  }
  if (verb == "open") {
    auto [door, dlen] = match_name(door_names, toks, pos);
    int target;
    if (door >= 0) {
      target = nobj + door;
      pos += dlen;
    } else {
      target = need_object(pos, "door or container");
    }
    if (pos < toks.size() && toks[pos] == "with") {
      ++pos;
      int key = need_object(pos, "key");
      expect_end(pos);
      return {Verb::Open, target, key};
    }
    expect_end(pos);
    return {Verb::Open, target, -1};
  }
  if (verb == "slice") {
    int obj = need_object(pos, "object");
    expect_word(pos, "with");
    int tool = need_object(pos, "tool");
    expect_end(pos);
    return {Verb::Slice, obj, tool};
  }
  if (verb == "prepare") {
    expect_word(pos, "meal");
    expect_end(pos);
    return {Verb::Prepare, -1, -1};
  }
  throw ParseError("unknown verb: " + verb);
}

std::string state_key(const GameState& s) {
  std::ostringstream out;
  out << s.agent_room << '|';
  for (int loc : s.object_location) out << loc << ',';
  out << '|';
  for (auto d : s.door_open) out << int(d);
  out << '|';
  for (auto f : s.object_flags) out << f << ',';
  out << '|';
  for (auto b : s.subtask_done) out << int(b);
  out << '|';
  for (int r : s.visited) out << r << ',';
  out << '|' << s.score;
  return out.str();
}

std::vector<std::string> feedback_templates() {
  return {
      "You are in the", "Exits:", "You see:", "On the", "In the",
      "The", "is closed.", "(open", "(closed",
      "You are carrying nothing.", "You are carrying:",
      "You take the", "from the", "You put the", "on the", "into the",
      "You open the", "with the", "You slice the", "You prepare the meal.",
      kCantGo, kCantTake, kCantDo, kNoWork, kCantSlice, kNothing,
      // canonical command words
      "go take put insert open slice prepare look inventory",
      "on into with from meal",
      "north south east west up down",
  };
}

Vocab build_vocab(const WorldSpec& spec) {
  std::vector<std::string> corpus = feedback_templates();
  for (const auto& r : spec.rooms) corpus.push_back(r.name);
  for (const auto& o : spec.objects) corpus.push_back(o.name);
  for (const auto& d : spec.doors) corpus.push_back(d.name);
  for (const auto& t : spec.action_texts) corpus.push_back(t);
  return Vocab::build(corpus);
}

}  // namespace saladworld
