#include "saladworld/levels.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace saladworld {

namespace {

std::string g_data_dir;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::vector<int> score_ladder(int max) {
  std::vector<int> out;
  for (int v = 5; v <= max; v += 5) out.push_back(v);
  return out;
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ParseError(path + ": " + msg);
}

}  // namespace

const std::vector<LevelCatalogEntry>& level_catalog() {
  static const std::vector<LevelCatalogEntry> rows = {
      {1, 4, 2, 2, 8, {10, 15}, {10, 15}},
      {2, 7, 4, 3, 15, {10, 15, 20}, score_ladder(20)},
      {3, 7, 4, 3, 15, {10, 15, 20}, score_ladder(20)},
      {4, 9, 8, 4, 50, {10, 15, 20, 25}, score_ladder(25)},
      {5, 11, 15, 5, 141, {10, 15, 20, 25, 30}, score_ladder(30)},
      {6, 12, 20, 6, 283, {10, 15, 20, 25, 30, 35}, score_ladder(35)},
      {7, 12, 20, 7, 295, {10, 15, 20, 25, 30, 35, 40}, score_ladder(40)},
  };
  return rows;
}

void set_level_data_dir(const std::string& dir) { g_data_dir = dir; }

std::string level_data_dir() {
  if (!g_data_dir.empty()) return g_data_dir;
  if (const char* env = std::getenv("SALADWORLD_LEVELS"); env && *env) return env;
#ifdef SALADWORLD_SOURCE_DATA_DIR
  return SALADWORLD_SOURCE_DATA_DIR;
#else
  return "data/levels";
#endif
}

namespace {

Atom parse_atom(const WorldSpec& spec, const std::string& text, const std::string& path) {
  std::size_t lp = text.find('('), rp = text.find(')');
  if (lp == std::string::npos || rp == std::string::npos || rp < lp)
    fail(path, "bad predicate atom: " + text);
  std::string head = trim(text.substr(0, lp));
  auto args = split(text.substr(lp + 1, rp - lp - 1), ',');
  auto obj = [&](const std::string& id) {
    int i = spec.object_index(id);
    if (i < 0) fail(path, "unknown object in predicate: " + id);
    return i;
  };
  if (head == "at") {
    if (args.size() != 2) fail(path, "at() wants two arguments: " + text);
    int fix = obj(args[1]);
    if (spec.objects[fix].fixture == FixtureType::None)
      fail(path, "at() target is not a fixture: " + args[1]);
    return {Atom::ObjectAt, obj(args[0]), fix};
  }
  if (head == "open") {
    int d = spec.door_index(args[0]);
    if (d < 0) fail(path, "unknown door in predicate: " + args[0]);
    return {Atom::DoorOpen, d, 0};
  }
  if (head == "visited") {
    int r = spec.room_index(args[0]);
    if (r < 0) fail(path, "unknown room in predicate: " + args[0]);
    return {Atom::RoomVisited, r, 0};
  }
  if (head == "sliced") return {Atom::FlagSet, obj(args[0]), static_cast<int>(kFlagSliced)};
  if (head == "prepared") return {Atom::FlagSet, obj(args[0]), static_cast<int>(kFlagPrepared)};
  fail(path, "unknown predicate: " + head);
}

}  // namespace

WorldSpec load_world_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open level file: " + path);

  std::map<std::string, std::vector<std::string>> sections;
  std::string line, section;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      sections[section];
      continue;
    }
    if (section.empty()) fail(path, "content before the first section header");
    sections[section].push_back(line);
  }
  for (const char* name : {"meta", "rooms", "objects", "subtasks", "actions"})
    if (!sections.count(name)) fail(path, std::string("missing [") + name + "] section");

  WorldSpec spec;
  std::string start_id;
  for (const auto& l : sections["meta"]) {
    auto kv = split(l, '|');
    if (kv.size() != 2) fail(path, "bad meta line: " + l);
    if (kv[0] == "level") spec.level = std::stoi(kv[1]);
    else if (kv[0] == "title") spec.title = kv[1];
    else if (kv[0] == "start") start_id = kv[1];
    else fail(path, "unknown meta key: " + kv[0]);
  }

  // Pass 1: ids and names, so later fields can reference anything declared.
  std::vector<std::vector<std::string>> room_lines, door_lines, object_lines;
  for (const auto& l : sections["rooms"]) {
    auto f = split(l, '|');
    if (f.size() != 8) fail(path, "room line wants 8 fields: " + l);
    if (spec.room_index(f[0]) >= 0) fail(path, "duplicate room id: " + f[0]);
    RoomSpec r;
    r.id = f[0];
    r.name = f[1];
    spec.rooms.push_back(r);
    room_lines.push_back(f);
  }
  for (const auto& l : sections["doors"]) {
    auto f = split(l, '|');
    if (f.size() != 4) fail(path, "door line wants 4 fields: " + l);
    if (spec.door_index(f[0]) >= 0) fail(path, "duplicate door id: " + f[0]);
    DoorSpec d;
    d.id = f[0];
    d.name = f[1];
    spec.doors.push_back(d);
    door_lines.push_back(f);
  }
  for (const auto& l : sections["objects"]) {
    auto f = split(l, '|');
    if (f.size() != 5) fail(path, "object line wants 5 fields: " + l);
    if (spec.object_index(f[0]) >= 0) fail(path, "duplicate object id: " + f[0]);
    ObjectSpec o;
    o.id = f[0];
    o.name = f[1];
    spec.objects.push_back(o);
    object_lines.push_back(f);
  }

  // Pass 2: resolve references.
  for (std::size_t i = 0; i < object_lines.size(); ++i) {
    const auto& f = object_lines[i];
    ObjectSpec& o = spec.objects[i];
    if (f[2] == "portable") o.kind = ObjectKind::Portable;
    else if (f[2] == "key") o.kind = ObjectKind::Key;
    else if (f[2] == "food") o.kind = ObjectKind::Food;
    else if (f[2] == "surface") { o.kind = ObjectKind::Fixture; o.fixture = FixtureType::Surface; }
    else if (f[2] == "container") { o.kind = ObjectKind::Fixture; o.fixture = FixtureType::Container; }
    else fail(path, "unknown object kind: " + f[2]);

    if (int r = spec.room_index(f[3]); r >= 0) {
      o.start_at = r;
    } else if (int fx = spec.object_index(f[3]); fx >= 0) {
      if (spec.objects[fx].fixture == FixtureType::None)
        fail(path, "object placed inside a non-fixture: " + f[3]);
      if (o.kind == ObjectKind::Fixture) fail(path, "fixtures must start in a room: " + o.id);
      o.starts_in_fixture = true;
      o.start_at = fx;
    } else {
      fail(path, "unknown place for object " + o.id + ": " + f[3]);
    }

    if (f[4] != "-") {
      for (const auto& flag : split(f[4], ',')) {
        if (flag == "sharp") o.sharp = true;
        else if (flag.rfind("lock=", 0) == 0) {
          int k = spec.object_index(flag.substr(5));
          if (k < 0) fail(path, "unknown lock key: " + flag);
          if (o.fixture != FixtureType::Container)
            fail(path, "lock= on a non-container: " + o.id);
          o.lock_key = k;
        } else {
          fail(path, "unknown object flag: " + flag);
        }
      }
    }
  }
  for (std::size_t i = 0; i < door_lines.size(); ++i) {
    const auto& f = door_lines[i];
    DoorSpec& d = spec.doors[i];
    d.key_object = spec.object_index(f[2]);
    if (d.key_object < 0) fail(path, "unknown door key: " + f[2]);
    if (spec.objects[d.key_object].kind != ObjectKind::Key)
      fail(path, "door key is not a key object: " + f[2]);
    if (f[3] == "closed") d.starts_closed = true;
    else if (f[3] == "open") d.starts_closed = false;
    else fail(path, "door state must be open or closed: " + f[3]);
  }
  for (std::size_t i = 0; i < room_lines.size(); ++i) {
    const auto& f = room_lines[i];
    for (int dir = 0; dir < kDirectionCount; ++dir) {
      const std::string& field = f[2 + dir];
      if (field == "-") continue;
      auto parts = split(field, ':');
      Exit& e = spec.rooms[i].exits[dir];
      e.room = spec.room_index(parts[0]);
      if (e.room < 0) fail(path, "unknown exit room: " + parts[0]);
      if (parts.size() == 2) {
        e.door = spec.door_index(parts[1]);
        if (e.door < 0) fail(path, "unknown exit door: " + parts[1]);
      } else if (parts.size() > 2) {
        fail(path, "bad exit field: " + field);
      }
    }
  }
  spec.start_room = spec.room_index(start_id);
  if (spec.start_room < 0) fail(path, "unknown start room: " + start_id);

  for (const auto& l : sections["subtasks"]) {
    auto f = split(l, '|');
    if (f.size() != 3) fail(path, "subtask line wants 3 fields: " + l);
    SubtaskSpec st;
    st.id = f[0];
    st.points = std::stoi(f[1]);
    for (const auto& atom : split(f[2], ';')) st.all_of.push_back(parse_atom(spec, atom, path));
    spec.subtasks.push_back(st);
  }

  for (const auto& l : sections["actions"]) {
    Command c = parse_command(spec, l);
    if (spec.action_index(c) >= 0) fail(path, "duplicate action: " + l);
    std::string canonical = command_text(spec, c);
    if (canonical != l) fail(path, "action not in canonical form: " + l + " vs " + canonical);
    spec.action_set.push_back(c);
    spec.action_texts.push_back(canonical);
  }
  if (spec.action_set.empty()) fail(path, "empty action set");

  // Doors must be reachable through some exit, and exits that share a door
  // must agree in both directions.
  for (int d = 0; d < static_cast<int>(spec.doors.size()); ++d) {
    bool used = false;
    for (const auto& room : spec.rooms)
      for (const auto& e : room.exits)
        if (e.door == d) used = true;
    if (!used) fail(path, "door on no exit: " + spec.doors[d].id);
  }

  spec.vocab = build_vocab(spec);
  return spec;
}

WorldSpec load_level(int level) {
  if (level < 1 || level > 7) throw ValidationError("level out of range");
  std::string path = level_data_dir() + "/level" + std::to_string(level) + ".level";
  WorldSpec spec = load_world_file(path);
  const LevelCatalogEntry& row = level_catalog()[level - 1];
  auto check = [&](const char* what, int got, int want) {
    if (got != want)
      fail(path, std::string(what) + " count " + std::to_string(got) + ", catalog says " +
                     std::to_string(want));
  };
  check("level", spec.level, row.level);
  check("room", static_cast<int>(spec.rooms.size()), row.rooms);
  check("object", static_cast<int>(spec.objects.size()), row.objects);
  check("subtask", static_cast<int>(spec.subtasks.size()), row.subtasks);
  check("action", static_cast<int>(spec.action_set.size()), row.actions);
  check("max score", spec.max_score(), row.expected_scores.back());
  return spec;
}

std::vector<std::string> walkthrough(int level) {
  std::string path = level_data_dir() + "/level" + std::to_string(level) + ".walk";
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open walkthrough: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string serialize_world(const WorldSpec& spec) {
  std::ostringstream out;
  out << "[meta]\n";
  out << "level|" << spec.level << "\n";
  out << "title|" << spec.title << "\n";
  out << "start|" << spec.rooms[spec.start_room].id << "\n";
  out << "\n[rooms]\n";
  for (const auto& r : spec.rooms) {
    out << r.id << "|" << r.name;
    for (const auto& e : r.exits) {
      out << "|";
      if (e.room < 0) out << "-";
      else {
        out << spec.rooms[e.room].id;
        if (e.door >= 0) out << ":" << spec.doors[e.door].id;
      }
    }
    out << "\n";
  }
  out << "\n[doors]\n";
  for (const auto& d : spec.doors)
    out << d.id << "|" << d.name << "|" << spec.objects[d.key_object].id << "|"
        << (d.starts_closed ? "closed" : "open") << "\n";
  out << "\n[objects]\n";
  for (const auto& o : spec.objects) {
    const char* kind = "portable";
    if (o.kind == ObjectKind::Key) kind = "key";
    else if (o.kind == ObjectKind::Food) kind = "food";
    else if (o.fixture == FixtureType::Surface) kind = "surface";
    else if (o.fixture == FixtureType::Container) kind = "container";
    std::string place =
        o.starts_in_fixture ? spec.objects[o.start_at].id : spec.rooms[o.start_at].id;
    std::vector<std::string> flags;
    if (o.sharp) flags.emplace_back("sharp");
    if (o.lock_key >= 0) flags.push_back("lock=" + spec.objects[o.lock_key].id);
    std::string flag_field;
    for (std::size_t i = 0; i < flags.size(); ++i)
      flag_field += (i ? "," : "") + flags[i];
    if (flag_field.empty()) flag_field = "-";
    out << o.id << "|" << o.name << "|" << kind << "|" << place << "|" << flag_field << "\n";
  }
  out << "\n[subtasks]\n";
  for (const auto& st : spec.subtasks) {
    out << st.id << "|" << st.points << "|";
    for (std::size_t i = 0; i < st.all_of.size(); ++i) {
      const Atom& a = st.all_of[i];
      if (i) out << ";";
      switch (a.type) {
        case Atom::ObjectAt:
          out << "at(" << spec.objects[a.a].id << "," << spec.objects[a.b].id << ")";
          break;
        case Atom::DoorOpen: out << "open(" << spec.doors[a.a].id << ")"; break;
        case Atom::RoomVisited: out << "visited(" << spec.rooms[a.a].id << ")"; break;
        case Atom::FlagSet:
          out << (a.b & kFlagPrepared ? "prepared(" : "sliced(") << spec.objects[a.a].id << ")";
          break;
      }
    }
    out << "\n";
  }
  out << "\n[actions]\n";
  for (const auto& t : spec.action_texts) out << t << "\n";
  return out.str();
}

}  // namespace saladworld
