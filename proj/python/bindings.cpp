#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "saladworld/harness.hpp"

namespace py = pybind11;
using namespace saladworld;

namespace {

// Environment-style wrapper pairing a loaded world with one mutable state.
class Game {
 public:
  explicit Game(std::shared_ptr<const WorldSpec> world)
      : world_(std::move(world)), state_(initial_state(*world_)) {}

  std::string reset() {
    state_ = initial_state(*world_);
    return render_look(*world_, state_);
  }

  py::dict step_text(const std::string& command) {
    return apply(step(*world_, state_, parse_command(*world_, command)));
  }

  py::dict step_id(int action_id) { return apply(step_action(*world_, state_, action_id)); }

  std::string look() const { return render_look(*world_, state_); }
  std::string inventory() const { return render_inventory(*world_, state_); }
  int score() const { return state_.score; }
  int subtasks_completed() const { return state_.subtasks_completed(); }
  bool done() const {
    return state_.subtasks_completed() == static_cast<int>(world_->subtasks.size());
  }
  std::vector<int> admissible_actions() const {
    return admissible_set_oracle(*world_, state_);
  }
  std::string key() const { return state_key(state_); }

 private:
  py::dict apply(const Transition& tr) {
    state_ = tr.next;
    py::dict out;
    out["feedback"] = tr.feedback;
    out["reward"] = tr.reward;
    out["admissible"] = tr.admissible;
    out["done"] = tr.done;
    out["score"] = state_.score;
    return out;
  }

  std::shared_ptr<const WorldSpec> world_;
  GameState state_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "saladworld text-game workbench core";

  py::class_<WorldSpec, std::shared_ptr<WorldSpec>>(m, "World")
      .def_property_readonly("level", [](const WorldSpec& w) { return w.level; })
      .def_property_readonly("title", [](const WorldSpec& w) { return w.title; })
      .def_property_readonly("room_count",
                             [](const WorldSpec& w) { return w.rooms.size(); })
      .def_property_readonly("object_count",
                             [](const WorldSpec& w) { return w.objects.size(); })
      .def_property_readonly("subtask_count",
                             [](const WorldSpec& w) { return w.subtasks.size(); })
      .def_property_readonly("action_count",
                             [](const WorldSpec& w) { return w.action_set.size(); })
      .def_property_readonly("action_texts",
                             [](const WorldSpec& w) { return w.action_texts; })
      .def_property_readonly("max_score", [](const WorldSpec& w) { return w.max_score(); })
      .def("action_index",
           [](const WorldSpec& w, const std::string& text) {
             return w.action_index(parse_command(w, text));
           })
      .def("serialize", [](const WorldSpec& w) { return serialize_world(w); });

  py::class_<Game>(m, "Game")
      .def(py::init<std::shared_ptr<WorldSpec>>())
      .def("reset", &Game::reset)
      .def("step", &Game::step_text, py::arg("command"))
      .def("step_id", &Game::step_id, py::arg("action_id"))
      .def("look", &Game::look)
      .def("inventory", &Game::inventory)
      .def("admissible_actions", &Game::admissible_actions)
      .def("state_key", &Game::key)
      .def_property_readonly("score", &Game::score)
      .def_property_readonly("subtasks_completed", &Game::subtasks_completed)
      .def_property_readonly("done", &Game::done);

  m.def(
      "load_level",
      [](int level, const std::string& levels_dir) {
        if (!levels_dir.empty()) set_level_data_dir(levels_dir);
        return std::make_shared<WorldSpec>(load_level(level));
      },
      py::arg("level"), py::arg("levels_dir") = std::string());
  m.def(
      "load_world_file",
      [](const std::string& path) { return std::make_shared<WorldSpec>(load_world_file(path)); },
      py::arg("path"));
  m.def("walkthrough", &walkthrough, py::arg("level"));
  m.def("catalog", []() {
    py::list rows;
    for (const auto& e : level_catalog()) {
      py::dict d;
      d["level"] = e.level;
      d["rooms"] = e.rooms;
      d["objects"] = e.objects;
      d["subtasks"] = e.subtasks;
      d["actions"] = e.actions;
      d["expected_scores"] = e.expected_scores;
      d["achievable_scores"] = e.achievable_scores;
      rows.append(d);
    }
    return rows;
  });

  m.def("q_learning_delta", &q_learning_delta);
  m.def("cql_delta", &cql_delta);
  m.def("cqlh_delta", &cqlh_delta);
  m.def("acqlh_delta", &acqlh_delta);

  m.def(
      "train",
      [](const std::string& config_json) {
        auto results = train(run_config_from_json(config_json));
        py::list out;
        for (const auto& r : results) {
          py::dict d;
          d["seed"] = r.seed;
          d["episodes"] = r.rows.size();
          d["final_score"] = r.rows.empty() ? 0 : r.rows.back().score;
          d["eval_mean_fraction"] = r.eval.mean_fraction;
          d["eval_mean_score"] = r.eval.mean_score;
          d["gating_fallbacks"] = r.gating_fallbacks;
          out.append(d);
        }
        return out;
      },
      py::arg("config_json"));
  m.def(
      "evaluate_checkpoint",
      [](const std::string& path, const std::string& config_json, int episodes) {
        EvalSummary s = evaluate_checkpoint(path, run_config_from_json(config_json), episodes);
        py::dict d;
        d["episodes"] = s.episodes;
        d["mean_fraction"] = s.mean_fraction;
        d["std_fraction"] = s.std_fraction;
        d["mean_score"] = s.mean_score;
        d["std_score"] = s.std_score;
        return d;
      },
      py::arg("path"), py::arg("config_json"), py::arg("episodes") = 5);
  m.def("default_run_config", []() { return run_config_to_json(RunConfig{}); });

  py::register_exception<ParseError>(m, "ParseError");
  py::register_exception<ValidationError>(m, "ValidationError");
}
