#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aptlab/rng.hpp"

namespace aptlab {

enum class ObsMode { one_hot, coords, occupancy };
enum class StartMode { fixed, uniform_free };

// Sparse goal task: reward 1 on reaching a goal cell, 0 otherwise; episodes
// end at the goal when terminate_on_goal is set.
struct TaskSpec {
  std::vector<int> goal_cells;
  bool terminate_on_goal = true;
};

// Grid layout. Cells are indexed cell = y * width + x with row 0 at the top;
// movement off the grid or into a wall cell leaves the agent in place.
struct GridSpec {
  int width = 0, height = 0;
  std::vector<std::uint8_t> wall;  // 1 = blocked cell
  std::string layout_tag = "custom";
  int episode_length = 100;
  StartMode start_mode = StartMode::uniform_free;
  int start_cell = -1;
  std::vector<int> goal_cells;  // 'G' markers; default sparse task

  int cell(int x, int y) const { return y * width + x; }
  bool is_wall(int c) const { return wall[static_cast<std::size_t>(c)] != 0; }
  TaskSpec default_task() const { return TaskSpec{goal_cells, true}; }

  static GridSpec open_room(int width, int height, int episode_length = 100);
  // 11x11 four-rooms: border walls, two interior wall lines, four doorways,
  // start in the top-left corner and goal in the bottom-right.
  static GridSpec four_rooms(int episode_length = 100);
  static GridSpec parse_layout(std::string_view text, int episode_length = 100);
  static GridSpec load_layout_file(const std::string& path,
                                   int episode_length = 100);
};

struct EnvState {
  int cell = 0;
  int steps = 0;
  bool done = false;
};

struct StepOutcome {
  EnvState state;
  std::vector<double> observation;
  std::optional<double> reward;  // absent in reward-free mode
  bool done = false;
};

// Deterministic episodic grid world. The environment object is immutable;
// episode state travels through reset/step explicitly, so independent
// rollouts can share one instance.
class GridEnv {
 public:
  // Without a task the environment is reward-free: step() reports no reward
  // and episodes end only at the time limit.
  GridEnv(GridSpec spec, ObsMode mode,
          std::optional<TaskSpec> task = std::nullopt);

  int num_actions() const { return 4; }  // up, down, left, right
  int obs_dim() const;
  ObsMode obs_mode() const { return mode_; }
  const GridSpec& spec() const { return spec_; }
  const std::optional<TaskSpec>& task() const { return task_; }
  bool reward_free() const { return !task_.has_value(); }

  std::pair<EnvState, std::vector<double>> reset(Rng& rng) const;
  StepOutcome step(const EnvState& state, int action) const;
  std::vector<double> observe(const EnvState& state) const;
  std::vector<double> observe_cell(int cell) const;

  int num_cells() const { return spec_.width * spec_.height; }
  const std::vector<int>& free_cells() const { return free_cells_; }
  // Position of a cell among the free cells (one-hot index), -1 for walls.
  int free_index(int cell) const { return free_index_[cell]; }
  // Reachable free cells from the start distribution, ascending.
  const std::vector<int>& reachable_cells() const { return reachable_; }

 private:
  GridSpec spec_;
  ObsMode mode_;
  std::optional<TaskSpec> task_;
  std::vector<int> free_cells_;
  std::vector<int> free_index_;
  std::vector<int> reachable_;
  std::vector<std::uint8_t> goal_mask_;
};

// Complete, duplicate-free list of reachable states (grid environments only).
std::vector<int> enumerate_states(const GridEnv& env);

struct PointMassSpec {
  double step_size = 0.05;
  int episode_length = 100;
};

struct PointMassState {
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;  // displacement of the last step
  int steps = 0;
  bool done = false;
};

// Continuous-observation testbed on the unit square with five discrete
// actions; reward-free.
class PointMassEnv {
 public:
  explicit PointMassEnv(PointMassSpec spec = {});

  int num_actions() const { return 5; }  // +x, -x, +y, -y, no-op
  int obs_dim() const { return 2; }
  const PointMassSpec& spec() const { return spec_; }

  std::pair<PointMassState, std::vector<double>> reset(Rng& rng) const;
  struct Outcome {
    PointMassState state;
    std::vector<double> observation;
    std::optional<double> reward;
    bool done = false;
  };
  Outcome step(const PointMassState& state, int action) const;
  std::vector<double> observe(const PointMassState& state) const;

 private:
  PointMassSpec spec_;
};

// The point mass has uncountable state; enumeration is a grid-only notion.
std::vector<int> enumerate_states(const PointMassEnv& env);

}  // namespace aptlab
