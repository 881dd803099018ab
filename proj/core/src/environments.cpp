#include "aptlab/environments.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aptlab {
namespace {

// Connected-component labels over free cells (4-neighborhood); walls get -1.
std::vector<int> component_labels(const GridSpec& spec) {
  const int n = spec.width * spec.height;
  std::vector<int> label(n, -1);
  int next_label = 0;
  for (int seed = 0; seed < n; ++seed) {
    if (spec.is_wall(seed) || label[seed] >= 0) continue;
    std::deque<int> frontier{seed};
    label[seed] = next_label;
    while (!frontier.empty()) {
      const int cell = frontier.front();
      frontier.pop_front();
      const int x = cell % spec.width;
      const int y = cell / spec.width;
      const int dx[4] = {0, 0, -1, 1};
      const int dy[4] = {-1, 1, 0, 0};
      for (int d = 0; d < 4; ++d) {
        const int nx = x + dx[d];
        const int ny = y + dy[d];
        if (nx < 0 || ny < 0 || nx >= spec.width || ny >= spec.height) continue;
        const int ncell = spec.cell(nx, ny);
        if (spec.is_wall(ncell) || label[ncell] >= 0) continue;
        label[ncell] = next_label;
        frontier.push_back(ncell);
      }
    }
    ++next_label;
  }
  return label;
}

}  // namespace

GridSpec GridSpec::open_room(int width, int height, int episode_length) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("open_room: dimensions must be >= 1");
  GridSpec spec;
  spec.width = width;
  spec.height = height;
  spec.wall.assign(static_cast<std::size_t>(width) * height, 0);
  spec.layout_tag = "open_room";
  spec.episode_length = episode_length;
  spec.start_mode = StartMode::uniform_free;
  return spec;
}

GridSpec GridSpec::four_rooms(int episode_length) {
  static const char* kLayout =
      "###########\n"
      "#S...#....#\n"
      "#....#....#\n"
      "#.........#\n"
      "#....#....#\n"
      "##.#####.##\n"
      "#....#....#\n"
      "#.........#\n"
      "#....#....#\n"
      "#....#...G#\n"
      "###########\n";
  GridSpec spec = parse_layout(kLayout, episode_length);
  spec.layout_tag = "four_rooms";
  return spec;
}

GridSpec GridSpec::parse_layout(std::string_view text, int episode_length) {
  std::vector<std::string> rows;
  std::string line;
  std::istringstream stream{std::string(text)};
  while (std::getline(stream, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && stream.eof()) break;
    rows.push_back(line);
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw std::invalid_argument("layout: empty grid");

  const std::size_t width = rows.front().size();
  for (const std::string& row : rows)
    if (row.size() != width)
      throw std::invalid_argument("layout: ragged rows are not allowed");
  if (width == 0) throw std::invalid_argument("layout: empty rows");

  GridSpec spec;
  spec.width = static_cast<int>(width);
  spec.height = static_cast<int>(rows.size());
  spec.wall.assign(width * rows.size(), 0);
  spec.episode_length = episode_length;

  int start_count = 0;
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const char ch = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      const int cell = spec.cell(x, y);
      switch (ch) {
        case '#':
          spec.wall[static_cast<std::size_t>(cell)] = 1;
          break;
        case '.':
          break;
        case 'S':
          ++start_count;
          spec.start_cell = cell;
          break;
        case 'G':
          spec.goal_cells.push_back(cell);
          break;
        default:
          throw std::invalid_argument(std::string("layout: unknown character '") +
                                      ch + "'");
      }
    }
  }
  if (start_count > 1)
    throw std::invalid_argument("layout: at most one start cell is allowed");
  spec.start_mode = start_count == 1 ? StartMode::fixed : StartMode::uniform_free;
  return spec;
}

GridSpec GridSpec::load_layout_file(const std::string& path,
                                    int episode_length) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("layout: cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_layout(buffer.str(), episode_length);
}

GridEnv::GridEnv(GridSpec spec, ObsMode mode, std::optional<TaskSpec> task)
    : spec_(std::move(spec)), mode_(mode), task_(std::move(task)) {
  if (spec_.width < 1 || spec_.height < 1)
    throw std::invalid_argument("GridEnv: empty grid");
  if (spec_.episode_length < 1)
    throw std::invalid_argument("GridEnv: episode_length must be >= 1");

  const int n = num_cells();
  free_index_.assign(n, -1);
  for (int cell = 0; cell < n; ++cell) {
    if (spec_.is_wall(cell)) continue;
    free_index_[cell] = static_cast<int>(free_cells_.size());
    free_cells_.push_back(cell);
  }
  if (free_cells_.empty())
    throw std::invalid_argument("GridEnv: no free cells");

  if (spec_.start_mode == StartMode::fixed) {
    if (spec_.start_cell < 0 || spec_.start_cell >= n ||
        spec_.is_wall(spec_.start_cell))
      throw std::invalid_argument("GridEnv: start cell must be a free cell");
  }

  const std::vector<int> labels = component_labels(spec_);
  if (spec_.start_mode == StartMode::fixed) {
    for (int cell : free_cells_)
      if (labels[cell] == labels[spec_.start_cell]) reachable_.push_back(cell);
  } else {
    reachable_ = free_cells_;
  }

  goal_mask_.assign(n, 0);
  if (task_) {
    if (task_->goal_cells.empty())
      throw std::invalid_argument("GridEnv: task has no goal cells");
    for (int goal : task_->goal_cells) {
      if (goal < 0 || goal >= n || spec_.is_wall(goal))
        throw std::invalid_argument("GridEnv: goal must be a free cell");
      goal_mask_[static_cast<std::size_t>(goal)] = 1;
      // Every start must be able to reach the goal. Moves are symmetric, so
      // membership in the same component is equivalent.
      if (spec_.start_mode == StartMode::fixed) {
        if (labels[goal] != labels[spec_.start_cell])
          throw std::invalid_argument("GridEnv: goal unreachable from start");
      } else {
        for (int cell : free_cells_)
          if (labels[cell] != labels[goal])
            throw std::invalid_argument(
                "GridEnv: goal unreachable from some start cell");
      }
    }
  }
}

int GridEnv::obs_dim() const {
  switch (mode_) {
    case ObsMode::one_hot:
      return static_cast<int>(free_cells_.size());
    case ObsMode::coords:
      return 2;
    case ObsMode::occupancy:
      return num_cells();
  }
  return 0;
}

std::vector<double> GridEnv::observe_cell(int cell) const {
  std::vector<double> obs;
  switch (mode_) {
    case ObsMode::one_hot: {
      obs.assign(free_cells_.size(), 0.0);
      const int idx = free_index_[cell];
      if (idx < 0) throw std::invalid_argument("observe: agent inside a wall");
      obs[static_cast<std::size_t>(idx)] = 1.0;
      break;
    }
    case ObsMode::coords: {
      const int x = cell % spec_.width;
      const int y = cell / spec_.width;
      const double dx = spec_.width > 1 ? spec_.width - 1 : 1;
      const double dy = spec_.height > 1 ? spec_.height - 1 : 1;
      obs = {static_cast<double>(x) / dx, static_cast<double>(y) / dy};
      break;
    }
    case ObsMode::occupancy: {
      obs.assign(static_cast<std::size_t>(num_cells()), 0.0);
      obs[static_cast<std::size_t>(cell)] = 1.0;
      break;
    }
  }
  return obs;
}

std::vector<double> GridEnv::observe(const EnvState& state) const {
  return observe_cell(state.cell);
}

std::pair<EnvState, std::vector<double>> GridEnv::reset(Rng& rng) const {
  EnvState state;
  if (spec_.start_mode == StartMode::fixed) {
    state.cell = spec_.start_cell;
  } else {
    state.cell = free_cells_[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(free_cells_.size())))];
  }
  state.steps = 0;
  state.done = false;
  return {state, observe(state)};
}

StepOutcome GridEnv::step(const EnvState& state, int action) const {
  if (state.done)
    throw std::logic_error("GridEnv::step: episode already finished");
  if (action < 0 || action >= num_actions())
    throw std::invalid_argument("GridEnv::step: action out of range");

  const int x = state.cell % spec_.width;
  const int y = state.cell / spec_.width;
  const int dx[4] = {0, 0, -1, 1};  // up, down, left, right
  const int dy[4] = {-1, 1, 0, 0};
  const int nx = x + dx[action];
  const int ny = y + dy[action];

  int next_cell = state.cell;  // blocked moves leave the agent in place
  if (nx >= 0 && ny >= 0 && nx < spec_.width && ny < spec_.height) {
    const int cand = spec_.cell(nx, ny);
    if (!spec_.is_wall(cand)) next_cell = cand;
  }

  StepOutcome out;
  out.state.cell = next_cell;
  out.state.steps = state.steps + 1;

  const bool at_goal = task_ && goal_mask_[static_cast<std::size_t>(next_cell)] != 0;
  if (task_) {
    out.reward = at_goal ? 1.0 : 0.0;
  }
  out.done = (at_goal && task_->terminate_on_goal) ||
             out.state.steps >= spec_.episode_length;
  out.state.done = out.done;
  out.observation = observe(out.state);
  return out;
}

std::vector<int> enumerate_states(const GridEnv& env) {
  return env.reachable_cells();
}

PointMassEnv::PointMassEnv(PointMassSpec spec) : spec_(spec) {
  if (spec_.step_size <= 0.0)
    throw std::invalid_argument("PointMassEnv: step_size must be positive");
  if (spec_.episode_length < 1)
    throw std::invalid_argument("PointMassEnv: episode_length must be >= 1");
}

std::vector<double> PointMassEnv::observe(const PointMassState& state) const {
  return {state.x, state.y};
}

std::pair<PointMassState, std::vector<double>> PointMassEnv::reset(
    Rng& rng) const {
  PointMassState state;
  state.x = rng.uniform();
  state.y = rng.uniform();
  return {state, observe(state)};
}

PointMassEnv::Outcome PointMassEnv::step(const PointMassState& state,
                                         int action) const {
  if (state.done)
    throw std::logic_error("PointMassEnv::step: episode already finished");
  if (action < 0 || action >= num_actions())
    throw std::invalid_argument("PointMassEnv::step: action out of range");

  const double d = spec_.step_size;
  const double dx[5] = {d, -d, 0.0, 0.0, 0.0};
  const double dy[5] = {0.0, 0.0, d, -d, 0.0};

  Outcome out;
  out.state.x = std::clamp(state.x + dx[action], 0.0, 1.0);
  out.state.y = std::clamp(state.y + dy[action], 0.0, 1.0);
  out.state.vx = out.state.x - state.x;
  out.state.vy = out.state.y - state.y;
  out.state.steps = state.steps + 1;
  out.done = out.state.steps >= spec_.episode_length;
  out.state.done = out.done;
  out.observation = observe(out.state);
  return out;
}

std::vector<int> enumerate_states(const PointMassEnv&) {
  throw std::invalid_argument(
      "enumerate_states: point-mass state space is not finite");
}

}  // namespace aptlab
