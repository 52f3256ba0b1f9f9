#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mcurl/core.hpp"

namespace mcurl {

// Single rendered image, planar channel layout, values in [0,1].
template <typename Scalar>
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<Scalar> pixels;  // [c][y][x]

  Frame() = default;
  Frame(int h, int w, int c = 1)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, Scalar(0)) {}

  Scalar& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  Scalar at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  bool same_shape(const Frame& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Frame& o) const {
    return same_shape(o) && pixels == o.pixels;
  }
};

// K most recent frames, oldest first.
template <typename Scalar>
struct ObservationStack {
  std::vector<Frame<Scalar>> frames;

  int size() const { return static_cast<int>(frames.size()); }
  bool operator==(const ObservationStack& o) const { return frames == o.frames; }

  // Flattened pixel count across the stack.
  std::size_t flat_size() const {
    std::size_t n = 0;
    for (const auto& f : frames) n += f.pixels.size();
    return n;
  }
};

// Flattens a stack into one column (frames become leading channel planes).
template <typename Scalar>
void stack_to_column(const ObservationStack<Scalar>& s, Scalar* out) {
  for (const auto& f : s.frames) {
    std::copy(f.pixels.begin(), f.pixels.end(), out);
    out += f.pixels.size();
  }
}

template <typename Scalar>
Matrix<Scalar> stacks_to_matrix(const std::vector<const ObservationStack<Scalar>*>& stacks) {
  if (stacks.empty()) return Matrix<Scalar>();
  const std::size_t rows = stacks[0]->flat_size();
  Matrix<Scalar> m(rows, stacks.size());
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    if (stacks[i]->flat_size() != rows)
      throw std::invalid_argument("stacks_to_matrix: inconsistent stack shapes");
    stack_to_column(*stacks[i], m.col(i).data());
  }
  return m;
}

enum class Task { dot_chaser, sparse_goal };

inline std::string task_name(Task t) {
  return t == Task::dot_chaser ? "dot_chaser" : "sparse_goal";
}

inline Task task_from_name(const std::string& s) {
  if (s == "dot_chaser") return Task::dot_chaser;
  if (s == "sparse_goal") return Task::sparse_goal;
  throw std::invalid_argument("unknown task: " + s);
}

struct EnvConfig {
  int frame_height = 64;
  int frame_width = 64;
  int stack = 3;          // K
  int action_repeat = 4;
  int crop_height = 56;
  int crop_width = 56;
  int episode_limit = 100;  // agent-visible steps per episode
  Task task = Task::dot_chaser;

  void validate() const {
    if (frame_height <= 0 || frame_width <= 0) throw std::invalid_argument("env: frame size must be positive");
    if (stack < 1) throw std::invalid_argument("env: stack must be >= 1");
    if (action_repeat < 1) throw std::invalid_argument("env: action_repeat must be >= 1");
    if (crop_height > frame_height || crop_width > frame_width)
      throw std::invalid_argument("env: crop must not exceed frame size");
    if (crop_height <= 0 || crop_width <= 0) throw std::invalid_argument("env: crop size must be positive");
    if (episode_limit < 1) throw std::invalid_argument("env: episode_limit must be >= 1");
  }
};

// Inner single-step dynamics; the wrapper adds action repeat, frame
// stacking and the episode limit on top.
template <typename Scalar>
class TaskDynamics {
 public:
  virtual ~TaskDynamics() = default;
  virtual int action_dim() const = 0;
  virtual void reset(Rng& rng) = 0;
  // One un-repeated step; returns (reward, terminal).
  virtual std::pair<Scalar, bool> step(const Vector<Scalar>& action) = 0;
  virtual void render(Frame<Scalar>& out) const = 0;
  virtual std::unique_ptr<TaskDynamics<Scalar>> clone() const = 0;
};

namespace detail {

// Soft-edged disc, composited with max so overlapping dots stay distinct.
template <typename Scalar>
void draw_disc(Frame<Scalar>& f, double cx, double cy, double radius_px, double intensity) {
  const double px = cx * (f.width - 1);
  const double py = cy * (f.height - 1);
  const int y0 = std::max(0, static_cast<int>(std::floor(py - radius_px - 1)));
  const int y1 = std::min(f.height - 1, static_cast<int>(std::ceil(py + radius_px + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(px - radius_px - 1)));
  const int x1 = std::min(f.width - 1, static_cast<int>(std::ceil(px + radius_px + 1)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - px, y - py);
      const double v = intensity * clamp(radius_px + 0.5 - d, 0.0, 1.0);
      Scalar& p = f.at(0, y, x);
      p = std::max(p, static_cast<Scalar>(v));
    }
  }
}

}  // namespace detail

// Agent dot chases a fixed target dot; reward is the negative Euclidean
// distance between them after each inner step.
template <typename Scalar>
class DotChaser : public TaskDynamics<Scalar> {
 public:
  DotChaser(int height, int width) : height_(height), width_(width) {}

  int action_dim() const override { return 2; }

  void reset(Rng& rng) override {
    agent_[0] = rng.uniform(kLo, kHi);
    agent_[1] = rng.uniform(kLo, kHi);
    target_[0] = rng.uniform(kLo, kHi);
    target_[1] = rng.uniform(kLo, kHi);
  }

  std::pair<Scalar, bool> step(const Vector<Scalar>& action) override {
    for (int i = 0; i < 2; ++i) {
      double a = clamp(static_cast<double>(action[i]), -1.0, 1.0);
      agent_[i] = clamp(agent_[i] + kSpeed * a, kLo, kHi);
    }
    return {static_cast<Scalar>(-distance()), false};
  }

  void render(Frame<Scalar>& out) const override {
    out = Frame<Scalar>(height_, width_, 1);
    const double r = dot_radius(width_);
    detail::draw_disc(out, target_[0], target_[1], r, 0.5);
    detail::draw_disc(out, agent_[0], agent_[1], r, 1.0);
  }

  std::unique_ptr<TaskDynamics<Scalar>> clone() const override {
    return std::make_unique<DotChaser>(*this);
  }

  double distance() const { return std::hypot(agent_[0] - target_[0], agent_[1] - target_[1]); }
  const double* agent_position() const { return agent_; }
  const double* target_position() const { return target_; }

  static double dot_radius(int width) { return std::max(1.5, 0.05 * width); }
  static constexpr double kSpeed = 0.025;  // per inner step
  // dots stay inside this band so random crops cannot lose them
  static constexpr double kLo = 0.15;
  static constexpr double kHi = 0.85;

 private:
  int height_, width_;
  double agent_[2] = {0.5, 0.5};
  double target_[2] = {0.5, 0.5};
};

// Sparse variant: reward 1 while inside the goal radius, else 0.
template <typename Scalar>
class SparseGoal : public TaskDynamics<Scalar> {
 public:
  SparseGoal(int height, int width) : height_(height), width_(width) {}

  int action_dim() const override { return 2; }

  void reset(Rng& rng) override {
    agent_[0] = rng.uniform(kLo, kHi);
    agent_[1] = rng.uniform(kLo, kHi);
    goal_[0] = rng.uniform(kLo, kHi);
    goal_[1] = rng.uniform(kLo, kHi);
  }

  std::pair<Scalar, bool> step(const Vector<Scalar>& action) override {
    for (int i = 0; i < 2; ++i) {
      double a = clamp(static_cast<double>(action[i]), -1.0, 1.0);
      agent_[i] = clamp(agent_[i] + kSpeed * a, kLo, kHi);
    }
    const double d = std::hypot(agent_[0] - goal_[0], agent_[1] - goal_[1]);
    return {d <= kGoalRadius ? Scalar(1) : Scalar(0), false};
  }

  void render(Frame<Scalar>& out) const override {
    out = Frame<Scalar>(height_, width_, 1);
    detail::draw_disc(out, goal_[0], goal_[1], kGoalRadius * (width_ - 1), 0.5);
    detail::draw_disc(out, agent_[0], agent_[1], DotChaser<Scalar>::dot_radius(width_), 1.0);
  }

  std::unique_ptr<TaskDynamics<Scalar>> clone() const override {
    return std::make_unique<SparseGoal>(*this);
  }

  static constexpr double kSpeed = 0.025;
  static constexpr double kGoalRadius = 0.1;
  static constexpr double kLo = 0.15;
  static constexpr double kHi = 0.85;

 private:
  int height_, width_;
  double agent_[2] = {0.5, 0.5};
  double goal_[2] = {0.5, 0.5};
};

template <typename Scalar>
std::unique_ptr<TaskDynamics<Scalar>> make_task(const EnvConfig& cfg) {
  switch (cfg.task) {
    case Task::dot_chaser:
      return std::make_unique<DotChaser<Scalar>>(cfg.frame_height, cfg.frame_width);
    case Task::sparse_goal:
      return std::make_unique<SparseGoal<Scalar>>(cfg.frame_height, cfg.frame_width);
  }
  throw std::invalid_argument("make_task: unknown task");
}

// Pixel POMDP wrapper: frame stacking, action repeat with reward
// summation and early stop, episode limit.
template <typename Scalar>
class PixelEnv {
 public:
  struct StepResult {
    ObservationStack<Scalar> state;
    Scalar reward;
    bool done;
  };

  PixelEnv(EnvConfig cfg, std::unique_ptr<TaskDynamics<Scalar>> task)
      : cfg_(std::move(cfg)), task_(std::move(task)) {
    cfg_.validate();
  }

  explicit PixelEnv(const EnvConfig& cfg) : PixelEnv(cfg, make_task<Scalar>(cfg)) {}

  PixelEnv(const PixelEnv& o)
      : cfg_(o.cfg_), task_(o.task_->clone()), stack_(o.stack_), steps_(o.steps_),
        done_(o.done_), started_(o.started_) {}

  const EnvConfig& config() const { return cfg_; }
  int action_dim() const { return task_->action_dim(); }

  ObservationStack<Scalar> reset(Rng& rng) {
    task_->reset(rng);
    Frame<Scalar> f;
    task_->render(f);
    stack_.frames.assign(cfg_.stack, f);
    steps_ = 0;
    done_ = false;
    started_ = true;
    return stack_;
  }

  StepResult step(const Vector<Scalar>& action) {
    if (!started_) throw std::logic_error("PixelEnv::step before reset");
    if (done_) throw std::logic_error("PixelEnv::step on terminated episode");
    if (action.size() != task_->action_dim())
      throw std::invalid_argument("PixelEnv::step: wrong action dimension");
    Scalar reward = 0;
    bool terminal = false;
    for (int r = 0; r < cfg_.action_repeat; ++r) {
      auto [rew, term] = task_->step(action);
      reward += rew;
      if (term) {
        terminal = true;
        break;
      }
    }
    Frame<Scalar> f;
    task_->render(f);
    stack_.frames.erase(stack_.frames.begin());
    stack_.frames.push_back(std::move(f));
    ++steps_;
    done_ = terminal || steps_ >= cfg_.episode_limit;
    return {stack_, reward, done_};
  }

  const TaskDynamics<Scalar>& task() const { return *task_; }

 private:
  EnvConfig cfg_;
  std::unique_ptr<TaskDynamics<Scalar>> task_;
  ObservationStack<Scalar> stack_;
  int steps_ = 0;
  bool done_ = false;
  bool started_ = false;
};

// Contiguous subwindow at a uniformly random offset; pixel values untouched.
template <typename Scalar>
Frame<Scalar> crop_frame(const Frame<Scalar>& f, int out_h, int out_w, int row0, int col0) {
  if (out_h > f.height || out_w > f.width)
    throw std::invalid_argument("crop: output larger than input");
  if (row0 < 0 || col0 < 0 || row0 + out_h > f.height || col0 + out_w > f.width)
    throw std::invalid_argument("crop: offset out of range");
  Frame<Scalar> out(out_h, out_w, f.channels);
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) out.at(c, y, x) = f.at(c, row0 + y, col0 + x);
  return out;
}

template <typename Scalar>
Frame<Scalar> random_crop(const Frame<Scalar>& f, int out_h, int out_w, Rng& rng) {
  if (out_h > f.height || out_w > f.width)
    throw std::invalid_argument("random_crop: output larger than input");
  const int row0 = static_cast<int>(rng.uniform_index(f.height - out_h + 1));
  const int col0 = static_cast<int>(rng.uniform_index(f.width - out_w + 1));
  return crop_frame(f, out_h, out_w, row0, col0);
}

// One crop offset shared by all frames of the stack.
template <typename Scalar>
ObservationStack<Scalar> random_crop_stack(const ObservationStack<Scalar>& s, int out_h, int out_w,
                                           Rng& rng) {
  if (s.frames.empty()) throw std::invalid_argument("random_crop_stack: empty stack");
  const Frame<Scalar>& f0 = s.frames.front();
  if (out_h > f0.height || out_w > f0.width)
    throw std::invalid_argument("random_crop_stack: output larger than input");
  const int row0 = static_cast<int>(rng.uniform_index(f0.height - out_h + 1));
  const int col0 = static_cast<int>(rng.uniform_index(f0.width - out_w + 1));
  ObservationStack<Scalar> out;
  out.frames.reserve(s.frames.size());
  for (const auto& f : s.frames) out.frames.push_back(crop_frame(f, out_h, out_w, row0, col0));
  return out;
}

template <typename Scalar>
ObservationStack<Scalar> center_crop_stack(const ObservationStack<Scalar>& s, int out_h, int out_w) {
  if (s.frames.empty()) throw std::invalid_argument("center_crop_stack: empty stack");
  const Frame<Scalar>& f0 = s.frames.front();
  const int row0 = (f0.height - out_h) / 2;
  const int col0 = (f0.width - out_w) / 2;
  ObservationStack<Scalar> out;
  out.frames.reserve(s.frames.size());
  for (const auto& f : s.frames) out.frames.push_back(crop_frame(f, out_h, out_w, row0, col0));
  return out;
}

}  // namespace mcurl
