#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "mcurl/env.hpp"

using namespace mcurl;

namespace {

// Scripted inner dynamics for wrapper tests: fixed per-step rewards, an
// optional terminal step, frames that count the inner steps taken.
class ScriptedDynamics : public TaskDynamics<double> {
 public:
  ScriptedDynamics(int h, int w, std::vector<double> rewards, int terminal_at = -1)
      : h_(h), w_(w), rewards_(std::move(rewards)), terminal_at_(terminal_at) {}

  int action_dim() const override { return 1; }
  void reset(Rng&) override { inner_steps_ = 0; }

  std::pair<double, bool> step(const Vector<double>&) override {
    double r = inner_steps_ < static_cast<int>(rewards_.size()) ? rewards_[inner_steps_] : 0.0;
    ++inner_steps_;
    return {r, terminal_at_ >= 0 && inner_steps_ >= terminal_at_};
  }

  void render(Frame<double>& f) const override {
    f = Frame<double>(h_, w_, 1);
    std::fill(f.pixels.begin(), f.pixels.end(), inner_steps_ / 255.0);
  }

  std::unique_ptr<TaskDynamics<double>> clone() const override {
    return std::make_unique<ScriptedDynamics>(*this);
  }

  int inner_steps() const { return inner_steps_; }

 private:
  int h_, w_;
  std::vector<double> rewards_;
  int terminal_at_;
  int inner_steps_ = 0;
};

EnvConfig small_config() {
  EnvConfig cfg;
  cfg.frame_height = 16;
  cfg.frame_width = 16;
  cfg.crop_height = 16;
  cfg.crop_width = 16;
  cfg.stack = 3;
  cfg.action_repeat = 4;
  cfg.episode_limit = 10;
  return cfg;
}

}  // namespace

TEST(EnvReset, StackIsKCopiesOfInitialFrame) {
  EnvConfig cfg = small_config();
  PixelEnv<double> env(cfg);
  Rng rng(1);
  auto s = env.reset(rng);
  ASSERT_EQ(s.size(), 3);
  EXPECT_EQ(s.frames[0], s.frames[1]);
  EXPECT_EQ(s.frames[1], s.frames[2]);
}

TEST(EnvReset, SameSeedSamePixels) {
  EnvConfig cfg = small_config();
  PixelEnv<double> a(cfg), b(cfg);
  Rng r1(99), r2(99);
  EXPECT_EQ(a.reset(r1), b.reset(r2));
}

TEST(EnvStep, ActionRepeatSumsRewards) {
  EnvConfig cfg = small_config();
  // independent scalar oracle for the sum
  std::vector<double> inner = {1.0, 1.0, 1.0, 1.0};
  double expected = 0.0;
  for (double r : inner) expected += r;
  PixelEnv<double> env(cfg, std::make_unique<ScriptedDynamics>(16, 16, inner));
  Rng rng(1);
  env.reset(rng);
  Vector<double> a(1);
  a << 0.0;
  auto res = env.step(a);
  EXPECT_DOUBLE_EQ(res.reward, expected);
  EXPECT_FALSE(res.done);
}

TEST(EnvStep, EarlyTerminalStopsRepeats) {
  EnvConfig cfg = small_config();
  PixelEnv<double> env(cfg, std::make_unique<ScriptedDynamics>(16, 16, std::vector<double>{1.0, 2.0, 4.0, 8.0}, 2));
  Rng rng(1);
  env.reset(rng);
  Vector<double> a(1);
  a << 0.0;
  auto res = env.step(a);
  EXPECT_DOUBLE_EQ(res.reward, 3.0);  // first two inner rewards only
  EXPECT_TRUE(res.done);
}

TEST(EnvStep, RepeatOneMatchesSingleInnerStep) {
  EnvConfig cfg = small_config();
  cfg.action_repeat = 1;
  auto dyn = std::make_unique<ScriptedDynamics>(16, 16, std::vector<double>{7.0});
  auto* raw = dyn.get();
  PixelEnv<double> env(cfg, std::move(dyn));
  Rng rng(1);
  env.reset(rng);
  Vector<double> a(1);
  a << 0.0;
  auto res = env.step(a);
  EXPECT_DOUBLE_EQ(res.reward, 7.0);
  EXPECT_EQ(raw->inner_steps(), 1);
}

TEST(EnvStep, SteppingTerminatedEpisodeThrows) {
  EnvConfig cfg = small_config();
  cfg.episode_limit = 1;
  PixelEnv<double> env(cfg);
  Rng rng(1);
  Vector<double> a(2);
  a << 0.0, 0.0;
  EXPECT_THROW(env.step(a), std::logic_error);  // before reset
  env.reset(rng);
  auto res = env.step(a);
  EXPECT_TRUE(res.done);
  EXPECT_THROW(env.step(a), std::logic_error);
}

TEST(EnvStep, StackHoldsLastKRenderedFrames) {
  EnvConfig cfg = small_config();
  cfg.action_repeat = 2;
  cfg.episode_limit = 20;
  PixelEnv<double> env(cfg, std::make_unique<ScriptedDynamics>(16, 16, std::vector<double>{}));
  Rng rng(1);
  env.reset(rng);
  Vector<double> a(1);
  a << 0.0;
  ObservationStack<double> s;
  for (int n = 0; n < 5; ++n) s = env.step(a).state;
  // after n agent steps the counter frame holds 2n inner steps
  for (int k = 0; k < 3; ++k) {
    const double expect = (2 * (5 - 2 + k)) / 255.0;
    EXPECT_DOUBLE_EQ(s.frames[k].pixels[0], expect);
  }
}

TEST(EnvStep, WrongActionDimensionThrows) {
  PixelEnv<double> env(small_config());
  Rng rng(1);
  env.reset(rng);
  Vector<double> a(3);
  a.setZero();
  EXPECT_THROW(env.step(a), std::invalid_argument);
}

TEST(DotChaserTest, RewardIsNegativeDistance) {
  EnvConfig cfg = small_config();
  cfg.action_repeat = 1;
  PixelEnv<double> env(cfg);
  Rng rng(5);
  env.reset(rng);
  const auto* task = dynamic_cast<const DotChaser<double>*>(&env.task());
  ASSERT_NE(task, nullptr);
  Vector<double> a(2);
  a << 0.7, -0.3;
  auto res = env.step(a);
  const double* ap = task->agent_position();
  const double* tp = task->target_position();
  const double d = std::hypot(ap[0] - tp[0], ap[1] - tp[1]);
  EXPECT_NEAR(res.reward, -d, 1e-12);
}

TEST(DotChaserTest, PixelRangePreserved) {
  EnvConfig cfg = small_config();
  PixelEnv<double> env(cfg);
  Rng rng(3);
  auto s = env.reset(rng);
  Vector<double> a(2);
  for (int t = 0; t < 9; ++t) {
    a << rng.uniform(-1, 1), rng.uniform(-1, 1);
    s = env.step(a).state;
    for (const auto& f : s.frames)
      for (double p : f.pixels) {
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
      }
  }
}

TEST(SparseGoalTest, RewardInsideRadiusOnly) {
  EnvConfig cfg = small_config();
  cfg.task = Task::sparse_goal;
  cfg.action_repeat = 1;
  PixelEnv<double> env(cfg);
  Rng rng(11);
  env.reset(rng);
  const auto* task = dynamic_cast<const SparseGoal<double>*>(&env.task());
  ASSERT_NE(task, nullptr);
  Vector<double> a(2);
  a << 0.0, 0.0;
  auto res = env.step(a);
  EXPECT_TRUE(res.reward == 0.0 || res.reward == 1.0);
}

TEST(EnvDeterminism, FixedSeedFixedActionsBitIdentical) {
  EnvConfig cfg = small_config();
  PixelEnv<double> e1(cfg), e2(cfg);
  Rng r1(123), r2(123), act_rng(7);
  auto s1 = e1.reset(r1);
  auto s2 = e2.reset(r2);
  EXPECT_EQ(s1, s2);
  std::vector<Vector<double>> actions;
  for (int t = 0; t < 9; ++t) {
    Vector<double> a(2);
    a << act_rng.uniform(-1, 1), act_rng.uniform(-1, 1);
    actions.push_back(a);
  }
  for (const auto& a : actions) {
    auto x = e1.step(a);
    auto y = e2.step(a);
    EXPECT_EQ(x.state, y.state);
    EXPECT_EQ(x.reward, y.reward);
    EXPECT_EQ(x.done, y.done);
  }
}

TEST(CropTest, OutputShapeAndIdentity) {
  Rng rng(1);
  Frame<double> f(100, 100, 1);
  for (auto& p : f.pixels) p = rng.uniform();
  Frame<double> c = random_crop(f, 84, 84, rng);
  EXPECT_EQ(c.height, 84);
  EXPECT_EQ(c.width, 84);
  Frame<double> same = random_crop(f, 100, 100, rng);
  EXPECT_EQ(same, f);
}

TEST(CropTest, MatchesSomeIndexWindow) {
  Rng rng(2);
  Frame<double> f(12, 10, 2);
  for (auto& p : f.pixels) p = rng.uniform();
  Frame<double> c = random_crop(f, 5, 4, rng);
  // exhaustive index-window oracle
  int matches = 0;
  for (int r = 0; r + 5 <= 12; ++r)
    for (int col = 0; col + 4 <= 10; ++col)
      if (crop_frame(f, 5, 4, r, col) == c) ++matches;
  EXPECT_GE(matches, 1);
}

TEST(CropTest, OversizeThrows) {
  Rng rng(1);
  Frame<double> f(8, 8, 1);
  EXPECT_THROW(random_crop(f, 9, 8, rng), std::invalid_argument);
}

TEST(CropTest, StackSharesOneOffset) {
  Rng rng(4);
  ObservationStack<double> s;
  for (int k = 0; k < 3; ++k) {
    Frame<double> f(10, 10, 1);
    for (auto& p : f.pixels) p = rng.uniform();
    s.frames.push_back(f);
  }
  auto c = random_crop_stack(s, 6, 6, rng);
  ASSERT_EQ(c.size(), 3);
  // find the offset from frame 0, then check frames 1,2 use the same one
  int fr = -1, fc = -1;
  for (int r = 0; r + 6 <= 10 && fr < 0; ++r)
    for (int col = 0; col + 6 <= 10; ++col)
      if (crop_frame(s.frames[0], 6, 6, r, col) == c.frames[0]) {
        fr = r;
        fc = col;
        break;
      }
  ASSERT_GE(fr, 0);
  for (int k = 1; k < 3; ++k)
    EXPECT_EQ(crop_frame(s.frames[k], 6, 6, fr, fc), c.frames[k]);
}

TEST(EnvConfigTest, ValidationErrors) {
  EnvConfig cfg = small_config();
  cfg.crop_height = 20;
  EXPECT_THROW(PixelEnv<double>{cfg}, std::invalid_argument);
  cfg = small_config();
  cfg.stack = 0;
  EXPECT_THROW(PixelEnv<double>{cfg}, std::invalid_argument);
  cfg = small_config();
  cfg.action_repeat = 0;
  EXPECT_THROW(PixelEnv<double>{cfg}, std::invalid_argument);
}
