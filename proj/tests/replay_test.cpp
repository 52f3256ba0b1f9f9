#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "mcurl/replay.hpp"

using namespace mcurl;

namespace {

Transition<double> make_transition(double tag, bool done = false) {
  Transition<double> t;
  Frame<double> f(2, 2, 1);
  std::fill(f.pixels.begin(), f.pixels.end(), tag);
  t.state.frames = {f};
  t.next_state.frames = {f};
  t.action = Vector<double>::Constant(2, tag);
  t.reward = tag;
  t.done = done;
  return t;
}

// brute-force re-derivation of window validity from the definition
std::vector<std::size_t> oracle_starts(const ReplayBuffer<double>& buf, std::size_t T) {
  std::vector<std::size_t> out;
  if (buf.size() < T) return out;
  for (std::size_t s = 0; s + T <= buf.size(); ++s) {
    bool ok = true;
    for (std::size_t j = 0; j + 1 < T; ++j)
      if (buf.entry(s + j).done) ok = false;
    if (ok) out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(ReplayAppend, FifoEviction) {
  ReplayBuffer<double> buf(2);
  buf.append(make_transition(1));
  buf.append(make_transition(2));
  buf.append(make_transition(3));
  ASSERT_EQ(buf.size(), 2u);
  EXPECT_DOUBLE_EQ(buf.entry(0).reward, 2.0);
  EXPECT_DOUBLE_EQ(buf.entry(1).reward, 3.0);
}

TEST(ReplayAppend, LengthTracksAppendsBelowCapacity) {
  ReplayBuffer<double> buf(10);
  for (int i = 0; i < 7; ++i) {
    buf.append(make_transition(i));
    EXPECT_EQ(buf.size(), static_cast<std::size_t>(i + 1));
  }
  EXPECT_DOUBLE_EQ(buf.entry(6).reward, 6.0);
}

TEST(ReplayAppend, RetainedEqualsLastCapacityAppends) {
  ReplayBuffer<double> buf(5);
  for (int i = 0; i < 23; ++i) buf.append(make_transition(i));
  for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(buf.entry(k).reward, 18.0 + k);
}

TEST(ReplaySampleIid, ErrorsAndEdgeCases) {
  ReplayBuffer<double> buf(4);
  Rng rng(1);
  EXPECT_THROW(buf.sample_iid(1, rng), std::logic_error);
  buf.append(make_transition(42));
  auto one = buf.sample_iid(1, rng);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].reward, 42.0);
  EXPECT_TRUE(buf.sample_iid(0, rng).empty());
}

TEST(ReplaySampleIid, FrequencyWithinThreeSigma) {
  ReplayBuffer<double> buf(4);
  for (int i = 0; i < 4; ++i) buf.append(make_transition(i));
  Rng rng(2024);
  const int draws = 10000;
  int counts[4] = {0, 0, 0, 0};
  for (std::size_t i : buf.sample_iid_indices(draws, rng)) ++counts[i];
  const double sigma = std::sqrt(draws * 0.25 * 0.75);  // ~43.3
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(counts[k], 2500.0, 3.0 * sigma);
  // chi-square goodness of fit, df=3, p > 0.001 ~ stat < 16.266
  double stat = 0;
  for (int k = 0; k < 4; ++k) stat += (counts[k] - 2500.0) * (counts[k] - 2500.0) / 2500.0;
  EXPECT_LT(stat, 16.266);
}

TEST(ReplayWindow, WholeBufferWhenExactlyT) {
  ReplayBuffer<double> buf(8);
  for (int i = 0; i < 4; ++i) buf.append(make_transition(i));
  Rng rng(1);
  auto w = buf.sample_window(4, rng);
  EXPECT_EQ(w.start_index, 0u);
  ASSERT_EQ(w.states.size(), 4u);
  for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(w.rewards[j], j);
}

TEST(ReplayWindow, IndicesAreConsecutive) {
  ReplayBuffer<double> buf(32);
  for (int i = 0; i < 20; ++i) buf.append(make_transition(i));
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto w = buf.sample_window(6, rng);
    for (int j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(w.rewards[j], w.start_index + j);
  }
}

TEST(ReplayWindow, TerminalOnlyAllowedAtLastSlot) {
  ReplayBuffer<double> buf(16);
  for (int i = 0; i < 10; ++i) buf.append(make_transition(i, i == 4));
  auto starts = buf.valid_window_starts(4);
  std::vector<std::size_t> expected = {0, 1, 5, 6};
  EXPECT_EQ(starts, expected);
  EXPECT_EQ(starts, oracle_starts(buf, 4));
}

TEST(ReplayWindow, NoValidWindowThrows) {
  ReplayBuffer<double> buf(8);
  for (int i = 0; i < 3; ++i) buf.append(make_transition(i, true));
  Rng rng(1);
  EXPECT_THROW(buf.sample_window(3, rng), std::logic_error);  // all interiors terminal
  EXPECT_THROW(buf.sample_window(5, rng), std::logic_error);  // longer than buffer
}

TEST(ReplayWindow, ValidStartsMatchOracleOnRandomBuffers) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cap = 4 + rng.uniform_index(12);
    const int n = 1 + static_cast<int>(rng.uniform_index(3 * cap));
    ReplayBuffer<double> buf(cap);
    for (int i = 0; i < n; ++i) buf.append(make_transition(i, rng.uniform() < 0.2));
    for (std::size_t T = 1; T <= std::min<std::size_t>(buf.size() + 1, 8); ++T)
      EXPECT_EQ(buf.valid_window_starts(T), oracle_starts(buf, T)) << "cap=" << cap << " n=" << n;
  }
}

TEST(ReplayWindow, UniformOverValidStarts) {
  ReplayBuffer<double> buf(16);
  for (int i = 0; i < 10; ++i) buf.append(make_transition(i, i == 4));
  Rng rng(99);
  std::map<std::size_t, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[buf.sample_window_start(4, rng)];
  ASSERT_EQ(counts.size(), 4u);
  double stat = 0;
  for (auto& [s, c] : counts) stat += (c - 2500.0) * (c - 2500.0) / 2500.0;
  EXPECT_LT(stat, 16.266);  // chi-square df=3, p > 0.001
}

TEST(ReplayWindow, InteriorNeverTerminalProperty) {
  Rng rng(31);
  ReplayBuffer<double> buf(24);
  for (int i = 0; i < 60; ++i) buf.append(make_transition(i, rng.uniform() < 0.15));
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t T = 2 + rng.uniform_index(5);
    auto starts = buf.valid_window_starts(T);
    if (starts.empty()) continue;
    auto w = buf.window_at(starts[rng.uniform_index(starts.size())], T);
    for (std::size_t j = 0; j + 1 < T; ++j) EXPECT_EQ(w.dones[j], 0);
  }
}

TEST(ReplaySnapshot, RoundTrip) {
  ReplayBuffer<double> buf(5);
  for (int i = 0; i < 8; ++i) buf.append(make_transition(i, i % 3 == 0));
  std::stringstream ss;
  buf.save(ss);
  auto loaded = ReplayBuffer<double>::load(ss);
  ASSERT_EQ(loaded.size(), buf.size());
  EXPECT_EQ(loaded.capacity(), buf.capacity());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    EXPECT_EQ(loaded.entry(i).state, buf.entry(i).state);
    EXPECT_EQ(loaded.entry(i).action, buf.entry(i).action);
    EXPECT_EQ(loaded.entry(i).reward, buf.entry(i).reward);
    EXPECT_EQ(loaded.entry(i).done, buf.entry(i).done);
  }
}

TEST(ReplayBufferTest, ZeroCapacityThrows) {
  EXPECT_THROW(ReplayBuffer<double>(0), std::invalid_argument);
}
