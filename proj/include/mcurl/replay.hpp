#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcurl/core.hpp"
#include "mcurl/env.hpp"

namespace mcurl {

template <typename Scalar>
struct Transition {
  ObservationStack<Scalar> state;
  Vector<Scalar> action;
  ObservationStack<Scalar> next_state;
  Scalar reward = 0;
  bool done = false;
};

// T consecutive transitions' states, chronological, never straddling an
// episode boundary except at the final slot.
template <typename Scalar>
struct WindowSample {
  std::vector<ObservationStack<Scalar>> states;
  std::vector<Vector<Scalar>> actions;
  std::vector<Scalar> rewards;
  std::vector<std::uint8_t> dones;
  std::size_t start_index = 0;  // position of the window start, 0 = oldest entry
};

// Bounded FIFO store. Single writer, single reader, strict alternation.
template <typename Scalar>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  void append(Transition<Scalar> t) {
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(t));
    } else {
      entries_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
  }

  // i = 0 is the oldest retained entry.
  const Transition<Scalar>& entry(std::size_t i) const {
    if (i >= entries_.size()) throw std::out_of_range("ReplayBuffer::entry");
    return entries_[(head_ + i) % entries_.size()];
  }

  std::vector<std::size_t> sample_iid_indices(std::size_t batch, Rng& rng) const {
    if (empty()) throw std::logic_error("sample_iid: empty buffer");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.uniform_index(entries_.size());
    return idx;
  }

  // Uniform with replacement.
  std::vector<Transition<Scalar>> sample_iid(std::size_t batch, Rng& rng) const {
    std::vector<Transition<Scalar>> out;
    out.reserve(batch);
    for (std::size_t i : sample_iid_indices(batch, rng)) out.push_back(entry(i));
    return out;
  }

  // All starts s such that entries s..s+T-1 are consecutive and none of the
  // first T-1 is terminal.
  std::vector<std::size_t> valid_window_starts(std::size_t T) const {
    std::vector<std::size_t> starts;
    if (T == 0 || entries_.size() < T) return starts;
    std::size_t interior_dones = 0;  // dones within [s, s+T-2]
    for (std::size_t j = 0; j + 1 < T; ++j) interior_dones += entry(j).done ? 1 : 0;
    for (std::size_t s = 0; s + T <= entries_.size(); ++s) {
      if (interior_dones == 0) starts.push_back(s);
      if (s + T <= entries_.size() - 1) {
        interior_dones -= entry(s).done ? 1 : 0;
        interior_dones += entry(s + T - 1).done ? 1 : 0;
      }
    }
    return starts;
  }

  std::size_t sample_window_start(std::size_t T, Rng& rng) const {
    auto starts = valid_window_starts(T);
    if (starts.empty()) throw std::logic_error("sample_window: no valid window of requested length");
    return starts[rng.uniform_index(starts.size())];
  }

  WindowSample<Scalar> window_at(std::size_t start, std::size_t T) const {
    WindowSample<Scalar> w;
    w.start_index = start;
    w.states.reserve(T);
    for (std::size_t j = 0; j < T; ++j) {
      const Transition<Scalar>& t = entry(start + j);
      w.states.push_back(t.state);
      w.actions.push_back(t.action);
      w.rewards.push_back(t.reward);
      w.dones.push_back(t.done ? 1 : 0);
    }
    return w;
  }

  WindowSample<Scalar> sample_window(std::size_t T, Rng& rng) const {
    return window_at(sample_window_start(T, rng), T);
  }

  // Versioned binary snapshot for resumable runs.
  void save(std::ostream& os) const {
    write_u64(os, kMagic);
    write_u64(os, 1);  // version
    write_u64(os, sizeof(Scalar));
    write_u64(os, capacity_);
    write_u64(os, entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const Transition<Scalar>& t = entry(i);
      write_stack(os, t.state);
      write_u64(os, t.action.size());
      os.write(reinterpret_cast<const char*>(t.action.data()), t.action.size() * sizeof(Scalar));
      os.write(reinterpret_cast<const char*>(&t.reward), sizeof(Scalar));
      std::uint8_t d = t.done ? 1 : 0;
      os.write(reinterpret_cast<const char*>(&d), 1);
      write_stack(os, t.next_state);
    }
    if (!os) throw std::runtime_error("ReplayBuffer::save: write failed");
  }

  void save_file(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("ReplayBuffer::save: cannot open " + path);
    save(os);
  }

  static ReplayBuffer load(std::istream& is) {
    if (read_u64(is) != kMagic) throw std::runtime_error("ReplayBuffer::load: bad magic");
    if (read_u64(is) != 1) throw std::runtime_error("ReplayBuffer::load: unsupported version");
    if (read_u64(is) != sizeof(Scalar))
      throw std::runtime_error("ReplayBuffer::load: scalar width mismatch");
    ReplayBuffer buf(read_u64(is));
    const std::size_t n = read_u64(is);
    for (std::size_t i = 0; i < n; ++i) {
      Transition<Scalar> t;
      t.state = read_stack(is);
      t.action.resize(read_u64(is));
      is.read(reinterpret_cast<char*>(t.action.data()), t.action.size() * sizeof(Scalar));
      is.read(reinterpret_cast<char*>(&t.reward), sizeof(Scalar));
      std::uint8_t d = 0;
      is.read(reinterpret_cast<char*>(&d), 1);
      t.done = d != 0;
      t.next_state = read_stack(is);
      if (!is) throw std::runtime_error("ReplayBuffer::load: truncated stream");
      buf.append(std::move(t));
    }
    return buf;
  }

  static ReplayBuffer load_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ReplayBuffer::load: cannot open " + path);
    return load(is);
  }

 private:
  static constexpr std::uint64_t kMagic = 0x4252434Dull;  // "MCRB"

  static void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw std::runtime_error("ReplayBuffer::load: truncated stream");
    return v;
  }
  static void write_stack(std::ostream& os, const ObservationStack<Scalar>& s) {
    write_u64(os, s.frames.size());
    for (const auto& f : s.frames) {
      write_u64(os, f.height);
      write_u64(os, f.width);
      write_u64(os, f.channels);
      os.write(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size() * sizeof(Scalar));
    }
  }
  static ObservationStack<Scalar> read_stack(std::istream& is) {
    ObservationStack<Scalar> s;
    const std::size_t k = read_u64(is);
    s.frames.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      const int h = static_cast<int>(read_u64(is));
      const int w = static_cast<int>(read_u64(is));
      const int c = static_cast<int>(read_u64(is));
      Frame<Scalar> f(h, w, c);
      is.read(reinterpret_cast<char*>(f.pixels.data()), f.pixels.size() * sizeof(Scalar));
      s.frames.push_back(std::move(f));
    }
    return s;
  }

  std::size_t capacity_;
  std::vector<Transition<Scalar>> entries_;
  std::size_t head_ = 0;  // index of oldest when full
};

}  // namespace mcurl
