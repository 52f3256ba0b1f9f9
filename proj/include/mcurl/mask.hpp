#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mcurl/core.hpp"
#include "mcurl/env.hpp"
#include "mcurl/replay.hpp"

namespace mcurl {

struct MaskVector {
  std::vector<std::uint8_t> bits;
  double rho_m = 0.0;

  std::size_t size() const { return bits.size(); }
  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

inline MaskVector draw_mask(std::size_t T, double rho_m, Rng& rng) {
  if (rho_m < 0.0 || rho_m > 1.0) throw std::invalid_argument("draw_mask: rho_m outside [0,1]");
  if (T < 1) throw std::invalid_argument("draw_mask: T must be >= 1");
  MaskVector m;
  m.rho_m = rho_m;
  m.bits.resize(T);
  for (auto& b : m.bits) b = rng.uniform() < rho_m ? 1 : 0;
  return m;
}

enum class CorruptBranch : std::uint8_t { zero, random, keep };

template <typename Scalar>
struct CorruptedSequence {
  std::vector<ObservationStack<Scalar>> states;
  // (position, branch) recorded only where the mask is set
  std::vector<std::pair<std::size_t, CorruptBranch>> branches;
};

// 80/10/10 corruption of the masked positions: zero stack / random state
// from the buffer / keep. Unmasked positions are copied untouched.
// Buffer states with larger frames than the sequence are random-cropped
// to match, so corruption composes with crop augmentation.
template <typename Scalar>
CorruptedSequence<Scalar> corrupt(const std::vector<ObservationStack<Scalar>>& states,
                                  const MaskVector& mask, const ReplayBuffer<Scalar>& buffer,
                                  Rng& rng) {
  if (mask.size() != states.size()) throw std::invalid_argument("corrupt: mask/sequence length mismatch");
  if (buffer.empty()) throw std::invalid_argument("corrupt: empty buffer");

  CorruptedSequence<Scalar> out;
  out.states.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const ObservationStack<Scalar>& src = states[i];
    if (!mask.bits[i]) {
      out.states.push_back(src);
      continue;
    }
    const double u = rng.uniform();
    if (u < 0.8) {
      ObservationStack<Scalar> z = src;
      for (auto& f : z.frames) std::fill(f.pixels.begin(), f.pixels.end(), Scalar(0));
      out.states.push_back(std::move(z));
      out.branches.emplace_back(i, CorruptBranch::zero);
    } else if (u < 0.9) {
      const Transition<Scalar>& t = buffer.entry(rng.uniform_index(buffer.size()));
      ObservationStack<Scalar> repl = t.state;
      const Frame<Scalar>& have = repl.frames.front();
      const Frame<Scalar>& want = src.frames.front();
      if (have.height != want.height || have.width != want.width)
        repl = random_crop_stack(repl, want.height, want.width, rng);
      if (repl.size() != src.size() || !repl.frames.front().same_shape(want))
        throw std::invalid_argument("corrupt: replacement state shape mismatch");
      out.states.push_back(std::move(repl));
      out.branches.emplace_back(i, CorruptBranch::random);
    } else {
      out.states.push_back(src);
      out.branches.emplace_back(i, CorruptBranch::keep);
    }
  }
  return out;
}

template <typename Scalar>
CorruptedSequence<Scalar> corrupt(const WindowSample<Scalar>& window, const MaskVector& mask,
                                  const ReplayBuffer<Scalar>& buffer, Rng& rng) {
  return corrupt(window.states, mask, buffer, rng);
}

}  // namespace mcurl
