#pragma once

// Straight transcription of the LIRS reference procedure, written without
// the library's data structures: S and Q are plain vectors searched
// linearly, block state lives in one map. Slow, but easy to audit.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace hvsto::testing {

class ReferenceLirs {
 public:
  struct Step {
    bool hit = false;
    std::optional<std::uint64_t> evicted;
    bool operator==(const Step&) const = default;
  };

  ReferenceLirs(std::size_t lir_size, std::size_t hir_size)
      : lir_size_(lir_size), hir_size_(hir_size) {}

  Step reference(std::uint64_t x) {
    Step step;
    auto it = state_.find(x);
    const bool known = it != state_.end();
    if (known && it->second == State::kLir) {
      step.hit = true;
      const bool bottom = s_.front() == x;
      to_top(x);
      if (bottom) prune();
      return step;
    }
    if (known && it->second == State::kHirResident) {
      step.hit = true;
      if (in_s(x)) {
        to_top(x);
        erase_q(x);
        state_[x] = State::kLir;
        demote_bottom();
        prune();
      } else {
        to_top(x);
        erase_q(x);
        q_.push_back(x);
      }
      return step;
    }

    // Miss.
    if (resident_ == lir_size_ + hir_size_) {
      const auto victim = q_.front();
      q_.erase(q_.begin());
      --resident_;
      step.evicted = victim;
      if (in_s(victim)) {
        state_[victim] = State::kHirGhost;
      } else {
        state_.erase(victim);
      }
    }
    ++resident_;
    if (lir_count() < lir_size_) {
      state_[x] = State::kLir;
      to_top(x);
      return step;
    }
    if (in_s(x)) {
      state_[x] = State::kLir;
      to_top(x);
      demote_bottom();
      prune();
    } else {
      state_[x] = State::kHirResident;
      to_top(x);
      q_.push_back(x);
    }
    return step;
  }

  bool is_lir(std::uint64_t x) const {
    auto it = state_.find(x);
    return it != state_.end() && it->second == State::kLir;
  }
  bool resident(std::uint64_t x) const {
    auto it = state_.find(x);
    return it != state_.end() && it->second != State::kHirGhost;
  }

 private:
  enum class State { kLir, kHirResident, kHirGhost };

  // s_ is stored bottom first: s_.front() is the bottom, s_.back() the top.
  bool in_s(std::uint64_t x) const { return std::find(s_.begin(), s_.end(), x) != s_.end(); }
  void to_top(std::uint64_t x) {
    s_.erase(std::remove(s_.begin(), s_.end(), x), s_.end());
    s_.push_back(x);
  }
  void erase_q(std::uint64_t x) { q_.erase(std::remove(q_.begin(), q_.end(), x), q_.end()); }
  std::size_t lir_count() const {
    return static_cast<std::size_t>(std::count_if(
        state_.begin(), state_.end(), [](const auto& kv) { return kv.second == State::kLir; }));
  }
  void demote_bottom() {
    const auto b = s_.front();
    s_.erase(s_.begin());
    state_[b] = State::kHirResident;
    q_.push_back(b);
  }
  void prune() {
    while (!s_.empty() && state_.at(s_.front()) != State::kLir) {
      const auto b = s_.front();
      s_.erase(s_.begin());
      if (state_.at(b) == State::kHirGhost) state_.erase(b);
    }
  }

  std::size_t lir_size_;
  std::size_t hir_size_;
  std::size_t resident_ = 0;
  std::vector<std::uint64_t> s_;
  std::vector<std::uint64_t> q_;
  std::map<std::uint64_t, State> state_;
};

/// Synthetic reference traces over block numbers.
std::vector<std::uint64_t> loop_trace(std::size_t length, std::uint64_t loop_blocks);
std::vector<std::uint64_t> scan_trace(std::size_t length, std::uint64_t hot_blocks,
                                      std::uint64_t seed);
std::vector<std::uint64_t> mixed_trace(std::size_t length, std::uint64_t seed);

/// Replays `trace` through LirsCache and the reference; returns the index of
/// the first diverging reference, or nullopt when all decisions match.
std::optional<std::size_t> first_lirs_divergence(const std::vector<std::uint64_t>& trace,
                                                 std::size_t capacity, double hir_fraction);

}  // namespace hvsto::testing
