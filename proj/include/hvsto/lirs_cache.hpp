#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <optional>
#include <stdexcept>
#include <unordered_map>

namespace hvsto {

/*
 * Low Inter-reference Recency Set replacement.
 *
 *   S: recency stack holding every LIR block plus HIR blocks (resident or
 *      not) more recent than the bottom LIR block. Bottom of S is always LIR.
 *   Q: resident HIR blocks in arrival order; the front is the next victim.
 *
 * A miss on a block still recorded in S means its reuse distance beats the
 * bottom LIR block, so it becomes LIR and the bottom LIR is demoted.
 */
template <typename K, typename V, typename Hash = std::hash<K>>
class LirsCache {
 public:
  struct Decision {
    bool hit = false;
    std::optional<K> evicted;
  };

  struct Stats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;
  };

  /// Capacities below two blocks disable the cache.
  explicit LirsCache(std::size_t capacity, double hir_fraction = 0.01) {
    if (hir_fraction <= 0.0 || hir_fraction >= 1.0) {
      throw std::invalid_argument("HIR fraction must lie in (0, 1)");
    }
    if (capacity >= 2) {
      capacity_ = capacity;
      hir_capacity_ = std::max<std::size_t>(
          1, static_cast<std::size_t>(static_cast<double>(capacity) * hir_fraction));
      hir_capacity_ = std::min(hir_capacity_, capacity - 1);
      lir_capacity_ = capacity - hir_capacity_;
    }
  }

  LirsCache(const LirsCache&) = delete;
  LirsCache& operator=(const LirsCache&) = delete;

  /// Hit: updates replacement state and returns the value. Miss: nullptr and
  /// no state change; the caller loads the block and calls put().
  V* get(const K& key) {
    auto it = map_.find(key);
    if (it == map_.end() || !it->second.resident) {
      ++stats_.misses;
      return nullptr;
    }
    ++stats_.hits;
    touch_resident(key, it->second);
    return &*it->second.value;
  }

  /// Loads a block after a miss and returns the victim, if any. Putting a
  /// resident key refreshes its value and counts as a reference.
  Decision put(const K& key, V value) {
    Decision d;
    if (capacity_ == 0) return d;
    auto it = map_.find(key);
    if (it != map_.end() && it->second.resident) {
      it->second.value = std::move(value);
      touch_resident(key, it->second);
      d.hit = true;
      return d;
    }
    if (resident_ >= capacity_) d.evicted = evict_front_of_q();

    it = map_.find(key);
    if (it != map_.end()) {
      // Non-resident block still in S.
      Entry& e = it->second;
      e.value = std::move(value);
      e.resident = true;
      ++resident_;
      move_to_top(key, e);
      promote(e);
      return d;
    }

    Entry& e = map_[key];
    e.value = std::move(value);
    e.resident = true;
    ++resident_;
    stack_.push_front(key);
    e.s_it = stack_.begin();
    e.in_s = true;
    if (lir_count_ < lir_capacity_) {
      e.lir = true;
      ++lir_count_;
    } else {
      queue_.push_back(key);
      e.q_it = std::prev(queue_.end());
      e.in_q = true;
    }
    return d;
  }

  /// One reference of a trace: get, and put on a miss.
  Decision access(const K& key, V value_if_miss) {
    if (get(key)) return Decision{true, std::nullopt};
    return put(key, std::move(value_if_miss));
  }

  /// Drops a block entirely, e.g. when its storage was freed.
  void erase(const K& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return;
    Entry& e = it->second;
    if (e.resident) --resident_;
    if (e.lir) --lir_count_;
    if (e.in_q) queue_.erase(e.q_it);
    if (e.in_s) stack_.erase(e.s_it);
    map_.erase(it);
    prune();
  }

  bool contains(const K& key) const {
    auto it = map_.find(key);
    return it != map_.end() && it->second.resident;
  }
  bool is_lir(const K& key) const {
    auto it = map_.find(key);
    return it != map_.end() && it->second.lir;
  }
  bool in_stack(const K& key) const {
    auto it = map_.find(key);
    return it != map_.end() && it->second.in_s;
  }
  const V* peek(const K& key) const {
    auto it = map_.find(key);
    return it != map_.end() && it->second.resident ? &*it->second.value : nullptr;
  }

  std::size_t size() const { return resident_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t lir_capacity() const { return lir_capacity_; }
  std::size_t hir_capacity() const { return hir_capacity_; }
  std::size_t lir_count() const { return lir_count_; }
  std::size_t stack_size() const { return stack_.size(); }
  std::size_t queue_size() const { return queue_.size(); }
  const Stats& stats() const { return stats_; }

  /// Bottom of S is LIR whenever S is non-empty.
  bool stack_invariant_holds() const {
    return stack_.empty() || map_.at(stack_.back()).lir;
  }

 private:
  using KeyList = std::list<K>;

  struct Entry {
    std::optional<V> value;
    bool lir = false;
    bool resident = false;
    bool in_s = false;
    bool in_q = false;
    typename KeyList::iterator s_it;
    typename KeyList::iterator q_it;
  };

  void touch_resident(const K& key, Entry& e) {
    if (e.lir) {
      const bool was_bottom = stack_.back() == key;
      move_to_top(key, e);
      if (was_bottom) prune();
      return;
    }
    if (e.in_s) {
      move_to_top(key, e);
      promote(e);
    } else {
      stack_.push_front(key);
      e.s_it = stack_.begin();
      e.in_s = true;
      queue_.erase(e.q_it);
      queue_.push_back(key);
      e.q_it = std::prev(queue_.end());
    }
  }

  void move_to_top(const K& key, Entry& e) {
    if (e.in_s) stack_.erase(e.s_it);
    stack_.push_front(key);
    e.s_it = stack_.begin();
    e.in_s = true;
  }

  // HIR block found in S: becomes LIR, the bottom LIR block is demoted to
  // the end of Q, then S is pruned.
  void promote(Entry& e) {
    if (e.in_q) {
      queue_.erase(e.q_it);
      e.in_q = false;
    }
    e.lir = true;
    ++lir_count_;
    if (lir_count_ > lir_capacity_) {
      const K bottom = stack_.back();
      Entry& b = map_.at(bottom);
      b.lir = false;
      --lir_count_;
      stack_.pop_back();
      b.in_s = false;
      queue_.push_back(bottom);
      b.q_it = std::prev(queue_.end());
      b.in_q = true;
    }
    prune();
  }

  void prune() {
    while (!stack_.empty()) {
      const K bottom = stack_.back();
      Entry& b = map_.at(bottom);
      if (b.lir) break;
      stack_.pop_back();
      b.in_s = false;
      if (!b.resident) map_.erase(bottom);
    }
  }

  std::optional<K> evict_front_of_q() {
    if (queue_.empty()) return std::nullopt;
    const K victim = queue_.front();
    queue_.pop_front();
    Entry& v = map_.at(victim);
    v.in_q = false;
    v.resident = false;
    v.value.reset();
    --resident_;
    ++stats_.evictions;
    if (!v.in_s) map_.erase(victim);
    return victim;
  }

  std::size_t capacity_ = 0;
  std::size_t lir_capacity_ = 0;
  std::size_t hir_capacity_ = 0;
  std::size_t lir_count_ = 0;
  std::size_t resident_ = 0;
  KeyList stack_;
  KeyList queue_;
  std::unordered_map<K, Entry, Hash> map_;
  Stats stats_;
};

}  // namespace hvsto
