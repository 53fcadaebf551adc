#include "saladworld/replay.hpp"

#include <algorithm>

namespace saladworld {

ReplayMemory::ReplayMemory(std::size_t capacity, double tau_p, double tau_n)
    : capacity_(capacity), tau_p_(tau_p), tau_n_(tau_n) {}

void ReplayMemory::drop_slot_from_pools(std::size_t slot) {
  auto erase = [slot](std::vector<std::size_t>& pool) {
    auto it = std::lower_bound(pool.begin(), pool.end(), slot);
    if (it != pool.end() && *it == slot) pool.erase(it);
  };
  erase(positive_);
  erase(negative_);
}

void ReplayMemory::store_episode(EpisodeRecord episode) {
  if (episode.steps.empty()) return;
  episode.has_positive = false;
  episode.has_negative = false;
  for (const auto& s : episode.steps) {
    if (s.reward > 0) episode.has_positive = true;
    if (s.reward < 0) episode.has_negative = true;
  }
  std::size_t slot;
  if (episodes_.size() < capacity_) {
    slot = episodes_.size();
    episodes_.push_back(std::move(episode));
  } else {
    slot = next_slot_;
    next_slot_ = (next_slot_ + 1) % capacity_;
    drop_slot_from_pools(slot);
    episodes_[slot] = std::move(episode);
  }
  auto insert_sorted = [slot](std::vector<std::size_t>& pool) {
    pool.insert(std::lower_bound(pool.begin(), pool.end(), slot), slot);
  };
  if (episodes_[slot].has_positive) insert_sorted(positive_);
  if (episodes_[slot].has_negative) insert_sorted(negative_);
}

std::vector<ReplayMemory::Sample> ReplayMemory::sample_minibatch(std::size_t batch,
                                                                 std::size_t seq_len,
                                                                 Rng& rng) const {
  std::vector<Sample> out;
  if (episodes_.empty() || batch == 0 || seq_len == 0) return out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double u = rng.uniform01();
    int pool = 2;
    std::size_t slot;
    if (u < tau_p_ && !positive_.empty()) {
      pool = 0;
      slot = positive_[rng.below(positive_.size())];
    } else if (u < tau_p_ + tau_n_ && !negative_.empty()) {
      pool = 1;
      slot = negative_[rng.below(negative_.size())];
    } else {
      slot = rng.below(episodes_.size());
    }
    const EpisodeRecord& ep = episodes_[slot];
    Sample s;
    s.episode = &ep;
    s.pool = pool;
    s.len = std::min(seq_len, ep.steps.size());
    s.start = rng.below(ep.steps.size() - s.len + 1);
    out.push_back(s);
  }
  return out;
}

}  // namespace saladworld
