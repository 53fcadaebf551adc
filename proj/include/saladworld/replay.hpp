#pragma once

#include <cstddef>
#include <vector>

#include "saladworld/rng.hpp"

namespace saladworld {

struct StepRecord {
  std::vector<int> obs;       // tokens of o_t
  std::vector<int> next_obs;  // tokens of o_{t+1}
  int prev_action = -1;       // a_{t-1} (the initial command for t = 1)
  int action = -1;            // a_t
  int reward = 0;             // r_t, received for a_t
  int score = 0;              // u_t, cumulative score when a_t was chosen
  bool admissible = false;    // e_t
  bool terminal = false;      // o_{t+1} ended the game
  bool forced = false;        // forced look step
};

struct EpisodeRecord {
  std::vector<StepRecord> steps;
  bool has_positive = false;  // p flag: some reward > 0
  bool has_negative = false;  // q flag: some reward < 0
};

// Episodic ring buffer with prioritized episode pools. Sampling picks the
// positive pool with probability tau_p and the negative pool with tau_n
// (falling back to the full buffer when a pool is empty), then a uniform
// contiguous subsequence of the chosen episode.
class ReplayMemory {
 public:
  ReplayMemory(std::size_t capacity, double tau_p, double tau_n);

  void store_episode(EpisodeRecord episode);  // recomputes p/q from rewards

  struct Sample {
    const EpisodeRecord* episode = nullptr;
    std::size_t start = 0;
    std::size_t len = 0;
    int pool = 2;  // 0 = positive, 1 = negative, 2 = any (diagnostic)
  };

  // batch samples with replacement; subsequence length is min(seq_len, episode
  // length). Empty memory yields an empty batch.
  std::vector<Sample> sample_minibatch(std::size_t batch, std::size_t seq_len,
                                       Rng& rng) const;

  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t positive_count() const { return positive_.size(); }
  std::size_t negative_count() const { return negative_.size(); }
  const EpisodeRecord& episode(std::size_t slot) const { return episodes_[slot]; }

 private:
  std::size_t capacity_;
  double tau_p_;
  double tau_n_;
  std::vector<EpisodeRecord> episodes_;
  std::size_t next_slot_ = 0;        // FIFO cursor once full
  std::vector<std::size_t> positive_;  // slots, kept sorted
  std::vector<std::size_t> negative_;

  void drop_slot_from_pools(std::size_t slot);
};

}  // namespace saladworld
