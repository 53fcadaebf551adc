#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>

#include "doctest.h"
#include "saladworld/replay.hpp"

using namespace saladworld;

namespace {

EpisodeRecord make_episode(int length, int reward_at, int reward) {
  EpisodeRecord ep;
  for (int t = 0; t < length; ++t) {
    StepRecord s;
    s.action = t;
    s.reward = (t == reward_at) ? reward : 0;
    ep.steps.push_back(s);
  }
  return ep;
}

}  // namespace

TEST_CASE("pool flags are recomputed from rewards") {
  ReplayMemory mem(8, 0.25, 0.25);
  EpisodeRecord lying = make_episode(3, 1, 5);
  lying.has_positive = false;  // stored flags are ignored
  lying.has_negative = true;
  mem.store_episode(lying);
  CHECK(mem.size() == 1);
  CHECK(mem.positive_count() == 1);
  CHECK(mem.negative_count() == 0);

  mem.store_episode(make_episode(3, 2, -1));
  mem.store_episode(make_episode(3, 0, 0));
  CHECK(mem.size() == 3);
  CHECK(mem.positive_count() == 1);
  CHECK(mem.negative_count() == 1);

  // empty episodes are dropped
  mem.store_episode(EpisodeRecord{});
  CHECK(mem.size() == 3);
}

TEST_CASE("fifo overwrite keeps the pools consistent") {
  ReplayMemory mem(3, 0.25, 0.25);
  mem.store_episode(make_episode(2, 0, 7));    // slot 0, positive
  mem.store_episode(make_episode(2, 0, -7));   // slot 1, negative
  mem.store_episode(make_episode(2, 0, 0));    // slot 2
  CHECK(mem.size() == 3);
  CHECK(mem.positive_count() == 1);
  CHECK(mem.negative_count() == 1);

  // wraps to slot 0, evicting the positive episode
  mem.store_episode(make_episode(4, 0, 0));
  CHECK(mem.size() == 3);
  CHECK(mem.positive_count() == 0);
  CHECK(mem.negative_count() == 1);
  CHECK(mem.episode(0).steps.size() == 4);

  // and slot 1 next, evicting the negative one
  mem.store_episode(make_episode(5, 1, 3));
  CHECK(mem.positive_count() == 1);
  CHECK(mem.negative_count() == 0);
  CHECK(mem.episode(1).steps.size() == 5);
}

TEST_CASE("sampling bounds and lengths") {
  ReplayMemory mem(4, 0.25, 0.25);
  Rng rng(5);
  CHECK(mem.sample_minibatch(8, 4, rng).empty());

  mem.store_episode(make_episode(10, 0, 1));
  mem.store_episode(make_episode(2, 0, 0));
  for (int trial = 0; trial < 2000; ++trial) {
    auto batch = mem.sample_minibatch(3, 4, rng);
    REQUIRE(batch.size() == 3);
    for (const auto& s : batch) {
      std::size_t ep_len = s.episode->steps.size();
      CHECK(s.len == std::min<std::size_t>(4, ep_len));
      CHECK(s.start + s.len <= ep_len);
    }
  }

  // seq_len one: every start position shows up
  std::array<int, 10> hits{};
  for (int trial = 0; trial < 4000; ++trial) {
    for (const auto& s : mem.sample_minibatch(2, 1, rng))
      if (s.episode->steps.size() == 10) hits[s.start]++;
  }
  for (int h : hits) CHECK(h > 0);
}

TEST_CASE("pool frequencies approach tau_p, tau_n, remainder") {
  ReplayMemory mem(16, 0.25, 0.25);
  mem.store_episode(make_episode(6, 2, 5));
  mem.store_episode(make_episode(6, 3, -5));
  mem.store_episode(make_episode(6, 0, 0));
  mem.store_episode(make_episode(6, 0, 0));

  Rng rng(11);
  const int draws = 100000;
  std::array<long, 3> counts{};
  for (int i = 0; i < draws / 10; ++i)
    for (const auto& s : mem.sample_minibatch(10, 3, rng)) counts[s.pool]++;
  double p0 = double(counts[0]) / draws;
  double p1 = double(counts[1]) / draws;
  double p2 = double(counts[2]) / draws;
  CHECK(std::abs(p0 - 0.25) < 0.02);
  CHECK(std::abs(p1 - 0.25) < 0.02);
  CHECK(std::abs(p2 - 0.50) < 0.02);

  // pool draws can return any episode in the pool, uniform over the full
  // buffer otherwise: pool 0 always yields the positive episode
  for (int i = 0; i < 200; ++i) {
    for (const auto& s : mem.sample_minibatch(4, 3, rng)) {
      if (s.pool == 0) CHECK(s.episode->has_positive);
      if (s.pool == 1) CHECK(s.episode->has_negative);
    }
  }
}

TEST_CASE("empty pools fall back to the whole buffer") {
  ReplayMemory mem(4, 0.4, 0.4);
  mem.store_episode(make_episode(3, 0, 0));  // neither positive nor negative
  Rng rng(7);
  long fallback = 0;
  for (int i = 0; i < 3000; ++i)
    for (const auto& s : mem.sample_minibatch(1, 2, rng)) {
      CHECK(s.pool == 2);  // both pools empty, so every draw is a fallback
      ++fallback;
    }
  CHECK(fallback == 3000);
}

TEST_CASE("zero pool probabilities never touch the pools") {
  ReplayMemory mem(4, 0.0, 0.0);
  mem.store_episode(make_episode(3, 0, 9));
  mem.store_episode(make_episode(3, 0, -9));
  Rng rng(13);
  for (int i = 0; i < 500; ++i)
    for (const auto& s : mem.sample_minibatch(2, 2, rng)) CHECK(s.pool == 2);
}
