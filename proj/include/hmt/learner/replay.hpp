#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hmt/mdp.hpp"
#include "hmt/rng.hpp"

namespace hmt {

enum class TransitionSource : std::uint8_t { Online, DemoAgent, DemoHuman };

const char* to_string(TransitionSource s);

struct Transition {
  StackedObservation obs;
  int action = 0;
  double reward = 0.0;
  StackedObservation next_obs;
  bool terminal = false;  // next_obs is ignored by the bootstrap when set
  TransitionSource source = TransitionSource::Online;
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Fixed-capacity FIFO ring of online transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000);

  void push(Transition t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Transition& at(std::size_t i) const { return items_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

/// Immutable demonstration transitions, indexed by source.
class DemoStore {
 public:
  DemoStore() = default;
  explicit DemoStore(std::vector<Transition> transitions);

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t count(TransitionSource s) const { return pool(s).size(); }
  const std::vector<std::size_t>& pool(TransitionSource s) const;
  const Transition& at(std::size_t i) const { return items_.at(i); }
  const std::vector<Transition>& transitions() const noexcept { return items_; }

  /// Subset with the given sources, in original order.
  DemoStore filter(std::span<const TransitionSource> sources) const;

 private:
  std::vector<Transition> items_;
  std::vector<std::size_t> by_source_[3];
};

enum class Variant : std::uint8_t { Plain, PH, MH };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

struct BatchComposition {
  std::size_t human = 0;
  std::size_t agent = 0;
  std::size_t online = 0;
  friend bool operator==(const BatchComposition&, const BatchComposition&) = default;
};

/// ceil(ratio * batch) demo slots (none for Plain); MH splits them evenly
/// with the odd one going to human demonstrations, PH takes agent ones only.
BatchComposition batch_composition(Variant variant, double demo_ratio, std::size_t batch_size);

/// `count` distinct indices from [0, n), uniformly (Floyd's algorithm).
std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t count, Rng& rng);

/// Draws one mini-batch. Throws TrainingError when a pool is too small.
std::vector<const Transition*> sample_batch(const ReplayBuffer& replay, const DemoStore* demos,
                                            Variant variant, double demo_ratio,
                                            std::size_t batch_size, Rng& rng);

}  // namespace hmt
