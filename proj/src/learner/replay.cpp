#include "hmt/learner/replay.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hmt/errors.hpp"

namespace hmt {

const char* to_string(TransitionSource s) {
  switch (s) {
    case TransitionSource::Online: return "online";
    case TransitionSource::DemoAgent: return "demo_agent";
    case TransitionSource::DemoHuman: return "demo_human";
  }
  return "unknown";
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::PH: return "ph";
    case Variant::MH: return "mh";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "plain" || s == "Plain") return Variant::Plain;
  if (s == "ph" || s == "PH") return Variant::PH;
  if (s == "mh" || s == "MH") return Variant::MH;
  throw ConfigError(FieldError{"variant", "expected plain, ph or mh, got '" + s + "'"});
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw UsageError("ReplayBuffer: capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

DemoStore::DemoStore(std::vector<Transition> transitions) : items_(std::move(transitions)) {
  for (std::size_t i = 0; i < items_.size(); ++i)
    by_source_[static_cast<int>(items_[i].source)].push_back(i);
}

const std::vector<std::size_t>& DemoStore::pool(TransitionSource s) const {
  return by_source_[static_cast<int>(s)];
}

DemoStore DemoStore::filter(std::span<const TransitionSource> sources) const {
  std::vector<Transition> out;
  for (const auto& t : items_)
    if (std::find(sources.begin(), sources.end(), t.source) != sources.end()) out.push_back(t);
  return DemoStore(std::move(out));
}

BatchComposition batch_composition(Variant variant, double demo_ratio, std::size_t batch_size) {
  if (!(demo_ratio >= 0.0 && demo_ratio <= 1.0))
    throw ConfigError(FieldError{"demo_ratio", "must be in [0, 1]"});
  BatchComposition c;
  std::size_t demo = 0;
  if (variant != Variant::Plain) {
    // the epsilon keeps products like 0.1 * 30 from rounding up to 4
    demo = static_cast<std::size_t>(std::ceil(demo_ratio * static_cast<double>(batch_size) - 1e-9));
    demo = std::min(demo, batch_size);
  }
  if (variant == Variant::MH) {
    c.agent = demo / 2;
    c.human = demo - c.agent;
  } else {
    c.agent = demo;
  }
  c.online = batch_size - demo;
  return c;
}

std::vector<std::size_t> sample_distinct(std::size_t n, std::size_t count, Rng& rng) {
  if (count > n) throw UsageError("sample_distinct: count exceeds population");
  std::vector<std::size_t> out;
  out.reserve(count);
  std::unordered_set<std::size_t> seen;
  seen.reserve(count * 2);
  for (std::size_t j = n - count; j < n; ++j) {
    const std::size_t t = static_cast<std::size_t>(rng.below(j + 1));
    const std::size_t pick = seen.contains(t) ? j : t;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

std::vector<const Transition*> sample_batch(const ReplayBuffer& replay, const DemoStore* demos,
                                            Variant variant, double demo_ratio,
                                            std::size_t batch_size, Rng& rng) {
  const BatchComposition c = batch_composition(variant, demo_ratio, batch_size);
  std::vector<const Transition*> out;
  out.reserve(batch_size);

  auto from_pool = [&](TransitionSource source, std::size_t k) {
    if (k == 0) return;
    if (!demos)
      throw TrainingError(std::string("sample_batch: no demonstration store for ") + to_string(source) +
                          " slots");
    const auto& pool = demos->pool(source);
    if (pool.size() < k)
      throw TrainingError(std::string("sample_batch: ") + to_string(source) + " pool has " +
                          std::to_string(pool.size()) + " transitions, batch needs " +
                          std::to_string(k));
    for (std::size_t i : sample_distinct(pool.size(), k, rng)) out.push_back(&demos->at(pool[i]));
  };
  from_pool(TransitionSource::DemoHuman, c.human);
  from_pool(TransitionSource::DemoAgent, c.agent);

  if (replay.size() < c.online)
    throw TrainingError("sample_batch: replay has " + std::to_string(replay.size()) +
                        " transitions, batch needs " + std::to_string(c.online));
  for (std::size_t i : sample_distinct(replay.size(), c.online, rng)) out.push_back(&replay.at(i));
  return out;
}

}  // namespace hmt
