#include "fscil/episode.hpp"

#include <utility>

#include "fscil/errors.hpp"

namespace fscil {
namespace {

// Removes and returns a uniformly chosen element (order of the rest is not kept).
std::size_t take_random(std::vector<std::size_t>& pool, Rng& rng) {
  const std::size_t i = rng.uniform_index(pool.size());
  const std::size_t picked = pool[i];
  pool[i] = pool.back();
  pool.pop_back();
  return picked;
}

}  // namespace

EpisodePool::EpisodePool(const EmbeddingSet& data, std::size_t n_way, std::size_t k_shot)
    : data_(&data), n_way_(n_way), k_shot_(k_shot), unused_(data.indices_by_class()) {
  if (n_way == 0 || k_shot == 0) throw ArgumentError("n_way and k_shot must be >= 1");
}

std::size_t EpisodePool::unused_samples() const {
  std::size_t n = 0;
  for (const auto& [id, pool] : unused_) n += pool.size();
  return n;
}

std::size_t EpisodePool::eligible_classes() const {
  std::size_t n = 0;
  for (const auto& [id, pool] : unused_) n += pool.size() >= 2 * k_shot_ ? 1 : 0;
  return n;
}

std::optional<Episode> EpisodePool::next(Rng& rng) {
  std::vector<ClassId> eligible;
  for (const auto& [id, pool] : unused_) {
    if (pool.size() >= 2 * k_shot_) eligible.push_back(id);
  }
  if (eligible.size() < n_way_) return std::nullopt;

  Episode ep{EmbeddingSet(data_->dim()), EmbeddingSet(data_->dim()), {}};
  for (std::size_t w = 0; w < n_way_; ++w) {
    const std::size_t j = w + rng.uniform_index(eligible.size() - w);
    std::swap(eligible[w], eligible[j]);
    ep.way_classes.push_back(eligible[w]);
  }
  for (ClassId id : ep.way_classes) {
    auto& pool = unused_.at(id);
    for (std::size_t k = 0; k < k_shot_; ++k) ep.support.add((*data_)[take_random(pool, rng)]);
  }
  for (ClassId id : ep.way_classes) {
    auto& pool = unused_.at(id);
    for (std::size_t k = 0; k < k_shot_; ++k) ep.query.add((*data_)[take_random(pool, rng)]);
  }
  return ep;
}

std::optional<Episode> sample_episode(const EmbeddingSet& data, std::size_t n_way,
                                      std::size_t k_shot, Rng& rng) {
  EpisodePool pool(data, n_way, k_shot);
  return pool.next(rng);
}

EpochEpisodes epoch_episodes(const EmbeddingSet& data, std::size_t n_way, std::size_t k_shot,
                             Rng& rng) {
  EpisodePool pool(data, n_way, k_shot);
  EpochEpisodes out;
  for (ClassId id : data.class_ids()) out.class_coverage[id] = 0;
  while (auto ep = pool.next(rng)) {
    for (ClassId id : ep->way_classes) ++out.class_coverage[id];
    out.episodes.push_back(std::move(*ep));
  }
  out.unused_samples = pool.unused_samples();
  return out;
}

}  // namespace fscil
