#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "fscil/embedding_set.hpp"
#include "fscil/rng.hpp"

namespace fscil {

struct Episode {
  EmbeddingSet support;
  EmbeddingSet query;
  std::vector<ClassId> way_classes;
};

/// Draws disjoint N-way K-shot episodes from one dataset. Each class keeps a
/// pool of unused samples; a class is eligible while its pool holds at least
/// 2K samples.
class EpisodePool {
 public:
  EpisodePool(const EmbeddingSet& data, std::size_t n_way, std::size_t k_shot);

  /// Next episode, or nullopt once fewer than n_way classes are eligible.
  std::optional<Episode> next(Rng& rng);

  std::size_t unused_samples() const;
  std::size_t eligible_classes() const;

 private:
  const EmbeddingSet* data_;
  std::size_t n_way_;
  std::size_t k_shot_;
  std::map<ClassId, std::vector<std::size_t>> unused_;
};

std::optional<Episode> sample_episode(const EmbeddingSet& data, std::size_t n_way,
                                      std::size_t k_shot, Rng& rng);

struct EpochEpisodes {
  std::vector<Episode> episodes;
  std::size_t unused_samples = 0;  // remainder that could not fill an episode
  std::map<ClassId, std::size_t> class_coverage;  // episodes each class appeared in
};

/// Episodes until the data cannot supply another one. No sample is used twice.
EpochEpisodes epoch_episodes(const EmbeddingSet& data, std::size_t n_way, std::size_t k_shot,
                             Rng& rng);

}  // namespace fscil
