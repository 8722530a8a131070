#include <gtest/gtest.h>

#include <set>

#include "fscil/episode.hpp"
#include "fscil/errors.hpp"
#include "support.hpp"

namespace fscil {
namespace {

std::set<SampleId> ids_of(const EmbeddingSet& s) {
  std::set<SampleId> out;
  for (const auto& r : s.records()) out.insert(r.sample_id);
  return out;
}

void expect_well_formed(const Episode& ep, std::size_t n, std::size_t k) {
  EXPECT_EQ(ep.support.size(), n * k);
  EXPECT_EQ(ep.query.size(), n * k);
  EXPECT_EQ(ep.support.class_ids(), ep.query.class_ids());
  EXPECT_EQ(ep.support.class_ids().size(), n);
  for (const auto& [id, idx] : ep.support.indices_by_class()) EXPECT_EQ(idx.size(), k);
  for (const auto& [id, idx] : ep.query.indices_by_class()) EXPECT_EQ(idx.size(), k);
  const auto s = ids_of(ep.support);
  for (const auto& r : ep.query.records()) EXPECT_EQ(s.count(r.sample_id), 0u);
}

TEST(SampleEpisode, ForcedPartition) {
  EmbeddingSet d(2);
  d.add(10, 3, DenseVector{1, 0});
  d.add(11, 3, DenseVector{0, 1});
  Rng r(0);
  const auto ep = sample_episode(d, 1, 1, r);
  ASSERT_TRUE(ep);
  std::set<SampleId> both = ids_of(ep->support);
  both.insert(ep->query[0].sample_id);
  EXPECT_EQ(both, (std::set<SampleId>{10, 11}));
  expect_well_formed(*ep, 1, 1);
}

TEST(SampleEpisode, CardinalityAndDeterminism) {
  Rng setup(1);
  const auto d = testing::random_set(8, 12, 3, setup);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    const auto x = sample_episode(d, 5, 3, a);
    const auto y = sample_episode(d, 5, 3, b);
    ASSERT_TRUE(x && y);
    expect_well_formed(*x, 5, 3);
    EXPECT_EQ(x->support, y->support);
    EXPECT_EQ(x->query, y->query);
    EXPECT_EQ(x->way_classes, y->way_classes);
  }
}

TEST(SampleEpisode, Infeasible) {
  Rng setup(1);
  const auto d = testing::random_set(3, 4, 2, setup);
  Rng r(0);
  EXPECT_FALSE(sample_episode(d, 4, 1, r));  // too few classes
  EXPECT_FALSE(sample_episode(d, 2, 3, r));  // too few samples per class
  EXPECT_THROW(sample_episode(d, 0, 1, r), ArgumentError);
  EXPECT_THROW(sample_episode(d, 1, 0, r), ArgumentError);
}

TEST(EpochEpisodes, CountingOracle) {
  Rng setup(2);
  {
    const auto d = testing::random_set(5, 10, 4, setup);
    Rng r(0);
    const auto e = epoch_episodes(d, 5, 5, r);
    EXPECT_EQ(e.episodes.size(), 1u);
    EXPECT_EQ(e.unused_samples, 0u);
  }
  {
    const auto d = testing::random_set(5, 20, 4, setup);
    Rng r(0);
    const auto e = epoch_episodes(d, 5, 5, r);
    EXPECT_EQ(e.episodes.size(), 2u);
    EXPECT_EQ(e.unused_samples, 0u);
    std::set<SampleId> seen;
    for (const auto& ep : e.episodes) {
      for (const auto* part : {&ep.support, &ep.query}) {
        for (const auto& rec : part->records()) EXPECT_TRUE(seen.insert(rec.sample_id).second);
      }
    }
    EXPECT_EQ(seen.size(), 100u);
  }
}

TEST(EpochEpisodes, RandomDatasetsNeverReuseSamples) {
  Rng setup(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + setup.uniform_index(5);
    const std::size_t k = 1 + setup.uniform_index(4);
    const std::size_t classes = n + setup.uniform_index(6);
    EmbeddingSet d(3);
    SampleId next = 0;
    std::size_t total = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t count = setup.uniform_index(30);
      for (std::size_t i = 0; i < count; ++i) {
        d.add(next++, static_cast<ClassId>(c), DenseVector(testing::random_vector(3, setup)));
        ++total;
      }
    }
    Rng r(t);
    const auto e = epoch_episodes(d, n, k, r);
    std::set<SampleId> seen;
    for (const auto& ep : e.episodes) {
      expect_well_formed(ep, n, k);
      for (const auto* part : {&ep.support, &ep.query}) {
        for (const auto& rec : part->records()) ASSERT_TRUE(seen.insert(rec.sample_id).second);
      }
    }
    EXPECT_EQ(seen.size() + e.unused_samples, total);
    std::size_t coverage = 0;
    for (const auto& [id, count] : e.class_coverage) coverage += count;
    EXPECT_EQ(coverage, e.episodes.size() * n);
  }
}

TEST(EpisodePool, StopsWhenTooFewClassesRemain) {
  Rng setup(4);
  EmbeddingSet d(2);
  SampleId next = 0;
  for (ClassId c = 0; c < 3; ++c) {
    const std::size_t count = c == 0 ? 20 : 4;
    for (std::size_t i = 0; i < count; ++i) d.add(next++, c, DenseVector(testing::random_vector(2, setup)));
  }
  EpisodePool pool(d, 2, 2);
  EXPECT_EQ(pool.eligible_classes(), 3u);
  Rng r(0);
  std::size_t episodes = 0;
  while (pool.next(r)) ++episodes;
  // classes 1 and 2 each fit one episode; class 0 needs a partner.
  EXPECT_GE(episodes, 1u);
  EXPECT_LE(episodes, 2u);
  EXPECT_LT(pool.eligible_classes(), 2u);
  EXPECT_EQ(pool.unused_samples(), 28u - 8u * episodes);
}

}  // namespace
}  // namespace fscil
