#pragma once

#include <cstdint>
#include <string>

#include "fscil/archive.hpp"
#include "fscil/embedding_set.hpp"

namespace fscil {

enum class CenterRule {
  random,      // unit vectors redrawn until every pairwise cosine is below 0.5
  orthogonal,  // Gram-Schmidt on Gaussian draws; needs num_classes <= dim
};

CenterRule parse_center_rule(const std::string& name);
const char* center_rule_name(CenterRule rule);

struct SyntheticSpec {
  std::size_t num_classes = 20;
  std::size_t samples_per_class = 40;
  std::size_t dim = 64;
  double intra_class_noise = 0.05;
  std::uint64_t seed = 0;
  CenterRule rule = CenterRule::random;

  // Session split. base_classes == 0 puts every class in session 0.
  std::size_t base_classes = 0;
  std::size_t n_way = 5;
  double test_fraction = 0.5;
  std::size_t max_center_attempts = 10000;

  void validate() const;
};

/// Class c gets sample ids c * samples_per_class + i. Each sample is
/// center + N(0, noise^2 I) renormalized to unit length. The first
/// round((1 - test_fraction) * samples_per_class) samples of a class go to
/// train, the rest to test.
Archive generate_synthetic(const SyntheticSpec& spec);

}  // namespace fscil
