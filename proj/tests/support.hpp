#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <unistd.h>

#include "fscil/embedding_set.hpp"
#include "fscil/linalg.hpp"
#include "fscil/rng.hpp"

namespace fscil::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fscil_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Plain loops, kept apart from the library's own helpers on purpose.
inline double oracle_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

inline std::map<ClassId, std::vector<double>> oracle_means(const EmbeddingSet& set) {
  std::map<ClassId, std::vector<double>> sums;
  std::map<ClassId, double> counts;
  for (const auto& r : set.records()) {
    auto& s = sums[r.class_id];
    s.resize(set.dim(), 0.0);
    for (std::size_t j = 0; j < set.dim(); ++j) s[j] += r.vector[j];
    counts[r.class_id] += 1.0;
  }
  for (auto& [id, s] : sums) {
    for (double& v : s) v /= counts[id];
  }
  return sums;
}

// Nearest class mean by cosine, first-listed class wins ties.
inline double oracle_ncm_accuracy(const EmbeddingSet& train, const EmbeddingSet& test) {
  const auto means = oracle_means(train);
  std::size_t correct = 0;
  for (const auto& r : test.records()) {
    ClassId best = 0;
    double best_score = -2.0;
    for (const auto& [id, m] : means) {
      const double s = oracle_cosine(r.vector.values(), m);
      if (s > best_score) {
        best_score = s;
        best = id;
      }
    }
    if (best == r.class_id) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

inline std::vector<double> random_vector(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.standard_normal();
  return v;
}

// classes x per_class Gaussian vectors; sample id = class * per_class + i.
inline EmbeddingSet random_set(std::size_t classes, std::size_t per_class, std::size_t dim, Rng& rng,
                               ClassId first_class = 0) {
  EmbeddingSet set(dim);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto id = static_cast<ClassId>(first_class + c);
      set.add(static_cast<SampleId>(id) * per_class + i, id, DenseVector(random_vector(dim, rng)));
    }
  }
  return set;
}

}  // namespace fscil::testing
