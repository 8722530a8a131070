#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "fscil/linalg.hpp"

namespace fscil {

using ClassId = std::uint32_t;
using SampleId = std::uint64_t;

struct EmbeddingRecord {
  SampleId sample_id = 0;
  ClassId class_id = 0;
  DenseVector vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Labeled vectors of a single dimension with unique sample ids.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(std::size_t dim = 0) : dim_(dim) {}
  EmbeddingSet(std::size_t dim, std::vector<EmbeddingRecord> records);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }

  void add(EmbeddingRecord record);
  void add(SampleId sample_id, ClassId class_id, DenseVector vector) {
    add(EmbeddingRecord{sample_id, class_id, std::move(vector)});
  }

  bool contains_sample(SampleId id) const { return sample_ids_.count(id) != 0; }

  /// Ascending distinct class ids.
  std::vector<ClassId> class_ids() const;
  /// Record indices grouped by class, in record order.
  std::map<ClassId, std::vector<std::size_t>> indices_by_class() const;

  /// Records whose sample ids are listed, in the listed order.
  EmbeddingSet subset(std::span<const SampleId> sample_ids) const;
  EmbeddingSet filter_classes(std::span<const ClassId> classes) const;

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.dim_ == b.dim_ && a.records_ == b.records_;
  }

 private:
  std::size_t dim_;
  std::vector<EmbeddingRecord> records_;
  std::map<SampleId, std::size_t> sample_ids_;
};

/// Arithmetic mean of each class's vectors, keyed by class id.
std::map<ClassId, std::vector<double>> class_means(const EmbeddingSet& set);

}  // namespace fscil
