#include "fscil/embedding_set.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "fscil/errors.hpp"

namespace fscil {

EmbeddingSet::EmbeddingSet(std::size_t dim, std::vector<EmbeddingRecord> records) : dim_(dim) {
  records_.reserve(records.size());
  for (auto& r : records) add(std::move(r));
}

void EmbeddingSet::add(EmbeddingRecord record) {
  if (dim_ == 0) dim_ = record.vector.dim();
  if (record.vector.dim() != dim_) {
    throw ShapeError("sample " + std::to_string(record.sample_id) + " has dim " +
                     std::to_string(record.vector.dim()) + ", set dim is " + std::to_string(dim_));
  }
  if (!sample_ids_.emplace(record.sample_id, records_.size()).second) {
    throw ArgumentError("duplicate sample id " + std::to_string(record.sample_id));
  }
  records_.push_back(std::move(record));
}

std::vector<ClassId> EmbeddingSet::class_ids() const {
  std::set<ClassId> ids;
  for (const auto& r : records_) ids.insert(r.class_id);
  return {ids.begin(), ids.end()};
}

std::map<ClassId, std::vector<std::size_t>> EmbeddingSet::indices_by_class() const {
  std::map<ClassId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records_.size(); ++i) groups[records_[i].class_id].push_back(i);
  return groups;
}

EmbeddingSet EmbeddingSet::subset(std::span<const SampleId> sample_ids) const {
  EmbeddingSet out(dim_);
  for (SampleId id : sample_ids) {
    auto it = sample_ids_.find(id);
    if (it == sample_ids_.end()) throw DataError("unknown sample id " + std::to_string(id));
    out.add(records_[it->second]);
  }
  return out;
}

EmbeddingSet EmbeddingSet::filter_classes(std::span<const ClassId> classes) const {
  EmbeddingSet out(dim_);
  for (const auto& r : records_) {
    if (std::find(classes.begin(), classes.end(), r.class_id) != classes.end()) out.add(r);
  }
  return out;
}

std::map<ClassId, std::vector<double>> class_means(const EmbeddingSet& set) {
  std::map<ClassId, std::vector<double>> sums;
  std::map<ClassId, std::size_t> counts;
  for (const auto& r : set.records()) {
    auto& acc = sums[r.class_id];
    if (acc.empty()) acc.assign(set.dim(), 0.0);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += r.vector[j];
    ++counts[r.class_id];
  }
  for (auto& [id, acc] : sums) {
    const double n = static_cast<double>(counts[id]);
    for (double& v : acc) v /= n;
  }
  return sums;
}

}  // namespace fscil
