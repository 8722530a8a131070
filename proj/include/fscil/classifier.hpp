#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include "fscil/embedding_set.hpp"
#include "fscil/linalg.hpp"
#include "fscil/numeric.hpp"
#include "fscil/rng.hpp"

namespace fscil {

// Cosine head whose per-class weight is sampled as mu + N(0,1) (.) sigma while
// training. Inference always scores against mu.
struct StochasticClassifier {
  std::vector<ClassId> class_ids;
  Matrix mu;
  Matrix sigma;

  std::size_t dim() const noexcept { return mu.cols(); }
  std::size_t num_classes() const noexcept { return class_ids.size(); }
  bool contains(ClassId id) const;
  std::size_t index_of(ClassId id) const;
  /// Throws on misaligned rows, duplicate ids, zero-norm mu rows or
  /// non-finite sigma.
  void validate() const;

  friend bool operator==(const StochasticClassifier&, const StochasticClassifier&) = default;
};

// Ablation baseline: one fixed weight vector per class.
struct DeterministicClassifier {
  std::vector<ClassId> class_ids;
  Matrix weights;

  std::size_t dim() const noexcept { return weights.cols(); }
  std::size_t num_classes() const noexcept { return class_ids.size(); }
  bool contains(ClassId id) const;
  std::size_t index_of(ClassId id) const;
  void validate() const;

  friend bool operator==(const DeterministicClassifier&, const DeterministicClassifier&) = default;
};

struct PrototypeSet {
  std::map<ClassId, DenseVector> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept { return entries.size(); }
  std::size_t dim() const noexcept { return entries.empty() ? 0 : entries.begin()->second.dim(); }

  friend bool operator==(const PrototypeSet&, const PrototypeSet&) = default;
};

/// How the prototype loss normalizes. `per_prototype` is a softmax over all
/// classes for each prototype p_c; `literal` uses the single denominator
/// sum_h exp(s cos(p_h, mu_hat_h)) over the classes that have prototypes.
enum class PrototypeLossMode { per_prototype, literal };

struct TrainingConfig {
  double lambda = 0.6;
  double logit_scale = 1.0;
  OptimizerConfig optimizer;
  std::size_t epochs = 1;
  std::size_t mc_samples_per_step = 1;
  double sigma_init = 0.1;
  bool train_sigma = true;
  PrototypeLossMode prototype_mode = PrototypeLossMode::per_prototype;

  void validate() const;
};

/// Rows of the head in the same order as its class ids.
PrototypeSet prototypes_from(const StochasticClassifier& sc);
PrototypeSet prototypes_from(const DeterministicClassifier& dc);

StochasticClassifier init_mu_from_class_means(const EmbeddingSet& embeddings,
                                              double sigma_init = 0.1);
DeterministicClassifier init_weights_from_class_means(const EmbeddingSet& embeddings);

/// Appends one row per new class (ascending id). Existing rows are copied
/// untouched. Any id already present raises LabelOverlapError.
StochasticClassifier expand(const StochasticClassifier& sc,
                            const std::map<ClassId, std::vector<double>>& new_class_means,
                            double sigma_init = 0.1);
DeterministicClassifier expand(const DeterministicClassifier& dc,
                               const std::map<ClassId, std::vector<double>>& new_class_means);

/// argmax_h cos(embedding, mu_h); ties go to the lowest row index.
ClassId predict(const DenseVector& embedding, const StochasticClassifier& sc);
ClassId predict(const DenseVector& embedding, const DeterministicClassifier& dc);

// One sampled weight matrix together with the noise that produced it.
struct WeightDraw {
  Matrix epsilon;
  Matrix mu_hat;
};

WeightDraw draw_weights(const StochasticClassifier& sc, Rng& rng);

// Loss functions with an explicit draw. The Rng overloads below draw
// cfg.mc_samples_per_step times and average.

LossGradients base_loss(const DenseVector& embedding, ClassId label,
                        const StochasticClassifier& sc, const WeightDraw& draw,
                        const TrainingConfig& cfg);
LossGradients batch_base_loss(const EmbeddingSet& batch, const StochasticClassifier& sc,
                              const WeightDraw& draw, const TrainingConfig& cfg);
LossGradients prototype_loss(const PrototypeSet& protos, const StochasticClassifier& sc,
                             const WeightDraw& draw, const TrainingConfig& cfg);
LossGradients joint_loss(const EmbeddingSet& batch, const PrototypeSet& protos,
                         const StochasticClassifier& sc, const WeightDraw& draw,
                         const TrainingConfig& cfg);

LossGradients base_loss(const DenseVector& embedding, ClassId label,
                        const StochasticClassifier& sc, Rng& rng, const TrainingConfig& cfg);
LossGradients batch_base_loss(const EmbeddingSet& batch, const StochasticClassifier& sc,
                              Rng& rng, const TrainingConfig& cfg);
LossGradients prototype_loss(const PrototypeSet& protos, const StochasticClassifier& sc, Rng& rng,
                             const TrainingConfig& cfg);
LossGradients joint_loss(const EmbeddingSet& batch, const PrototypeSet& protos,
                         const StochasticClassifier& sc, Rng& rng, const TrainingConfig& cfg);

struct WeightLossGradients {
  double loss = 0.0;
  Matrix d_weights;
};

WeightLossGradients base_loss(const DenseVector& embedding, ClassId label,
                              const DeterministicClassifier& dc, const TrainingConfig& cfg);
WeightLossGradients batch_base_loss(const EmbeddingSet& batch, const DeterministicClassifier& dc,
                                    const TrainingConfig& cfg);
WeightLossGradients prototype_loss(const PrototypeSet& protos, const DeterministicClassifier& dc,
                                   const TrainingConfig& cfg);
WeightLossGradients joint_loss(const EmbeddingSet& batch, const PrototypeSet& protos,
                               const DeterministicClassifier& dc, const TrainingConfig& cfg);

struct TrainTrace {
  std::vector<double> losses;  // one entry per optimizer step
};

/// Batches for a given epoch; called once per epoch.
using BatchSchedule = std::function<std::vector<EmbeddingSet>(std::size_t epoch)>;

/// Runs cfg.epochs passes over the schedule, one optimizer step per batch.
/// Without prototypes each step minimizes the mean base loss; with
/// prototypes it minimizes the joint loss at cfg.lambda. A non-finite loss
/// raises TrainingDivergenceError with the step index.
TrainTrace train(StochasticClassifier& sc, const BatchSchedule& schedule,
                 const PrototypeSet* protos, const TrainingConfig& cfg, Rng& rng);
TrainTrace train(DeterministicClassifier& dc, const BatchSchedule& schedule,
                 const PrototypeSet* protos, const TrainingConfig& cfg, Rng& rng);

/// Same data every epoch, one step per epoch.
BatchSchedule fixed_batch(EmbeddingSet data);

}  // namespace fscil
