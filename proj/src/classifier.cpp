#include "fscil/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fscil/errors.hpp"

namespace fscil {
namespace {

std::size_t find_index(const std::vector<ClassId>& ids, ClassId id) {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ArgumentError("class " + std::to_string(id) + " is not in the head");
  return static_cast<std::size_t>(it - ids.begin());
}

void validate_rows(const std::vector<ClassId>& ids, const Matrix& rows, const char* what) {
  if (rows.rows() != ids.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(rows.rows()) + " rows for " +
                     std::to_string(ids.size()) + " classes");
  }
  std::set<ClassId> seen;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) {
      throw ArgumentError(std::string(what) + ": duplicate class " + std::to_string(ids[i]));
    }
    if (!all_finite(rows.row(i))) {
      throw ArgumentError(std::string(what) + ": row " + std::to_string(i) + " is not finite");
    }
    if (!(l2_norm(rows.row(i)) > 0.0)) {
      throw DegenerateInputError(std::string(what) + ": class " + std::to_string(ids[i]) +
                                 " has a zero-norm row");
    }
  }
}

struct MeanRows {
  std::vector<ClassId> ids;
  Matrix rows;
};

MeanRows mean_rows(const EmbeddingSet& embeddings) {
  if (embeddings.empty()) throw ArgumentError("cannot initialize a head from no embeddings");
  MeanRows out;
  for (const auto& [id, mean] : class_means(embeddings)) {
    if (!(l2_norm(mean) > 0.0)) {
      throw DegenerateInputError("class " + std::to_string(id) + " has a zero-norm mean");
    }
    out.ids.push_back(id);
    out.rows.append_row(mean);
  }
  return out;
}

void append_new_rows(std::vector<ClassId>& ids, Matrix& rows,
                     const std::map<ClassId, std::vector<double>>& new_class_means) {
  for (const auto& [id, mean] : new_class_means) {
    if (std::find(ids.begin(), ids.end(), id) != ids.end()) {
      throw LabelOverlapError("class " + std::to_string(id) + " is already in the head");
    }
    if (mean.size() != rows.cols()) {
      throw ShapeError("new class " + std::to_string(id) + " mean has dim " +
                       std::to_string(mean.size()) + ", head dim is " + std::to_string(rows.cols()));
    }
    if (!all_finite(mean)) throw ArgumentError("new class mean is not finite");
    if (!(l2_norm(mean) > 0.0)) {
      throw DegenerateInputError("new class " + std::to_string(id) + " has a zero-norm mean");
    }
  }
  for (const auto& [id, mean] : new_class_means) {
    ids.push_back(id);
    rows.append_row(mean);
  }
}

ClassId argmax_cosine(const DenseVector& embedding, const std::vector<ClassId>& ids,
                      const Matrix& rows) {
  if (embedding.dim() != rows.cols()) {
    throw ShapeError("predict: embedding dim " + std::to_string(embedding.dim()) +
                     " vs head dim " + std::to_string(rows.cols()));
  }
  if (ids.empty()) throw ArgumentError("predict on an empty head");
  std::size_t best = 0;
  double best_score = cosine_similarity(embedding.values(), rows.row(0));
  for (std::size_t h = 1; h < rows.rows(); ++h) {
    const double score = cosine_similarity(embedding.values(), rows.row(h));
    if (score > best_score) {
      best_score = score;
      best = h;
    }
  }
  return ids[best];
}

PrototypeSet rows_to_prototypes(const std::vector<ClassId>& ids, const Matrix& rows) {
  PrototypeSet protos;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto r = rows.row(i);
    protos.entries.emplace(ids[i], DenseVector(std::vector<double>(r.begin(), r.end())));
  }
  return protos;
}

// Prototype loss against an arbitrary weight matrix. Returns the loss and
// d loss / d weights.
CosineCeResult prototype_loss_on(const PrototypeSet& protos, const std::vector<ClassId>& ids,
                                 const Matrix& weights, const TrainingConfig& cfg) {
  if (protos.empty()) throw ArgumentError("prototype loss needs at least one prototype");
  std::vector<std::size_t> rows;
  for (const auto& [id, p] : protos.entries) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
      throw ArgumentError("prototype for class " + std::to_string(id) + " has no head row");
    }
    if (p.dim() != weights.cols()) throw ShapeError("prototype dim does not match head dim");
    rows.push_back(find_index(ids, id));
  }
  const double count = static_cast<double>(protos.size());
  CosineCeResult out{0.0, Matrix(weights.rows(), weights.cols())};

  if (cfg.prototype_mode == PrototypeLossMode::per_prototype) {
    std::size_t k = 0;
    for (const auto& [id, p] : protos.entries) {
      auto ce = cosine_ce(p.values(), rows[k++], weights, cfg.logit_scale);
      out.loss += ce.loss / count;
      ce.d_weights *= 1.0 / count;
      out.d_weights += ce.d_weights;
    }
    return out;
  }

  // literal: z_c = s cos(p_c, w_c); loss = mean_c [logsumexp(z) - z_c].
  std::vector<double> logits;
  std::vector<const DenseVector*> members;
  for (const auto& [id, p] : protos.entries) members.push_back(&p);
  for (std::size_t k = 0; k < members.size(); ++k) {
    logits.push_back(cfg.logit_scale * cosine_similarity(members[k]->values(), weights.row(rows[k])));
  }
  for (std::size_t k = 0; k < members.size(); ++k) out.loss += log_softmax_ce(logits, k) / count;
  const auto q = softmax(logits);
  for (std::size_t k = 0; k < members.size(); ++k) {
    const double upstream = cfg.logit_scale * (q[k] - 1.0 / count);
    accumulate_cosine_grad(members[k]->values(), weights.row(rows[k]), upstream,
                           out.d_weights.row(rows[k]));
  }
  return out;
}

CosineCeResult batch_loss_on(const EmbeddingSet& batch, const std::vector<ClassId>& ids,
                             const Matrix& weights, const TrainingConfig& cfg) {
  if (batch.empty()) throw ArgumentError("base loss over an empty batch");
  const double count = static_cast<double>(batch.size());
  CosineCeResult out{0.0, Matrix(weights.rows(), weights.cols())};
  for (const auto& r : batch.records()) {
    auto ce = cosine_ce(r.vector.values(), find_index(ids, r.class_id), weights, cfg.logit_scale);
    out.loss += ce.loss / count;
    ce.d_weights *= 1.0 / count;
    out.d_weights += ce.d_weights;
  }
  return out;
}

CosineCeResult joint_loss_on(const EmbeddingSet& batch, const PrototypeSet& protos,
                             const std::vector<ClassId>& ids, const Matrix& weights,
                             const TrainingConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw ArgumentError("lambda must lie in [0, 1]");
  auto base = batch_loss_on(batch, ids, weights, cfg);
  auto proto = prototype_loss_on(protos, ids, weights, cfg);
  base.loss = (1.0 - cfg.lambda) * base.loss + cfg.lambda * proto.loss;
  base.d_weights *= 1.0 - cfg.lambda;
  proto.d_weights *= cfg.lambda;
  base.d_weights += proto.d_weights;
  return base;
}

LossGradients through_draw(CosineCeResult ce, const WeightDraw& draw) {
  return {ce.loss, chain_to_mu_sigma(ce.d_weights, draw.epsilon)};
}

void check_draw(const StochasticClassifier& sc, const WeightDraw& draw) {
  require_same_shape(sc.mu, draw.mu_hat, "weight draw");
  require_same_shape(sc.mu, draw.epsilon, "weight draw noise");
}

template <class Eval>
LossGradients monte_carlo(const StochasticClassifier& sc, Rng& rng, const TrainingConfig& cfg,
                          Eval&& eval) {
  if (cfg.mc_samples_per_step == 0) throw ArgumentError("mc_samples_per_step must be >= 1");
  if (cfg.mc_samples_per_step == 1) return eval(draw_weights(sc, rng));
  const double n = static_cast<double>(cfg.mc_samples_per_step);
  LossGradients acc{0.0, {Matrix(sc.mu.rows(), sc.mu.cols()), Matrix(sc.mu.rows(), sc.mu.cols())}};
  for (std::size_t s = 0; s < cfg.mc_samples_per_step; ++s) {
    auto one = eval(draw_weights(sc, rng));
    acc.loss += one.loss / n;
    one.grads.d_mu *= 1.0 / n;
    one.grads.d_sigma *= 1.0 / n;
    acc.grads.d_mu += one.grads.d_mu;
    acc.grads.d_sigma += one.grads.d_sigma;
  }
  return acc;
}

// Adapters so one training loop serves both heads.
struct StochasticHead {
  StochasticClassifier& sc;

  LossGradients step_loss(const EmbeddingSet& batch, const PrototypeSet* protos,
                          const TrainingConfig& cfg, Rng& rng) const {
    return protos ? joint_loss(batch, *protos, sc, rng, cfg) : batch_base_loss(batch, sc, rng, cfg);
  }
  bool parameters_finite() const { return all_finite(sc.mu.flat()) && all_finite(sc.sigma.flat()); }
};

struct DeterministicHead {
  DeterministicClassifier& dc;

  LossGradients step_loss(const EmbeddingSet& batch, const PrototypeSet* protos,
                          const TrainingConfig& cfg, Rng&) const {
    auto r = protos ? joint_loss(batch, *protos, dc, cfg) : batch_base_loss(batch, dc, cfg);
    return {r.loss, {std::move(r.d_weights), Matrix()}};
  }
  bool parameters_finite() const { return all_finite(dc.weights.flat()); }
};

void apply_step(StochasticHead& head, const GradientPair& g, OptimizerState& mu_state,
                OptimizerState& sigma_state, const TrainingConfig& cfg) {
  optimizer_step(head.sc.mu, g.d_mu, mu_state, cfg.optimizer);
  if (cfg.train_sigma) optimizer_step(head.sc.sigma, g.d_sigma, sigma_state, cfg.optimizer);
}

void apply_step(DeterministicHead& head, const GradientPair& g, OptimizerState& w_state,
                OptimizerState&, const TrainingConfig& cfg) {
  optimizer_step(head.dc.weights, g.d_mu, w_state, cfg.optimizer);
}

template <class Head>
TrainTrace train_loop(Head head, const BatchSchedule& schedule, const PrototypeSet* protos,
                      const TrainingConfig& cfg, Rng& rng) {
  cfg.validate();
  TrainTrace trace;
  OptimizerState first;
  OptimizerState second;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : schedule(epoch)) {
      const std::size_t step = trace.losses.size();
      try {
        auto lg = head.step_loss(batch, protos, cfg, rng);
        if (!std::isfinite(lg.loss)) throw TrainingDivergenceError("non-finite loss");
        apply_step(head, lg.grads, first, second, cfg);
        if (!head.parameters_finite()) throw TrainingDivergenceError("parameters overflowed");
        trace.losses.push_back(lg.loss);
      } catch (const TrainingDivergenceError& e) {
        throw TrainingDivergenceError("step " + std::to_string(step) + ": " + e.what());
      }
    }
  }
  return trace;
}

}  // namespace

bool StochasticClassifier::contains(ClassId id) const {
  return std::find(class_ids.begin(), class_ids.end(), id) != class_ids.end();
}

std::size_t StochasticClassifier::index_of(ClassId id) const { return find_index(class_ids, id); }

void StochasticClassifier::validate() const {
  validate_rows(class_ids, mu, "stochastic classifier mu");
  require_same_shape(mu, sigma, "stochastic classifier sigma");
  if (!all_finite(sigma.flat())) throw ArgumentError("stochastic classifier sigma is not finite");
}

bool DeterministicClassifier::contains(ClassId id) const {
  return std::find(class_ids.begin(), class_ids.end(), id) != class_ids.end();
}

std::size_t DeterministicClassifier::index_of(ClassId id) const {
  return find_index(class_ids, id);
}

void DeterministicClassifier::validate() const {
  validate_rows(class_ids, weights, "deterministic classifier");
}

void TrainingConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("lambda must lie in [0, 1]");
  if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) {
    throw ArgumentError("logit_scale must be positive and finite");
  }
  if (mc_samples_per_step == 0) throw ArgumentError("mc_samples_per_step must be >= 1");
  if (!std::isfinite(sigma_init)) throw ArgumentError("sigma_init must be finite");
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ArgumentError("learning rate must be finite and non-negative");
  }
}

PrototypeSet prototypes_from(const StochasticClassifier& sc) {
  return rows_to_prototypes(sc.class_ids, sc.mu);
}

PrototypeSet prototypes_from(const DeterministicClassifier& dc) {
  return rows_to_prototypes(dc.class_ids, dc.weights);
}

StochasticClassifier init_mu_from_class_means(const EmbeddingSet& embeddings, double sigma_init) {
  auto means = mean_rows(embeddings);
  StochasticClassifier sc;
  sc.class_ids = std::move(means.ids);
  sc.sigma = Matrix(means.rows.rows(), means.rows.cols(), sigma_init);
  sc.mu = std::move(means.rows);
  return sc;
}

DeterministicClassifier init_weights_from_class_means(const EmbeddingSet& embeddings) {
  auto means = mean_rows(embeddings);
  return {std::move(means.ids), std::move(means.rows)};
}

StochasticClassifier expand(const StochasticClassifier& sc,
                            const std::map<ClassId, std::vector<double>>& new_class_means,
                            double sigma_init) {
  StochasticClassifier out = sc;
  append_new_rows(out.class_ids, out.mu, new_class_means);
  const std::vector<double> fill(out.mu.cols(), sigma_init);
  while (out.sigma.rows() < out.mu.rows()) out.sigma.append_row(fill);
  return out;
}

DeterministicClassifier expand(const DeterministicClassifier& dc,
                               const std::map<ClassId, std::vector<double>>& new_class_means) {
  DeterministicClassifier out = dc;
  append_new_rows(out.class_ids, out.weights, new_class_means);
  return out;
}

ClassId predict(const DenseVector& embedding, const StochasticClassifier& sc) {
  return argmax_cosine(embedding, sc.class_ids, sc.mu);
}

ClassId predict(const DenseVector& embedding, const DeterministicClassifier& dc) {
  return argmax_cosine(embedding, dc.class_ids, dc.weights);
}

WeightDraw draw_weights(const StochasticClassifier& sc, Rng& rng) {
  WeightDraw d;
  d.epsilon = draw_standard_normal(sc.mu.rows(), sc.mu.cols(), rng);
  d.mu_hat = reparameterize(sc.mu, sc.sigma, d.epsilon);
  if (!all_finite(d.mu_hat.flat())) throw TrainingDivergenceError("sampled weights are not finite");
  return d;
}

LossGradients base_loss(const DenseVector& embedding, ClassId label,
                        const StochasticClassifier& sc, const WeightDraw& draw,
                        const TrainingConfig& cfg) {
  check_draw(sc, draw);
  return grad_cosine_ce(embedding.values(), sc.index_of(label), draw.mu_hat, sc.mu, sc.sigma,
                        draw.epsilon, cfg.logit_scale);
}

LossGradients batch_base_loss(const EmbeddingSet& batch, const StochasticClassifier& sc,
                              const WeightDraw& draw, const TrainingConfig& cfg) {
  check_draw(sc, draw);
  return through_draw(batch_loss_on(batch, sc.class_ids, draw.mu_hat, cfg), draw);
}

LossGradients prototype_loss(const PrototypeSet& protos, const StochasticClassifier& sc,
                             const WeightDraw& draw, const TrainingConfig& cfg) {
  check_draw(sc, draw);
  return through_draw(prototype_loss_on(protos, sc.class_ids, draw.mu_hat, cfg), draw);
}

LossGradients joint_loss(const EmbeddingSet& batch, const PrototypeSet& protos,
                         const StochasticClassifier& sc, const WeightDraw& draw,
                         const TrainingConfig& cfg) {
  check_draw(sc, draw);
  return through_draw(joint_loss_on(batch, protos, sc.class_ids, draw.mu_hat, cfg), draw);
}

LossGradients base_loss(const DenseVector& embedding, ClassId label,
                        const StochasticClassifier& sc, Rng& rng, const TrainingConfig& cfg) {
  sc.index_of(label);
  return monte_carlo(sc, rng, cfg, [&](const WeightDraw& d) {
    return base_loss(embedding, label, sc, d, cfg);
  });
}

LossGradients batch_base_loss(const EmbeddingSet& batch, const StochasticClassifier& sc,
                              Rng& rng, const TrainingConfig& cfg) {
  return monte_carlo(sc, rng, cfg, [&](const WeightDraw& d) {
    return batch_base_loss(batch, sc, d, cfg);
  });
}

LossGradients prototype_loss(const PrototypeSet& protos, const StochasticClassifier& sc, Rng& rng,
                             const TrainingConfig& cfg) {
  return monte_carlo(sc, rng, cfg, [&](const WeightDraw& d) {
    return prototype_loss(protos, sc, d, cfg);
  });
}

LossGradients joint_loss(const EmbeddingSet& batch, const PrototypeSet& protos,
                         const StochasticClassifier& sc, Rng& rng, const TrainingConfig& cfg) {
  return monte_carlo(sc, rng, cfg, [&](const WeightDraw& d) {
    return joint_loss(batch, protos, sc, d, cfg);
  });
}

WeightLossGradients base_loss(const DenseVector& embedding, ClassId label,
                              const DeterministicClassifier& dc, const TrainingConfig& cfg) {
  auto ce = cosine_ce(embedding.values(), dc.index_of(label), dc.weights, cfg.logit_scale);
  return {ce.loss, std::move(ce.d_weights)};
}

WeightLossGradients batch_base_loss(const EmbeddingSet& batch, const DeterministicClassifier& dc,
                                    const TrainingConfig& cfg) {
  auto ce = batch_loss_on(batch, dc.class_ids, dc.weights, cfg);
  return {ce.loss, std::move(ce.d_weights)};
}

WeightLossGradients prototype_loss(const PrototypeSet& protos, const DeterministicClassifier& dc,
                                   const TrainingConfig& cfg) {
  auto ce = prototype_loss_on(protos, dc.class_ids, dc.weights, cfg);
  return {ce.loss, std::move(ce.d_weights)};
}

WeightLossGradients joint_loss(const EmbeddingSet& batch, const PrototypeSet& protos,
                               const DeterministicClassifier& dc, const TrainingConfig& cfg) {
  auto ce = joint_loss_on(batch, protos, dc.class_ids, dc.weights, cfg);
  return {ce.loss, std::move(ce.d_weights)};
}

TrainTrace train(StochasticClassifier& sc, const BatchSchedule& schedule,
                 const PrototypeSet* protos, const TrainingConfig& cfg, Rng& rng) {
  sc.validate();
  return train_loop(StochasticHead{sc}, schedule, protos, cfg, rng);
}

TrainTrace train(DeterministicClassifier& dc, const BatchSchedule& schedule,
                 const PrototypeSet* protos, const TrainingConfig& cfg, Rng& rng) {
  dc.validate();
  return train_loop(DeterministicHead{dc}, schedule, protos, cfg, rng);
}

BatchSchedule fixed_batch(EmbeddingSet data) {
  return [data = std::move(data)](std::size_t) { return std::vector<EmbeddingSet>{data}; };
}

}  // namespace fscil
