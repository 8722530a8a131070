#include "fscil/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fscil {
namespace {

double checked_norm(std::span<const double> v, const char* what) {
  const double n = l2_norm(v);
  if (!(n > 0.0)) throw DegenerateInputError(std::string(what) + " has zero norm");
  return n;
}

double max_of(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  return m;
}

void require_finite_logits(std::span<const double> logits) {
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw ArgumentError("logit " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: dim " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  const double na = checked_norm(a, "cosine_similarity: first argument");
  const double nb = checked_norm(b, "cosine_similarity: second argument");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double log_softmax_ce(std::span<const double> logits, std::size_t target_index) {
  if (logits.empty()) throw ArgumentError("log_softmax_ce: empty logits");
  if (target_index >= logits.size()) {
    throw ArgumentError("log_softmax_ce: target " + std::to_string(target_index) +
                        " out of range for " + std::to_string(logits.size()) + " logits");
  }
  require_finite_logits(logits);
  const double shift = max_of(logits);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - shift);
  // Loss is -(z_t - shift) + log(sum); both terms are >= 0 up to rounding.
  return std::max(0.0, std::log(sum) - (logits[target_index] - shift));
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ArgumentError("softmax: empty logits");
  require_finite_logits(logits);
  const double shift = max_of(logits);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - shift);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Matrix draw_standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix eps(rows, cols);
  for (double& v : eps.flat()) v = rng.standard_normal();
  return eps;
}

Matrix reparameterize(const Matrix& mu, const Matrix& sigma, const Matrix& epsilon) {
  require_same_shape(mu, sigma, "reparameterize(mu, sigma)");
  require_same_shape(mu, epsilon, "reparameterize(mu, epsilon)");
  Matrix out = mu;
  auto o = out.flat();
  auto s = sigma.flat();
  auto e = epsilon.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += e[i] * s[i];
  return out;
}

Matrix sample_stochastic_weights(const Matrix& mu, const Matrix& sigma, Rng& rng) {
  require_same_shape(mu, sigma, "sample_stochastic_weights");
  if (!all_finite(mu.flat()) || !all_finite(sigma.flat())) {
    throw ArgumentError("sample_stochastic_weights: non-finite mu or sigma");
  }
  return reparameterize(mu, sigma, draw_standard_normal(mu.rows(), mu.cols(), rng));
}

void accumulate_cosine_grad(std::span<const double> embedding, std::span<const double> weight,
                            double upstream, std::span<double> out) {
  const double ne = checked_norm(embedding, "embedding");
  const double nw = checked_norm(weight, "weight row");
  const double cos = dot(embedding, weight) / (ne * nw);
  const double a = upstream / (ne * nw);
  const double b = upstream * cos / (nw * nw);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += a * embedding[j] - b * weight[j];
}

CosineCeResult cosine_ce(std::span<const double> embedding, std::size_t target_index,
                         const Matrix& weights, double scale) {
  if (embedding.size() != weights.cols()) {
    throw ShapeError("cosine_ce: embedding dim " + std::to_string(embedding.size()) +
                     " vs weight dim " + std::to_string(weights.cols()));
  }
  std::vector<double> logits(weights.rows());
  for (std::size_t h = 0; h < weights.rows(); ++h) {
    logits[h] = scale * cosine_similarity(embedding, weights.row(h));
  }
  CosineCeResult result;
  result.loss = log_softmax_ce(logits, target_index);
  result.d_weights = Matrix(weights.rows(), weights.cols());
  const auto p = softmax(logits);
  for (std::size_t h = 0; h < weights.rows(); ++h) {
    const double upstream = scale * (p[h] - (h == target_index ? 1.0 : 0.0));
    accumulate_cosine_grad(embedding, weights.row(h), upstream, result.d_weights.row(h));
  }
  return result;
}

GradientPair chain_to_mu_sigma(const Matrix& d_mu_hat, const Matrix& epsilon) {
  require_same_shape(d_mu_hat, epsilon, "chain_to_mu_sigma");
  GradientPair g{d_mu_hat, d_mu_hat};
  auto ds = g.d_sigma.flat();
  auto e = epsilon.flat();
  for (std::size_t i = 0; i < ds.size(); ++i) ds[i] *= e[i];
  return g;
}

LossGradients grad_cosine_ce(std::span<const double> embedding, std::size_t target_index,
                             const Matrix& mu_hat, const Matrix& mu, const Matrix& sigma,
                             const Matrix& epsilon, double scale) {
  require_same_shape(mu_hat, mu, "grad_cosine_ce(mu_hat, mu)");
  require_same_shape(mu, sigma, "grad_cosine_ce(mu, sigma)");
  require_same_shape(mu, epsilon, "grad_cosine_ce(mu, epsilon)");
  auto mh = mu_hat.flat();
  auto m = mu.flat();
  auto s = sigma.flat();
  auto e = epsilon.flat();
  for (std::size_t i = 0; i < mh.size(); ++i) {
    const double expected = m[i] + e[i] * s[i];
    if (std::abs(mh[i] - expected) > 1e-12 * std::max(1.0, std::abs(expected))) {
      throw ContractError("mu_hat entry " + std::to_string(i) +
                          " does not equal mu + epsilon * sigma");
    }
  }
  auto ce = cosine_ce(embedding, target_index, mu_hat, scale);
  return {ce.loss, chain_to_mu_sigma(ce.d_weights, epsilon)};
}

void optimizer_step(Matrix& params, const Matrix& grads, OptimizerState& state,
                    const OptimizerConfig& hyper) {
  require_same_shape(params, grads, "optimizer_step");
  if (!(hyper.learning_rate >= 0.0) || !std::isfinite(hyper.learning_rate)) {
    throw ArgumentError("learning rate must be finite and non-negative");
  }
  auto g = grads.flat();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      const std::size_t cols = std::max<std::size_t>(grads.cols(), 1);
      throw TrainingDivergenceError("non-finite gradient at row " + std::to_string(i / cols) +
                                    ", column " + std::to_string(i % cols));
    }
  }
  auto p = params.flat();
  const double lr = hyper.learning_rate;
  ++state.steps;
  switch (hyper.kind) {
    case OptimizerKind::sgd:
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      break;
    case OptimizerKind::momentum: {
      if (!state.velocity.same_shape(params)) state.velocity = Matrix(params.rows(), params.cols());
      auto v = state.velocity.flat();
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = hyper.momentum * v[i] + g[i];
        p[i] -= lr * v[i];
      }
      break;
    }
    case OptimizerKind::adam: {
      if (!state.velocity.same_shape(params)) state.velocity = Matrix(params.rows(), params.cols());
      if (!state.second_moment.same_shape(params)) {
        state.second_moment = Matrix(params.rows(), params.cols());
      }
      auto m1 = state.velocity.flat();
      auto m2 = state.second_moment.flat();
      const double t = static_cast<double>(state.steps);
      const double c1 = 1.0 - std::pow(hyper.beta1, t);
      const double c2 = 1.0 - std::pow(hyper.beta2, t);
      for (std::size_t i = 0; i < p.size(); ++i) {
        m1[i] = hyper.beta1 * m1[i] + (1.0 - hyper.beta1) * g[i];
        m2[i] = hyper.beta2 * m2[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        p[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + hyper.epsilon);
      }
      break;
    }
  }
}

const char* optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "momentum") return OptimizerKind::momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw ArgumentError("unknown optimizer '" + name + "'");
}

}  // namespace fscil
