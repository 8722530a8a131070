#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fscil/errors.hpp"
#include "fscil/linalg.hpp"
#include "fscil/rng.hpp"

namespace fscil {

/// Cosine of the angle between a and b, clamped to [-1, 1].
/// Throws ShapeError on dimension mismatch and DegenerateInputError when
/// either argument has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const DenseVector& a, const DenseVector& b) {
  return cosine_similarity(a.values(), b.values());
}

/// -log softmax(logits)[target], evaluated with the max-shift trick.
double log_softmax_ce(std::span<const double> logits, std::size_t target_index);

/// Softmax probabilities of `logits` (max-shifted).
std::vector<double> softmax(std::span<const double> logits);

/// rows x cols standard normals drawn from rng in row-major order.
Matrix draw_standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

/// mu + epsilon (.) sigma for a given epsilon.
Matrix reparameterize(const Matrix& mu, const Matrix& sigma, const Matrix& epsilon);

/// mu + N(0,1) (.) sigma, drawing epsilon row-major from rng.
Matrix sample_stochastic_weights(const Matrix& mu, const Matrix& sigma, Rng& rng);

struct GradientPair {
  Matrix d_mu;
  Matrix d_sigma;
};

struct CosineCeResult {
  double loss = 0.0;
  Matrix d_weights;  // d loss / d weights, same shape as the weight matrix
};

/// Cross-entropy over logits scale * cos(embedding, w_h) for every row w_h,
/// with its gradient with respect to the weight rows. This is the shared
/// kernel behind the stochastic and deterministic heads.
CosineCeResult cosine_ce(std::span<const double> embedding, std::size_t target_index,
                         const Matrix& weights, double scale);

/// Adds `upstream` times d cos(embedding, w) / d w into `out`.
void accumulate_cosine_grad(std::span<const double> embedding, std::span<const double> weight,
                            double upstream, std::span<double> out);

struct LossGradients {
  double loss = 0.0;
  GradientPair grads;
};

/// Loss and (mu, sigma) gradients for one embedding through the
/// reparameterized weights mu_hat = mu + epsilon (.) sigma. The caller passes
/// the epsilon actually drawn; an inconsistent mu_hat is a ContractError.
LossGradients grad_cosine_ce(std::span<const double> embedding, std::size_t target_index,
                             const Matrix& mu_hat, const Matrix& mu, const Matrix& sigma,
                             const Matrix& epsilon, double scale);

/// Chain rule from d loss / d mu_hat onto (mu, sigma).
GradientPair chain_to_mu_sigma(const Matrix& d_mu_hat, const Matrix& epsilon);

/// Central difference of loss_fn along one flat coordinate of point. The
/// difference is taken in the loss function's own result type, so an
/// extended-precision loss keeps its precision, and the step actually
/// representable around the coordinate is the denominator.
template <class LossFn>
double finite_difference_entry(LossFn&& loss_fn, const Matrix& point, std::size_t index, double h) {
  using Result = std::decay_t<std::invoke_result_t<LossFn&, const Matrix&>>;
  if (!(h > 0.0)) throw ArgumentError("finite difference step must be positive");
  Matrix probe = point;
  const double x = point.flat()[index];
  const double plus = x + h;
  const double minus = x - h;
  probe.flat()[index] = plus;
  const Result f_plus = loss_fn(static_cast<const Matrix&>(probe));
  probe.flat()[index] = minus;
  const Result f_minus = loss_fn(static_cast<const Matrix&>(probe));
  if (!std::isfinite(static_cast<double>(f_plus)) || !std::isfinite(static_cast<double>(f_minus))) {
    throw EvaluationError("non-finite loss while differencing coordinate " + std::to_string(index));
  }
  return static_cast<double>((f_plus - f_minus) /
                             (static_cast<Result>(plus) - static_cast<Result>(minus)));
}

/// Central-difference gradient of loss_fn at point, one coordinate at a time.
template <class LossFn>
Matrix finite_difference_gradient(LossFn&& loss_fn, const Matrix& point, double h) {
  Matrix grad(point.rows(), point.cols());
  for (std::size_t i = 0; i < grad.flat().size(); ++i) {
    grad.flat()[i] = finite_difference_entry(loss_fn, point, i, h);
  }
  return grad;
}

enum class OptimizerKind { sgd, momentum, adam };

const char* optimizer_name(OptimizerKind kind);
/// Throws ArgumentError on an unknown name.
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  Matrix velocity;       // momentum buffer, or adam first moment
  Matrix second_moment;  // adam only
  std::size_t steps = 0;
};

/// One in-place update of params. A NaN or infinite gradient raises
/// TrainingDivergenceError naming the coordinate; params are untouched then.
void optimizer_step(Matrix& params, const Matrix& grads, OptimizerState& state,
                    const OptimizerConfig& hyper);

}  // namespace fscil
