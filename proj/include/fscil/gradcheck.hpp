#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fscil/classifier.hpp"
#include "fscil/embedding_set.hpp"
#include "fscil/linalg.hpp"
#include "fscil/rng.hpp"

// Randomized gradient verification. The reference losses here are an
// independent long double implementation (own cosine, own log-sum-exp); they
// share nothing with the training path except the data types.
namespace fscil::gradcheck {

struct Instance {
  std::vector<ClassId> class_ids;
  Matrix mu;
  Matrix sigma;
  Matrix epsilon;
  EmbeddingSet batch;
  PrototypeSet prototypes;
  double logit_scale = 1.0;

  StochasticClassifier classifier() const { return {class_ids, mu, sigma}; }
  WeightDraw draw() const;
};

struct InstanceLimits {
  std::size_t max_dim = 16;
  std::size_t max_classes = 8;
  std::size_t max_batch = 4;
  double min_scale = 0.5;
  double max_scale = 4.0;
  bool sigma_zero = false;
};

Instance random_instance(Rng& rng, const InstanceLimits& limits);

long double reference_base_loss(const Instance& inst, const Matrix& mu, const Matrix& sigma);
long double reference_prototype_loss(const Instance& inst, const Matrix& mu, const Matrix& sigma,
                                     PrototypeLossMode mode);
long double reference_joint_loss(const Instance& inst, const Matrix& mu, const Matrix& sigma,
                                 double lambda, PrototypeLossMode mode);

struct Tolerance {
  double relative = 1e-5;
  double absolute = 1e-8;  // used when |analytic| < absolute
};

bool within_tolerance(double analytic, double numeric, const Tolerance& tol);

struct ErrorStats {
  double worst_relative = 0.0;  // over coordinates compared relatively
  double worst_absolute = 0.0;  // over coordinates compared absolutely
  double worst_loss_gap = 0.0;  // |analytic loss - reference loss|
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  std::size_t refined = 0;  // coordinates differenced again in quad precision
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 1000;
  InstanceLimits limits;
  double step = 1e-6;
  Tolerance tolerance;
  std::vector<double> lambdas{0.0, 0.6, 0.9, 1.0};
};

struct SuiteReport {
  std::map<std::string, ErrorStats> per_loss;  // "base", "prototype", "joint@0.6", ...
  bool passed() const;
};

SuiteReport run_gradient_suite(const SuiteOptions& options);

struct ReductionReport {
  std::size_t configurations = 0;
  double max_loss_gap = 0.0;
  double max_mu_grad_gap = 0.0;
};

/// sigma = 0: stochastic and deterministic heads on identical weights.
ReductionReport run_sigma_zero_suite(std::uint64_t seed, std::size_t configurations,
                                     const InstanceLimits& limits);

}  // namespace fscil::gradcheck
