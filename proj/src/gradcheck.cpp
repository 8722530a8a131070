#include "fscil/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <quadmath.h>
#include <sstream>

#include "fscil/numeric.hpp"

namespace fscil::gradcheck {
namespace {

__extension__ typedef __float128 Quad;

inline long double sqrt_(long double x) { return std::sqrt(x); }
inline long double exp_(long double x) { return std::exp(x); }
inline long double log_(long double x) { return std::log(x); }
inline Quad sqrt_(Quad x) { return sqrtq(x); }
inline Quad exp_(Quad x) { return expq(x); }
inline Quad log_(Quad x) { return logq(x); }

template <class Real>
Real ref_cos(std::span<const double> a, std::span<const Real> b) {
  Real ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<Real>(a[i]) * b[i];
    aa += static_cast<Real>(a[i]) * a[i];
    bb += b[i] * b[i];
  }
  return ab / (sqrt_(aa) * sqrt_(bb));
}

// -log(exp(z_t) / sum exp(z)), written out without a max shift: the logits
// here are bounded by the scale.
template <class Real>
Real ref_ce(const std::vector<Real>& z, std::size_t target) {
  Real sum = 0;
  for (Real v : z) sum += exp_(v);
  return log_(sum) - z[target];
}

template <class Real>
std::vector<std::vector<Real>> ref_weights(const Instance& inst, const Matrix& mu,
                                           const Matrix& sigma) {
  std::vector<std::vector<Real>> w(mu.rows(), std::vector<Real>(mu.cols()));
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    for (std::size_t j = 0; j < mu.cols(); ++j) {
      w[i][j] = static_cast<Real>(mu(i, j)) +
                static_cast<Real>(inst.epsilon(i, j)) * static_cast<Real>(sigma(i, j));
    }
  }
  return w;
}

std::size_t row_of(const Instance& inst, ClassId id) {
  return static_cast<std::size_t>(
      std::find(inst.class_ids.begin(), inst.class_ids.end(), id) - inst.class_ids.begin());
}

std::vector<double> gaussian_row(std::size_t dim, Rng& rng, double min_norm) {
  std::vector<double> v(dim);
  do {
    for (double& x : v) x = rng.standard_normal();
  } while (l2_norm(v) < min_norm);
  return v;
}

template <class Real>
Real base_impl(const Instance& inst, const Matrix& mu, const Matrix& sigma) {
  const auto w = ref_weights<Real>(inst, mu, sigma);
  Real total = 0;
  for (const auto& r : inst.batch.records()) {
    std::vector<Real> z;
    for (const auto& row : w) z.push_back(inst.logit_scale * ref_cos<Real>(r.vector.values(), row));
    total += ref_ce(z, row_of(inst, r.class_id));
  }
  return total / static_cast<Real>(inst.batch.size());
}

template <class Real>
Real prototype_impl(const Instance& inst, const Matrix& mu, const Matrix& sigma,
                                     PrototypeLossMode mode) {
  const auto w = ref_weights<Real>(inst, mu, sigma);
  Real total = 0;
  if (mode == PrototypeLossMode::per_prototype) {
    for (const auto& [id, p] : inst.prototypes.entries) {
      std::vector<Real> z;
      for (const auto& row : w) z.push_back(inst.logit_scale * ref_cos<Real>(p.values(), row));
      total += ref_ce(z, row_of(inst, id));
    }
  } else {
    std::vector<Real> z;
    for (const auto& [id, p] : inst.prototypes.entries) {
      z.push_back(inst.logit_scale * ref_cos<Real>(p.values(), w[row_of(inst, id)]));
    }
    for (std::size_t k = 0; k < z.size(); ++k) total += ref_ce(z, k);
  }
  return total / static_cast<Real>(inst.prototypes.size());
}

template <class Real>
Real joint_impl(const Instance& inst, const Matrix& mu, const Matrix& sigma,
                                 double lambda, PrototypeLossMode mode) {
  const Real l = lambda;
  return (1 - l) * base_impl<Real>(inst, mu, sigma) +
         l * prototype_impl<Real>(inst, mu, sigma, mode);
}

void record(ErrorStats& stats, const Matrix& analytic, const Matrix& numeric, const Tolerance& tol) {
  auto a = analytic.flat();
  auto n = numeric.flat();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++stats.coordinates;
    const double diff = std::abs(a[i] - n[i]);
    if (std::abs(a[i]) < tol.absolute) {
      stats.worst_absolute = std::max(stats.worst_absolute, diff);
    } else {
      stats.worst_relative =
          std::max(stats.worst_relative, diff / std::max(std::abs(a[i]), std::abs(n[i])));
    }
    if (!within_tolerance(a[i], n[i], tol)) ++stats.failures;
  }
}

// Long double rounding leaves roughly 1e-13 of noise in a central
// difference at h = 1e-6. Coordinates small enough for that to matter are
// differenced again in quad precision.
constexpr double kRefineBelow = 1e-5;

template <class RefFn>
void check_loss(ErrorStats& stats, const Instance& inst, const LossGradients& analytic,
                RefFn&& ref, const SuiteOptions& opt) {
  const double ref_loss = static_cast<double>(ref(0.0L, inst.mu, inst.sigma));
  stats.worst_loss_gap = std::max(stats.worst_loss_gap, std::abs(ref_loss - analytic.loss));
  auto compare = [&](const Matrix& point, bool wrt_mu, const Matrix& grad) {
    auto loss_at = [&](auto zero) {
      return [&, zero](const Matrix& m) { return wrt_mu ? ref(zero, m, inst.sigma) : ref(zero, inst.mu, m); };
    };
    Matrix fd = finite_difference_gradient(loss_at(0.0L), point, opt.step);
    for (std::size_t i = 0; i < fd.flat().size(); ++i) {
      if (std::max(std::abs(grad.flat()[i]), std::abs(fd.flat()[i])) < kRefineBelow) {
        fd.flat()[i] = finite_difference_entry(loss_at(Quad(0)), point, i, opt.step);
        ++stats.refined;
      }
    }
    record(stats, grad, fd, opt.tolerance);
  };
  compare(inst.mu, true, analytic.grads.d_mu);
  compare(inst.sigma, false, analytic.grads.d_sigma);
}

std::string lambda_key(double lambda) {
  std::ostringstream os;
  os << "joint@" << lambda;
  return os.str();
}

}  // namespace

WeightDraw Instance::draw() const { return {epsilon, reparameterize(mu, sigma, epsilon)}; }

Instance random_instance(Rng& rng, const InstanceLimits& limits) {
  Instance inst;
  const std::size_t dim = 2 + rng.uniform_index(std::max<std::size_t>(limits.max_dim, 2) - 1);
  const std::size_t classes = 1 + rng.uniform_index(std::max<std::size_t>(limits.max_classes, 1));
  inst.logit_scale = limits.min_scale + (limits.max_scale - limits.min_scale) * rng.uniform01();
  for (std::size_t c = 0; c < classes; ++c) inst.class_ids.push_back(static_cast<ClassId>(3 * c + 1));

  // Keep every sampled weight row away from the origin so cosine stays smooth.
  for (;;) {
    inst.mu = Matrix();
    for (std::size_t c = 0; c < classes; ++c) inst.mu.append_row(gaussian_row(dim, rng, 0.5));
    inst.sigma = Matrix(classes, dim);
    if (!limits.sigma_zero) {
      for (double& s : inst.sigma.flat()) s = 0.5 * rng.standard_normal();
    }
    inst.epsilon = draw_standard_normal(classes, dim, rng);
    const auto mu_hat = reparameterize(inst.mu, inst.sigma, inst.epsilon);
    bool ok = true;
    for (std::size_t c = 0; c < classes; ++c) ok = ok && l2_norm(mu_hat.row(c)) > 0.3;
    if (ok) break;
  }

  inst.batch = EmbeddingSet(dim);
  const std::size_t batch = 1 + rng.uniform_index(std::max<std::size_t>(limits.max_batch, 1));
  for (std::size_t b = 0; b < batch; ++b) {
    const ClassId label = inst.class_ids[rng.uniform_index(classes)];
    inst.batch.add(b, label, DenseVector(gaussian_row(dim, rng, 0.3)));
  }
  for (ClassId id : inst.class_ids) {
    if (rng.uniform01() < 0.6) inst.prototypes.entries.emplace(id, DenseVector(gaussian_row(dim, rng, 0.3)));
  }
  if (inst.prototypes.empty()) {
    inst.prototypes.entries.emplace(inst.class_ids[0], DenseVector(gaussian_row(dim, rng, 0.3)));
  }
  return inst;
}

long double reference_base_loss(const Instance& inst, const Matrix& mu, const Matrix& sigma) {
  return base_impl<long double>(inst, mu, sigma);
}

long double reference_prototype_loss(const Instance& inst, const Matrix& mu, const Matrix& sigma,
                                     PrototypeLossMode mode) {
  return prototype_impl<long double>(inst, mu, sigma, mode);
}

long double reference_joint_loss(const Instance& inst, const Matrix& mu, const Matrix& sigma,
                                 double lambda, PrototypeLossMode mode) {
  return joint_impl<long double>(inst, mu, sigma, lambda, mode);
}

bool within_tolerance(double analytic, double numeric, const Tolerance& tol) {
  const double diff = std::abs(analytic - numeric);
  if (std::abs(analytic) < tol.absolute) return diff <= tol.absolute;
  return diff <= tol.relative * std::max(std::abs(analytic), std::abs(numeric));
}

bool SuiteReport::passed() const {
  for (const auto& [name, stats] : per_loss) {
    if (stats.failures != 0) return false;
  }
  return !per_loss.empty();
}

SuiteReport run_gradient_suite(const SuiteOptions& opt) {
  Rng rng(opt.seed);
  SuiteReport report;
  for (std::size_t i = 0; i < opt.instances; ++i) {
    const auto inst = random_instance(rng, opt.limits);
    const auto sc = inst.classifier();
    const auto draw = inst.draw();
    TrainingConfig cfg;
    cfg.logit_scale = inst.logit_scale;

    check_loss(report.per_loss["base"], inst, batch_base_loss(inst.batch, sc, draw, cfg),
               [&](auto zero, const Matrix& mu, const Matrix& sigma) {
                 return base_impl<decltype(zero)>(inst, mu, sigma);
               },
               opt);
    for (auto mode : {PrototypeLossMode::per_prototype, PrototypeLossMode::literal}) {
      cfg.prototype_mode = mode;
      check_loss(report.per_loss[mode == PrototypeLossMode::literal ? "prototype-literal" : "prototype"],
                 inst, prototype_loss(inst.prototypes, sc, draw, cfg),
                 [&](auto zero, const Matrix& mu, const Matrix& sigma) {
                   return prototype_impl<decltype(zero)>(inst, mu, sigma, mode);
                 },
                 opt);
    }
    cfg.prototype_mode = PrototypeLossMode::per_prototype;
    for (double lambda : opt.lambdas) {
      cfg.lambda = lambda;
      check_loss(report.per_loss[lambda_key(lambda)], inst,
                 joint_loss(inst.batch, inst.prototypes, sc, draw, cfg),
                 [&](auto zero, const Matrix& mu, const Matrix& sigma) {
                   return joint_impl<decltype(zero)>(inst, mu, sigma, lambda, PrototypeLossMode::per_prototype);
                 },
                 opt);
    }
  }
  return report;
}

ReductionReport run_sigma_zero_suite(std::uint64_t seed, std::size_t configurations,
                                     const InstanceLimits& limits) {
  Rng rng(seed);
  InstanceLimits zero = limits;
  zero.sigma_zero = true;
  ReductionReport out;
  for (std::size_t i = 0; i < configurations; ++i) {
    const auto inst = random_instance(rng, zero);
    const auto sc = inst.classifier();
    const DeterministicClassifier dc{inst.class_ids, inst.mu};
    TrainingConfig cfg;
    cfg.logit_scale = inst.logit_scale;
    cfg.lambda = rng.uniform01();
    Rng draw_rng = rng.split("sigma-zero/" + std::to_string(i));

    auto compare = [&](const LossGradients& s, const WeightLossGradients& d) {
      out.max_loss_gap = std::max(out.max_loss_gap, std::abs(s.loss - d.loss));
      auto a = s.grads.d_mu.flat();
      auto b = d.d_weights.flat();
      for (std::size_t k = 0; k < a.size(); ++k) {
        out.max_mu_grad_gap = std::max(out.max_mu_grad_gap, std::abs(a[k] - b[k]));
      }
    };
    const auto& first = inst.batch[0];
    compare(base_loss(first.vector, first.class_id, sc, draw_rng, cfg),
            base_loss(first.vector, first.class_id, dc, cfg));
    compare(batch_base_loss(inst.batch, sc, draw_rng, cfg), batch_base_loss(inst.batch, dc, cfg));
    compare(prototype_loss(inst.prototypes, sc, draw_rng, cfg), prototype_loss(inst.prototypes, dc, cfg));
    compare(joint_loss(inst.batch, inst.prototypes, sc, draw_rng, cfg),
            joint_loss(inst.batch, inst.prototypes, dc, cfg));
    ++out.configurations;
  }
  return out;
}

}  // namespace fscil::gradcheck
