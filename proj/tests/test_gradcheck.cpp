#include <gtest/gtest.h>

#include "fscil/gradcheck.hpp"

namespace fscil {
namespace {

TEST(Gradcheck, SmallSuitePasses) {
  gradcheck::SuiteOptions opt;
  opt.seed = 9;
  opt.instances = 40;
  const auto r = gradcheck::run_gradient_suite(opt);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.per_loss.size(), 3 + opt.lambdas.size());
  for (const auto& [name, s] : r.per_loss) {
    EXPECT_GT(s.coordinates, 0u) << name;
    EXPECT_EQ(s.failures, 0u) << name;
    EXPECT_LE(s.worst_loss_gap, 1e-12) << name;
  }
}

TEST(Gradcheck, Deterministic) {
  gradcheck::SuiteOptions opt;
  opt.seed = 10;
  opt.instances = 10;
  const auto a = gradcheck::run_gradient_suite(opt);
  const auto b = gradcheck::run_gradient_suite(opt);
  for (const auto& [name, s] : a.per_loss) {
    EXPECT_EQ(s.worst_relative, b.per_loss.at(name).worst_relative) << name;
    EXPECT_EQ(s.coordinates, b.per_loss.at(name).coordinates) << name;
  }
}

TEST(Gradcheck, SigmaZeroReduction) {
  const auto r = gradcheck::run_sigma_zero_suite(3, 25, {});
  EXPECT_EQ(r.configurations, 25u);
  EXPECT_LE(r.max_loss_gap, 1e-12);
  EXPECT_LE(r.max_mu_grad_gap, 1e-12);
}

TEST(Gradcheck, ToleranceRule) {
  const gradcheck::Tolerance t;
  EXPECT_TRUE(gradcheck::within_tolerance(1.0, 1.0 + 5e-6, t));
  EXPECT_FALSE(gradcheck::within_tolerance(1.0, 1.0 + 5e-5, t));
  EXPECT_TRUE(gradcheck::within_tolerance(1e-10, 5e-9, t));
  EXPECT_FALSE(gradcheck::within_tolerance(1e-7, 1e-6, t));
}

TEST(Gradcheck, ReferenceMatchesLibraryOnRandomInstance) {
  Rng rng(21);
  const auto inst = gradcheck::random_instance(rng, {});
  const auto sc = inst.classifier();
  EXPECT_GT(sc.num_classes(), 0u);
  TrainingConfig cfg;
  cfg.logit_scale = inst.logit_scale;
  const auto lib = batch_base_loss(inst.batch, sc, inst.draw(), cfg);
  const long double ref = gradcheck::reference_base_loss(inst, inst.mu, inst.sigma);
  EXPECT_NEAR(lib.loss, static_cast<double>(ref), 1e-12);
}

}  // namespace
}  // namespace fscil
