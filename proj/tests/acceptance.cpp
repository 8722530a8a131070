// Acceptance checks. Prints one PASS/FAIL line per numbered check and exits
// nonzero when any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fscil/archive.hpp"
#include "fscil/classifier.hpp"
#include "fscil/cli.hpp"
#include "fscil/episode.hpp"
#include "fscil/errors.hpp"
#include "fscil/gradcheck.hpp"
#include "fscil/metrics.hpp"
#include "fscil/session.hpp"
#include "fscil/synthetic.hpp"
#include "support.hpp"

namespace {

using namespace fscil;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool near(double value, double target, double tol = 0.01) { return std::abs(value - target) <= tol + 1e-12; }

struct Line {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Line()>& check) {
  Line line;
  try {
    line = check();
  } catch (const std::exception& e) {
    line = {false, std::string("exception: ") + e.what()};
  }
  if (!line.pass) ++failures;
  std::printf("%s %2d %-34s %s\n", line.pass ? "PASS" : "FAIL", id, name.c_str(), line.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

const std::vector<double> kLsAll{92.73, 92.27, 91.42, 89.53, 88.10, 87.56, 86.43, 84.00, 83.45};
const std::vector<double> kLsIncr{86.84, 84.26, 77.74, 74.99, 75.79, 74.60, 72.45, 72.64};
const std::vector<double> kLsBase{92.73, 92.72, 92.62, 92.48, 92.48, 92.47, 92.34, 90.74, 90.67};
const std::vector<double> kNsAll{99.98, 97.88, 98.08, 96.53, 95.55, 93.61, 91.54, 90.13, 89.09, 88.29};

Line metric_all_ls() {
  const auto start = Clock::now();
  const double aa = average_accuracy(kLsAll);
  const double pd = performance_dropping(kLsAll, ClassGroup::all);
  const double ms = seconds_since(start) * 1e3;
  return {near(aa, 88.39) && near(pd, 9.28) && ms < 1.0, fmt("AA=%.4f PD=%.4f time=%.4f ms", aa, pd, ms)};
}

Line metric_incr_base_ls() {
  const double aa = average_accuracy(kLsIncr);
  const double pd = performance_dropping(kLsIncr, ClassGroup::incremental);
  const double pd_base = performance_dropping(kLsBase, ClassGroup::base);
  return {near(aa, 77.41) && near(pd, 14.20) && near(pd_base, 2.06),
          fmt("Incr AA=%.4f PD=%.4f, Base PD=%.4f", aa, pd, pd_base)};
}

Line metric_all_ns() {
  const double aa = average_accuracy(kNsAll);
  const double pd = performance_dropping(kNsAll, ClassGroup::all);
  return {near(aa, 94.07) && near(pd, 11.69), fmt("AA=%.4f PD=%.4f", aa, pd)};
}

Line gradient_check() {
  gradcheck::SuiteOptions opt;
  opt.seed = 2024;
  opt.instances = 1000;
  const auto start = Clock::now();
  const auto r = gradcheck::run_gradient_suite(opt);
  const double secs = seconds_since(start);
  double worst_rel = 0, worst_abs = 0;
  std::size_t coords = 0, bad = 0;
  for (const auto& [name, s] : r.per_loss) {
    worst_rel = std::max(worst_rel, s.worst_relative);
    worst_abs = std::max(worst_abs, s.worst_absolute);
    coords += s.coordinates;
    bad += s.failures;
  }
  return {r.passed() && secs < 30.0,
          fmt("%zu losses, %zu coords, %zu failures, worst rel=%.2e abs=%.2e, %.1f s", r.per_loss.size(),
              coords, bad, worst_rel, worst_abs, secs)};
}

Line sigma_zero() {
  const auto r = gradcheck::run_sigma_zero_suite(2024, 100, {});
  return {r.configurations == 100 && r.max_loss_gap <= 1e-12 && r.max_mu_grad_gap <= 1e-12,
          fmt("%zu configs, loss gap=%.2e, mu-grad gap=%.2e", r.configurations, r.max_loss_gap,
              r.max_mu_grad_gap)};
}

Line reparameterization() {
  StochasticClassifier sc;
  sc.class_ids = {0, 1, 2};
  sc.mu = Matrix::from_rows({{1.0, -2.0, 0.5, 3.0}, {0.0, 4.0, -1.0, 2.0}, {-3.0, 0.25, 1.5, -0.5}});
  sc.sigma = Matrix::from_rows({{0.1, 0.5, 1.0, 2.0}, {-0.7, 0.0, 0.3, 1.5}, {3.0, -1.2, 0.05, 0.8}});
  const std::size_t draws = 100000;
  Matrix sum(3, 4), sum_sq(3, 4);
  Rng rng(2024);
  for (std::size_t t = 0; t < draws; ++t) {
    const auto w = draw_weights(sc, rng);
    for (std::size_t i = 0; i < sum.size(); ++i) {
      const double v = w.mu_hat.flat()[i];
      sum.flat()[i] += v;
      sum_sq.flat()[i] += v * v;
    }
  }
  double worst_mean = 0, worst_std = 0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum.flat()[i] / draws;
    const double var = std::max(0.0, sum_sq.flat()[i] / draws - mean * mean);
    worst_mean = std::max(worst_mean, std::abs(mean - sc.mu.flat()[i]));
    worst_std = std::max(worst_std, std::abs(std::sqrt(var) - std::abs(sc.sigma.flat()[i])));
  }
  return {worst_mean <= 0.05 && worst_std <= 0.05,
          fmt("%zu draws x 12 entries, worst |mean-mu|=%.4f worst |std-|sigma||=%.4f", draws, worst_mean,
              worst_std)};
}

SyntheticSpec desk_spec(std::uint64_t seed, double noise) {
  SyntheticSpec s;
  s.num_classes = 40;
  s.dim = 64;
  s.intra_class_noise = noise;
  s.seed = seed;
  s.rule = CenterRule::orthogonal;
  s.base_classes = 20;
  s.n_way = 5;
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Line end_to_end() {
  std::vector<double> finals, drops, ncm;
  double slowest = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto start = Clock::now();
    const auto archive = generate_synthetic(desk_spec(seed, 0.05));
    SessionPlan settings;
    settings.training.lambda = 0.6;
    PlanShape shape;
    const auto in = prepare_protocol(archive, shape, settings);
    const auto r = run_full_protocol(in.plan, in.train_sets, in.test_sets, Rng(seed));
    slowest = std::max(slowest, seconds_since(start));
    finals.push_back(r.report.records.back().all_acc);
    drops.push_back(*r.report.pd.all);

    EmbeddingSet train(archive.set.dim()), test(archive.set.dim());
    for (std::size_t m = 0; m < in.train_sets.size(); ++m) {
      for (const auto& rec : in.train_sets[m].records()) train.add(rec);
      for (const auto& rec : in.test_sets[m].records()) test.add(rec);
    }
    ncm.push_back(testing::oracle_ncm_accuracy(train, test));
  }
  const double final_med = median(finals), pd_med = median(drops), ncm_min = *std::min_element(ncm.begin(), ncm.end());
  return {final_med >= 95.0 && pd_med <= 5.0 && ncm_min >= 99.0 && slowest < 60.0,
          fmt("median final All=%.2f median PD=%.2f, NCM min=%.2f, slowest seed %.2f s", final_med, pd_med,
              ncm_min, slowest)};
}

Line episode_counting() {
  Rng setup(2024);
  const auto d = testing::random_set(5, 20, 8, setup);
  Rng r(1);
  const auto e = epoch_episodes(d, 5, 5, r);
  std::set<SampleId> seen;
  bool disjoint = true;
  for (const auto& ep : e.episodes) {
    for (const auto* part : {&ep.support, &ep.query}) {
      for (const auto& rec : part->records()) disjoint &= seen.insert(rec.sample_id).second;
    }
  }
  bool counted = e.episodes.size() == 2 && disjoint && seen.size() == 100;

  std::size_t datasets_ok = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + setup.uniform_index(5), k = 1 + setup.uniform_index(5);
    EmbeddingSet data(4);
    SampleId next = 0;
    const std::size_t classes = n + setup.uniform_index(8);
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t count = setup.uniform_index(40);
      for (std::size_t i = 0; i < count; ++i) {
        data.add(next++, static_cast<ClassId>(c), DenseVector(testing::random_vector(4, setup)));
      }
    }
    Rng er(t);
    const auto epoch = epoch_episodes(data, n, k, er);
    std::set<SampleId> used;
    bool ok = true;
    for (const auto& ep : epoch.episodes) {
      ok &= ep.support.size() == n * k && ep.query.size() == n * k;
      for (const auto* part : {&ep.support, &ep.query}) {
        for (const auto& rec : part->records()) ok &= used.insert(rec.sample_id).second;
      }
    }
    ok &= used.size() + epoch.unused_samples == data.size();
    if (ok) ++datasets_ok;
  }
  return {counted && datasets_ok == 100,
          fmt("5x20 at 5-way 5-shot: %zu episodes, %zu distinct samples; uniqueness %zu/100 datasets",
              e.episodes.size(), seen.size(), datasets_ok)};
}

Line disjointness() {
  Rng rng(2024);
  std::size_t rejected = 0, total = 0;
  // Plans: base plus sessions of n_way fresh labels, then one label copied
  // from an earlier set into a later one.
  for (int t = 0; t < 25; ++t, ++total) {
    SessionPlan plan;
    plan.n_way = 1 + rng.uniform_index(5);
    const std::size_t base = 1 + rng.uniform_index(10), sessions = 1 + rng.uniform_index(5);
    ClassId next = 0;
    for (std::size_t i = 0; i < base; ++i) plan.base_labels.push_back(next++);
    for (std::size_t m = 0; m < sessions; ++m) {
      plan.incremental_labels.emplace_back();
      for (std::size_t i = 0; i < plan.n_way; ++i) plan.incremental_labels.back().push_back(next++);
    }
    plan.validate();
    const std::size_t to = rng.uniform_index(sessions);
    const std::size_t from = rng.uniform_index(to + 1);  // 0 is the base set, else incremental set from - 1
    const auto& source = from == 0 ? plan.base_labels : plan.incremental_labels[from - 1];
    auto& target = plan.incremental_labels[to];
    target[rng.uniform_index(target.size())] = source[rng.uniform_index(source.size())];
    try {
      plan.validate();
    } catch (const LabelOverlapError&) {
      ++rejected;
    }
  }
  // Archives: a valid synthetic archive, then one class made to appear in two sessions.
  for (int t = 0; t < 25; ++t, ++total) {
    auto spec = desk_spec(100 + t, 0.05);
    spec.num_classes = 20;
    spec.samples_per_class = 6;
    spec.base_classes = 10;
    const auto a = generate_synthetic(spec);
    validate_archive(a.set, a.manifest);
    auto m = a.manifest;
    const std::size_t s_to = 1 + rng.uniform_index(m.sessions.size() - 1);
    const std::size_t s_from = rng.uniform_index(s_to);
    auto& from = m.sessions[s_from];
    const bool take_train = rng.uniform_index(2) == 0 && !from.train.empty();
    auto& pool = take_train ? from.train : from.test;
    const std::size_t pick = rng.uniform_index(pool.size());
    (take_train ? m.sessions[s_to].train : m.sessions[s_to].test).push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    try {
      validate_archive(a.set, m);
    } catch (const DisjointnessError&) {
      ++rejected;
    }
  }
  return {rejected == total, fmt("%zu/%zu adversarial plans and archives rejected", rejected, total)};
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

std::string write_desk_archive(const testing::TempDir& dir, const std::string& name, std::uint64_t seed,
                               double noise) {
  const auto path = (dir / name).string();
  const auto a = generate_synthetic(desk_spec(seed, noise));
  write_archive(a.set, a.manifest, path);
  return path;
}

Line determinism() {
  testing::TempDir dir;
  const auto archive = write_desk_archive(dir, "det.fcae", 7, 0.1);
  for (const char* out : {"a", "b"}) {
    if (cli({"run", "--archive", archive, "--out", (dir / out).string(), "--seed", "11", "--format", "json"}) != 0) {
      return {false, "run failed"};
    }
  }
  const auto a = testing::slurp(dir / "a" / "report.json");
  const auto b = testing::slurp(dir / "b" / "report.json");
  return {!a.empty() && a == b, fmt("report.json %zu bytes, identical=%s", a.size(), a == b ? "yes" : "no")};
}

Line ablation() {
  testing::TempDir dir;
  std::vector<double> diffs;
  std::size_t emitted = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto archive = write_desk_archive(dir, "abl" + std::to_string(seed) + ".fcae", seed, 0.25);
    double aa[2] = {0, 0};
    for (int h = 0; h < 2; ++h) {
      const std::string kind = h == 0 ? "stochastic" : "deterministic";
      const auto out = dir / (kind + std::to_string(seed));
      if (cli({"run", "--archive", archive, "--out", out.string(), "--seed", std::to_string(seed),
               "--classifier", kind, "--format", "json"}) != 0) {
        continue;
      }
      const auto r = report_from_json(nlohmann::json::parse(testing::slurp(out / "report.json")));
      if (r.classifier != kind) continue;
      aa[h] = *r.aa.all;
      ++emitted;
    }
    diffs.push_back(aa[0] - aa[1]);
  }
  double mean = 0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  return {emitted == 20, fmt("%zu/20 reports; AA(All) stochastic - deterministic: mean %+.2f, median %+.2f, "
                             "range [%+.2f, %+.2f] (informational)",
                             emitted, mean, median(diffs), *std::min_element(diffs.begin(), diffs.end()),
                             *std::max_element(diffs.begin(), diffs.end()))};
}

}  // namespace

int main() {
  report(1, "metrics: LS-100 All series", metric_all_ls);
  report(2, "metrics: LS-100 Incr./Base series", metric_incr_base_ls);
  report(3, "metrics: NS-100 All series", metric_all_ns);
  report(4, "gradient check", gradient_check);
  report(5, "sigma = 0 reduction", sigma_zero);
  report(6, "reparameterization statistics", reparameterization);
  report(7, "end-to-end synthetic protocol", end_to_end);
  report(8, "episode sampler counting", episode_counting);
  report(9, "disjointness enforcement", disjointness);
  report(10, "determinism", determinism);
  report(11, "ablation report", ablation);
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
