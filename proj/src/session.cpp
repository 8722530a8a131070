#include "fscil/session.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <type_traits>

#include "fscil/episode.hpp"
#include "fscil/errors.hpp"

namespace fscil {
namespace {

std::string join_ids(std::span<const ClassId> ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s;
}

std::vector<ClassId> sorted(std::vector<ClassId> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

template <class Head>
Head init_head(const EmbeddingSet& train, const TrainingConfig& cfg) {
  if constexpr (std::is_same_v<Head, StochasticClassifier>) {
    return init_mu_from_class_means(train, cfg.sigma_init);
  } else {
    return init_weights_from_class_means(train);
  }
}

template <class Head>
Head expand_head(const Head& head, const std::map<ClassId, std::vector<double>>& means,
                 const TrainingConfig& cfg) {
  if constexpr (std::is_same_v<Head, StochasticClassifier>) {
    return expand(head, means, cfg.sigma_init);
  } else {
    return expand(head, means);
  }
}

EmbeddingSet merge(const EmbeddingSet& a, const EmbeddingSet& b) {
  EmbeddingSet out = a;
  for (const auto& r : b.records()) out.add(r);
  return out;
}

}  // namespace

const char* classifier_kind_name(ClassifierKind kind) {
  return kind == ClassifierKind::stochastic ? "stochastic" : "deterministic";
}

ClassifierKind parse_classifier_kind(const std::string& name) {
  if (name == "stochastic") return ClassifierKind::stochastic;
  if (name == "deterministic") return ClassifierKind::deterministic;
  throw ArgumentError("unknown classifier '" + name + "'");
}

const std::vector<ClassId>& SessionPlan::labels(std::size_t session) const {
  if (session == 0) return base_labels;
  if (session > incremental_labels.size()) {
    throw ArgumentError("plan has no session " + std::to_string(session));
  }
  return incremental_labels[session - 1];
}

void SessionPlan::validate() const {
  if (n_way == 0 || k_shot == 0) throw PlanViolationError("n_way and k_shot must be >= 1");
  if (base_labels.empty()) throw PlanViolationError("base session has no classes");
  std::map<ClassId, std::size_t> owner;
  for (std::size_t m = 0; m < num_sessions(); ++m) {
    const auto& ls = labels(m);
    if (m > 0 && ls.size() != n_way) {
      throw PlanViolationError("session " + std::to_string(m) + " has " +
                               std::to_string(ls.size()) + " classes, expected " +
                               std::to_string(n_way));
    }
    for (ClassId c : ls) {
      auto [it, fresh] = owner.emplace(c, m);
      if (!fresh) {
        throw LabelOverlapError("class " + std::to_string(c) + " appears in sessions " +
                                std::to_string(it->second) + " and " + std::to_string(m));
      }
    }
  }
  training.validate();
}

nlohmann::json plan_to_json(const SessionPlan& plan) {
  const auto& t = plan.training;
  return {
      {"num_sessions", plan.num_sessions()},
      {"base_classes", plan.base_labels.size()},
      {"n_way", plan.n_way},
      {"k_shot", plan.k_shot},
      {"base_epochs", plan.base_epochs},
      {"incremental_epochs", plan.incremental_epochs},
      {"episode_loss", plan.episode_loss == EpisodeLossSource::query ? "query" : "both"},
      {"lambda", t.lambda},
      {"logit_scale", t.logit_scale},
      {"mc_samples", t.mc_samples_per_step},
      {"sigma_init", t.sigma_init},
      {"train_sigma", t.train_sigma},
      {"prototype_loss", t.prototype_mode == PrototypeLossMode::per_prototype ? "per_prototype"
                                                                              : "literal"},
      {"optimizer", optimizer_name(t.optimizer.kind)},
      {"learning_rate", t.optimizer.learning_rate},
  };
}

template <class Head>
SessionState<Head> run_base_session(const EmbeddingSet& train, const SessionPlan& plan,
                                    const Rng& rng) {
  plan.validate();
  const auto present = train.class_ids();
  if (present != sorted(plan.base_labels)) {
    throw PlanViolationError("base training classes {" + join_ids(present) +
                             "} do not match the plan's base labels {" +
                             join_ids(sorted(plan.base_labels)) + "}");
  }
  for (const auto& [id, idx] : train.indices_by_class()) {
    if (idx.size() < 2 * plan.k_shot) {
      throw PlanViolationError("base class " + std::to_string(id) + " has " +
                               std::to_string(idx.size()) + " samples, episodes need " +
                               std::to_string(2 * plan.k_shot));
    }
  }
  if (present.size() < plan.n_way) {
    throw PlanViolationError("base session has fewer classes than n_way");
  }

  SessionState<Head> state{0, init_head<Head>(train, plan.training), {}, {plan.base_labels}, {}, {}, {}};
  Rng sampler = rng.split("session0/episodes");
  Rng noise = rng.split("session0/noise");
  auto& log = state.log;
  BatchSchedule schedule = [&](std::size_t epoch) {
    auto epoch_eps = epoch_episodes(train, plan.n_way, plan.k_shot, sampler);
    if (epoch_eps.unused_samples > 0) {
      log.push_back("session 0 epoch " + std::to_string(epoch) + ": " +
                    std::to_string(epoch_eps.episodes.size()) + " episodes, " +
                    std::to_string(epoch_eps.unused_samples) + " samples unused");
    }
    std::vector<EmbeddingSet> batches;
    for (auto& ep : epoch_eps.episodes) {
      batches.push_back(plan.episode_loss == EpisodeLossSource::query
                            ? std::move(ep.query)
                            : merge(ep.support, ep.query));
    }
    return batches;
  };
  TrainingConfig cfg = plan.training;
  cfg.epochs = plan.base_epochs;
  state.loss_traces.push_back(fscil::train(state.classifier, schedule, nullptr, cfg, noise).losses);
  state.prototypes = prototypes_from(state.classifier);
  return state;
}

template <class Head>
SessionState<Head> run_incremental_session(SessionState<Head> state, const EmbeddingSet& support,
                                           const SessionPlan& plan, const Rng& rng) {
  plan.validate();
  const std::size_t m = state.current_session + 1;
  const auto present = support.class_ids();
  for (ClassId c : present) {
    if (state.classifier.contains(c)) {
      throw LabelOverlapError("support class " + std::to_string(c) + " was seen in an earlier session");
    }
  }
  if (m >= plan.num_sessions()) {
    throw PlanViolationError("plan has no session " + std::to_string(m));
  }
  if (present != sorted(plan.labels(m))) {
    throw PlanViolationError("session " + std::to_string(m) + " support classes {" +
                             join_ids(present) + "} do not match the plan {" +
                             join_ids(sorted(plan.labels(m))) + "}");
  }
  for (const auto& [id, idx] : support.indices_by_class()) {
    if (idx.size() != plan.k_shot) {
      throw PlanViolationError("support class " + std::to_string(id) + " has " +
                               std::to_string(idx.size()) + " shots, expected " +
                               std::to_string(plan.k_shot));
    }
  }

  const PrototypeSet old_prototypes = state.prototypes;
  state.classifier = expand_head(state.classifier, class_means(support), plan.training);
  Rng noise = rng.split("session" + std::to_string(m) + "/noise");
  TrainingConfig cfg = plan.training;
  cfg.epochs = plan.incremental_epochs;
  state.loss_traces.push_back(
      fscil::train(state.classifier, fixed_batch(support), &old_prototypes, cfg, noise).losses);
  state.prototypes = prototypes_from(state.classifier);
  state.session_labels.push_back(plan.labels(m));
  state.current_session = m;
  return state;
}

template <class Head>
SessionAccuracyRecord evaluate_session(const SessionState<Head>& state,
                                       std::span<const EmbeddingSet> test_sets) {
  const std::size_t m = state.current_session;
  if (test_sets.size() < m + 1) {
    throw DataError("evaluation at session " + std::to_string(m) + " needs " +
                    std::to_string(m + 1) + " test sets");
  }
  const std::set<ClassId> base(state.session_labels.front().begin(),
                               state.session_labels.front().end());
  std::vector<ClassId> pred_all, truth_all, pred_base, truth_base, pred_incr, truth_incr;
  for (std::size_t s = 0; s <= m; ++s) {
    for (const auto& r : test_sets[s].records()) {
      if (!state.classifier.contains(r.class_id)) {
        throw DataError("test sample " + std::to_string(r.sample_id) + " has unseen class " +
                        std::to_string(r.class_id));
      }
      const ClassId p = predict(r.vector, state.classifier);
      pred_all.push_back(p);
      truth_all.push_back(r.class_id);
      const bool is_base = base.count(r.class_id) != 0;
      (is_base ? pred_base : pred_incr).push_back(p);
      (is_base ? truth_base : truth_incr).push_back(r.class_id);
    }
  }
  if (truth_all.empty()) throw DataError("no test samples up to session " + std::to_string(m));
  SessionAccuracyRecord rec;
  rec.session_index = m;
  rec.all_acc = accuracy(pred_all, truth_all);
  if (!truth_base.empty()) rec.base_acc = accuracy(pred_base, truth_base);
  if (m > 0) {
    if (truth_incr.empty()) {
      throw DataError("session " + std::to_string(m) + " has no incremental test samples");
    }
    rec.incr_acc = accuracy(pred_incr, truth_incr);
  }
  return rec;
}

EmbeddingSet select_support(const EmbeddingSet& train, std::span<const ClassId> labels,
                            std::size_t k_shot, Rng& rng) {
  const auto groups = train.indices_by_class();
  EmbeddingSet support(train.dim());
  for (ClassId c : sorted({labels.begin(), labels.end()})) {
    auto it = groups.find(c);
    const std::size_t have = it == groups.end() ? 0 : it->second.size();
    if (have < k_shot) {
      throw PlanViolationError("class " + std::to_string(c) + " has " + std::to_string(have) +
                               " training samples, " + std::to_string(k_shot) + " shots requested");
    }
    auto pool = it->second;
    for (std::size_t k = 0; k < k_shot; ++k) {
      const std::size_t j = k + rng.uniform_index(pool.size() - k);
      std::swap(pool[k], pool[j]);
      support.add(train[pool[k]]);
    }
  }
  return support;
}

namespace {

template <class Head>
ProtocolResult run_protocol_with(const SessionPlan& plan, std::span<const EmbeddingSet> train_sets,
                                 std::span<const EmbeddingSet> test_sets, const Rng& rng,
                                 ClassifierKind kind) {
  plan.validate();
  const std::size_t sessions = plan.num_sessions();
  if (train_sets.size() != sessions || test_sets.size() != sessions) {
    throw PlanViolationError("plan has " + std::to_string(sessions) + " sessions but data has " +
                             std::to_string(train_sets.size()) + " train and " +
                             std::to_string(test_sets.size()) + " test sets");
  }
  auto state = run_base_session<Head>(train_sets[0], plan, rng);
  state.accuracy_history.push_back(evaluate_session(state, test_sets.first(1)));
  for (std::size_t m = 1; m < sessions; ++m) {
    Rng support_rng = rng.split("session" + std::to_string(m) + "/support");
    const auto& present = train_sets[m].class_ids();
    if (present != sorted(plan.labels(m))) {
      throw PlanViolationError("session " + std::to_string(m) + " training classes {" +
                               join_ids(present) + "} do not match the plan");
    }
    auto support = select_support(train_sets[m], plan.labels(m), plan.k_shot, support_rng);
    state = run_incremental_session(std::move(state), support, plan, rng);
    state.accuracy_history.push_back(evaluate_session(state, test_sets.first(m + 1)));
  }
  ProtocolResult result;
  result.report = make_report(state.accuracy_history, classifier_kind_name(kind),
                              plan_to_json(plan), rng.seed());
  result.loss_traces = std::move(state.loss_traces);
  result.log = std::move(state.log);
  return result;
}

}  // namespace

ProtocolResult run_full_protocol(const SessionPlan& plan, std::span<const EmbeddingSet> train_sets,
                                 std::span<const EmbeddingSet> test_sets, const Rng& rng,
                                 ClassifierKind kind) {
  if (kind == ClassifierKind::stochastic) {
    return run_protocol_with<StochasticClassifier>(plan, train_sets, test_sets, rng, kind);
  }
  return run_protocol_with<DeterministicClassifier>(plan, train_sets, test_sets, rng, kind);
}

ProtocolInputs prepare_protocol(const Archive& archive, const PlanShape& shape,
                                const SessionPlan& settings) {
  const auto& manifest = archive.manifest;
  if (manifest.sessions.empty()) throw PlanViolationError("archive manifest has no sessions");
  if (shape.n_way == 0 || shape.k_shot == 0) throw PlanViolationError("n_way and k_shot must be >= 1");
  const auto labels = session_label_sets(archive.set, manifest);

  ProtocolInputs in;
  in.plan = settings;
  in.plan.n_way = shape.n_way;
  in.plan.k_shot = shape.k_shot;
  in.plan.base_labels = labels[0];
  in.plan.incremental_labels.clear();
  if (shape.base_classes && *shape.base_classes != labels[0].size()) {
    throw PlanViolationError("archive base session has " + std::to_string(labels[0].size()) +
                             " classes, plan asks for " + std::to_string(*shape.base_classes));
  }

  std::vector<ClassId> pooled;
  for (std::size_t s = 1; s < labels.size(); ++s) {
    pooled.insert(pooled.end(), labels[s].begin(), labels[s].end());
  }
  if (pooled.size() % shape.n_way != 0) {
    throw PlanViolationError(std::to_string(pooled.size()) + " incremental classes do not split into " +
                             std::to_string(shape.n_way) + "-way sessions");
  }
  const std::size_t available = 1 + pooled.size() / shape.n_way;
  const std::size_t sessions = shape.num_sessions.value_or(available);
  if (sessions == 0 || sessions > available) {
    throw PlanViolationError("archive supports at most " + std::to_string(available) +
                             " sessions at " + std::to_string(shape.n_way) + "-way, " +
                             std::to_string(sessions) + " requested");
  }
  for (std::size_t m = 1; m < sessions; ++m) {
    auto first = pooled.begin() + static_cast<std::ptrdiff_t>((m - 1) * shape.n_way);
    in.plan.incremental_labels.emplace_back(first, first + static_cast<std::ptrdiff_t>(shape.n_way));
  }

  std::vector<SampleId> all_train, all_test;
  for (const auto& s : manifest.sessions) {
    all_train.insert(all_train.end(), s.train.begin(), s.train.end());
    all_test.insert(all_test.end(), s.test.begin(), s.test.end());
  }
  const auto train_pool = archive.set.subset(all_train);
  const auto test_pool = archive.set.subset(all_test);
  for (std::size_t m = 0; m < sessions; ++m) {
    in.train_sets.push_back(train_pool.filter_classes(in.plan.labels(m)));
    in.test_sets.push_back(test_pool.filter_classes(in.plan.labels(m)));
  }
  in.plan.validate();
  return in;
}

template SessionState<StochasticClassifier> run_base_session(const EmbeddingSet&,
                                                             const SessionPlan&, const Rng&);
template SessionState<DeterministicClassifier> run_base_session(const EmbeddingSet&,
                                                                const SessionPlan&, const Rng&);
template SessionState<StochasticClassifier> run_incremental_session(
    SessionState<StochasticClassifier>, const EmbeddingSet&, const SessionPlan&, const Rng&);
template SessionState<DeterministicClassifier> run_incremental_session(
    SessionState<DeterministicClassifier>, const EmbeddingSet&, const SessionPlan&, const Rng&);
template SessionAccuracyRecord evaluate_session(const SessionState<StochasticClassifier>&,
                                                std::span<const EmbeddingSet>);
template SessionAccuracyRecord evaluate_session(const SessionState<DeterministicClassifier>&,
                                                std::span<const EmbeddingSet>);

}  // namespace fscil
