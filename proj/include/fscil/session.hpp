#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fscil/archive.hpp"
#include "fscil/classifier.hpp"
#include "fscil/embedding_set.hpp"
#include "fscil/metrics.hpp"
#include "fscil/rng.hpp"

namespace fscil {

/// Which half of a base-session episode feeds the loss.
enum class EpisodeLossSource { query, support_and_query };

enum class ClassifierKind { stochastic, deterministic };

const char* classifier_kind_name(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& name);

struct SessionPlan {
  std::vector<ClassId> base_labels;
  std::vector<std::vector<ClassId>> incremental_labels;
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  TrainingConfig training;
  std::size_t base_epochs = 50;
  std::size_t incremental_epochs = 100;
  EpisodeLossSource episode_loss = EpisodeLossSource::query;

  std::size_t num_sessions() const noexcept { return 1 + incremental_labels.size(); }
  const std::vector<ClassId>& labels(std::size_t session) const;

  /// Throws LabelOverlapError when any two label sets share a class and
  /// PlanViolationError on shape problems (empty base, |L_m| != N, K == 0).
  void validate() const;
};

nlohmann::json plan_to_json(const SessionPlan& plan);

template <class Head>
struct SessionState {
  std::size_t current_session = 0;
  Head classifier;
  PrototypeSet prototypes;
  std::vector<std::vector<ClassId>> session_labels;  // L_0 .. L_m
  std::vector<SessionAccuracyRecord> accuracy_history;
  std::vector<std::vector<double>> loss_traces;  // one trace per session
  std::vector<std::string> log;
};

/// Class-mean initialization, episodic training on the joint loss, prototypes = mu.
template <class Head>
SessionState<Head> run_base_session(const EmbeddingSet& train, const SessionPlan& plan,
                                    const Rng& rng);

/// Expands the head with the support means, trains on the joint loss and
/// refreshes every prototype from the trained head.
template <class Head>
SessionState<Head> run_incremental_session(SessionState<Head> state, const EmbeddingSet& support,
                                           const SessionPlan& plan, const Rng& rng);

/// Base / Incremental / All accuracy over test_sets[0..m]. Later test sets
/// are never read.
template <class Head>
SessionAccuracyRecord evaluate_session(const SessionState<Head>& state,
                                       std::span<const EmbeddingSet> test_sets);

/// K samples per class of `labels`, drawn without replacement.
EmbeddingSet select_support(const EmbeddingSet& train, std::span<const ClassId> labels,
                            std::size_t k_shot, Rng& rng);

struct ProtocolResult {
  RunReport report;
  std::vector<std::vector<double>> loss_traces;
  std::vector<std::string> log;
};

/// Base session, then every incremental session, evaluating after each.
/// Randomness for session m comes from streams split off `rng` by tag, so the
/// caller's generator is not advanced.
ProtocolResult run_full_protocol(const SessionPlan& plan, std::span<const EmbeddingSet> train_sets,
                                 std::span<const EmbeddingSet> test_sets, const Rng& rng,
                                 ClassifierKind kind = ClassifierKind::stochastic);

struct PlanShape {
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::optional<std::size_t> num_sessions;  // default: every available group
  std::optional<std::size_t> base_classes;  // when set, must match session 0
};

struct ProtocolInputs {
  SessionPlan plan;
  std::vector<EmbeddingSet> train_sets;
  std::vector<EmbeddingSet> test_sets;
};

/// Splits an archive into per-session train/test sets. Session 0 of the
/// manifest is the base session; the classes of later sessions are pooled in
/// manifest order and regrouped n_way at a time.
ProtocolInputs prepare_protocol(const Archive& archive, const PlanShape& shape,
                                const SessionPlan& settings);

}  // namespace fscil
