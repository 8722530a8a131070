#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fscil/metrics.hpp"
#include "fscil/session.hpp"

namespace fscil {

// Schema (every key optional, unknown keys rejected):
//   {
//     "archive": "data.fcae",
//     "plan": {"base_classes": 20, "n_way": 5, "k_shot": 5, "sessions": 5},
//     "training": {
//       "lambda": 0.6, "logit_scale": 1.0, "base_epochs": 50, "incremental_epochs": 100,
//       "sigma_init": 0.1, "mc_samples": 1, "train_sigma": true,
//       "prototype_loss": "per_prototype" | "literal",
//       "episode_loss": "query" | "both",
//       "optimizer": {"kind": "sgd" | "momentum" | "adam", "learning_rate": 0.01,
//                     "momentum": 0.9, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8}
//     },
//     "classifier": "stochastic" | "deterministic",
//     "seed": 0,
//     "output_dir": "out",
//     "formats": ["table", "csv", "json"]
//   }
struct RunConfig {
  std::string archive;
  PlanShape shape;
  SessionPlan settings;  // training fields only; labels come from the archive
  ClassifierKind classifier = ClassifierKind::stochastic;
  std::optional<std::uint64_t> seed;
  std::string output_dir = "out";
  std::vector<ReportFormat> formats{ReportFormat::table, ReportFormat::csv, ReportFormat::json};

  /// Throws ArgumentError on any out-of-range field. Does not touch disk.
  void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Reads and parses a config file. Missing file is an IoError, bad JSON or
/// schema violations are ArgumentErrors.
RunConfig load_run_config(const std::string& path);

PrototypeLossMode parse_prototype_mode(const std::string& name);
EpisodeLossSource parse_episode_loss(const std::string& name);

/// --seed if given, else the config value, else FSCIL_SEED, else 0.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config);

}  // namespace fscil
