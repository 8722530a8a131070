#include "fscil/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fscil/errors.hpp"

namespace fscil {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ArgumentError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ArgumentError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read_field(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->template get<T>();
  } catch (const json::exception&) {
    throw ArgumentError(where + "." + key + " has the wrong type");
  }
}

std::size_t read_count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    throw ArgumentError(where + "." + key + " must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

const char* prototype_mode_name(PrototypeLossMode m) {
  return m == PrototypeLossMode::per_prototype ? "per_prototype" : "literal";
}

const char* episode_loss_name(EpisodeLossSource s) {
  return s == EpisodeLossSource::query ? "query" : "both";
}

}  // namespace

PrototypeLossMode parse_prototype_mode(const std::string& name) {
  if (name == "per_prototype") return PrototypeLossMode::per_prototype;
  if (name == "literal") return PrototypeLossMode::literal;
  throw ArgumentError("unknown prototype loss mode '" + name + "'");
}

EpisodeLossSource parse_episode_loss(const std::string& name) {
  if (name == "query") return EpisodeLossSource::query;
  if (name == "both") return EpisodeLossSource::support_and_query;
  throw ArgumentError("unknown episode loss source '" + name + "'");
}

void RunConfig::validate() const {
  if (archive.empty()) throw ArgumentError("no archive given");
  if (shape.n_way == 0) throw ArgumentError("n_way must be >= 1");
  if (shape.k_shot == 0) throw ArgumentError("k_shot must be >= 1");
  if (shape.num_sessions && *shape.num_sessions == 0) throw ArgumentError("sessions must be >= 1");
  if (shape.base_classes && *shape.base_classes == 0) throw ArgumentError("base_classes must be >= 1");
  if (output_dir.empty()) throw ArgumentError("output_dir is empty");
  if (formats.empty()) throw ArgumentError("at least one report format is required");
  settings.training.validate();
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  reject_unknown(j, {"archive", "plan", "training", "classifier", "seed", "output_dir", "formats"},
                 "config");
  read_field(j, "archive", cfg.archive, "config");
  read_field(j, "output_dir", cfg.output_dir, "config");
  if (auto it = j.find("classifier"); it != j.end()) {
    cfg.classifier = parse_classifier_kind(it->is_string() ? it->get<std::string>() : "");
  }
  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
      throw ArgumentError("config.seed must be a non-negative integer");
    }
    cfg.seed = it->get<std::uint64_t>();
  }
  if (auto it = j.find("formats"); it != j.end()) {
    if (!it->is_array()) throw ArgumentError("config.formats must be an array");
    cfg.formats.clear();
    for (const auto& f : *it) {
      if (!f.is_string()) throw ArgumentError("config.formats entries must be strings");
      cfg.formats.push_back(parse_report_format(f.get<std::string>()));
    }
  }

  if (auto it = j.find("plan"); it != j.end()) {
    const auto& p = *it;
    reject_unknown(p, {"base_classes", "n_way", "k_shot", "sessions"}, "plan");
    cfg.shape.n_way = read_count(p, "n_way", cfg.shape.n_way, "plan");
    cfg.shape.k_shot = read_count(p, "k_shot", cfg.shape.k_shot, "plan");
    if (p.contains("sessions")) cfg.shape.num_sessions = read_count(p, "sessions", 0, "plan");
    if (p.contains("base_classes")) cfg.shape.base_classes = read_count(p, "base_classes", 0, "plan");
  }

  if (auto it = j.find("training"); it != j.end()) {
    const auto& t = *it;
    const std::string where = "training";
    reject_unknown(t,
                   {"lambda", "logit_scale", "base_epochs", "incremental_epochs", "sigma_init",
                    "mc_samples", "train_sigma", "prototype_loss", "episode_loss", "optimizer"},
                   where);
    auto& s = cfg.settings;
    read_field(t, "lambda", s.training.lambda, where);
    read_field(t, "logit_scale", s.training.logit_scale, where);
    read_field(t, "sigma_init", s.training.sigma_init, where);
    read_field(t, "train_sigma", s.training.train_sigma, where);
    s.base_epochs = read_count(t, "base_epochs", s.base_epochs, where);
    s.incremental_epochs = read_count(t, "incremental_epochs", s.incremental_epochs, where);
    s.training.mc_samples_per_step = read_count(t, "mc_samples", s.training.mc_samples_per_step, where);
    std::string name;
    if (t.contains("prototype_loss")) {
      read_field(t, "prototype_loss", name, where);
      s.training.prototype_mode = parse_prototype_mode(name);
    }
    if (t.contains("episode_loss")) {
      read_field(t, "episode_loss", name, where);
      s.episode_loss = parse_episode_loss(name);
    }
    if (auto ot = t.find("optimizer"); ot != t.end()) {
      const std::string ow = "training.optimizer";
      reject_unknown(*ot, {"kind", "learning_rate", "momentum", "beta1", "beta2", "epsilon"}, ow);
      auto& o = s.training.optimizer;
      if (ot->contains("kind")) {
        read_field(*ot, "kind", name, ow);
        o.kind = parse_optimizer_kind(name);
      }
      read_field(*ot, "learning_rate", o.learning_rate, ow);
      read_field(*ot, "momentum", o.momentum, ow);
      read_field(*ot, "beta1", o.beta1, ow);
      read_field(*ot, "beta2", o.beta2, ow);
      read_field(*ot, "epsilon", o.epsilon, ow);
    }
  }
  return cfg;
}

json run_config_to_json(const RunConfig& cfg) {
  const auto& s = cfg.settings;
  const auto& o = s.training.optimizer;
  json plan = {{"n_way", cfg.shape.n_way}, {"k_shot", cfg.shape.k_shot}};
  if (cfg.shape.num_sessions) plan["sessions"] = *cfg.shape.num_sessions;
  if (cfg.shape.base_classes) plan["base_classes"] = *cfg.shape.base_classes;
  json formats = json::array();
  for (auto f : cfg.formats) {
    formats.push_back(f == ReportFormat::table ? "table" : f == ReportFormat::csv ? "csv" : "json");
  }
  json out = {
      {"archive", cfg.archive},
      {"plan", plan},
      {"training",
       {{"lambda", s.training.lambda},
        {"logit_scale", s.training.logit_scale},
        {"base_epochs", s.base_epochs},
        {"incremental_epochs", s.incremental_epochs},
        {"sigma_init", s.training.sigma_init},
        {"mc_samples", s.training.mc_samples_per_step},
        {"train_sigma", s.training.train_sigma},
        {"prototype_loss", prototype_mode_name(s.training.prototype_mode)},
        {"episode_loss", episode_loss_name(s.episode_loss)},
        {"optimizer",
         {{"kind", optimizer_name(o.kind)},
          {"learning_rate", o.learning_rate},
          {"momentum", o.momentum},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon}}}}},
      {"classifier", classifier_kind_name(cfg.classifier)},
      {"output_dir", cfg.output_dir},
      {"formats", formats},
  };
  if (cfg.seed) out["seed"] = *cfg.seed;
  return out;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ArgumentError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::optional<std::uint64_t> config) {
  if (flag) return *flag;
  if (config) return *config;
  if (const char* env = std::getenv("FSCIL_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') {
      throw ArgumentError(std::string("FSCIL_SEED is not a non-negative integer: '") + env + "'");
    }
    return v;
  }
  return 0;
}

}  // namespace fscil
