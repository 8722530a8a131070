#include "fscil/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fscil/archive.hpp"
#include "fscil/errors.hpp"
#include "fscil/gradcheck.hpp"
#include "fscil/metrics.hpp"
#include "fscil/rng.hpp"
#include "fscil/run_config.hpp"
#include "fscil/session.hpp"
#include "fscil/synthetic.hpp"

namespace fscil {
namespace {

namespace fs = std::filesystem;

int exit_code_for(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::validation: return kExitValidation;
    case ErrorCategory::runtime: return kExitRuntime;
    case ErrorCategory::io: return kExitIo;
  }
  return kExitRuntime;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

template <class T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target,
                   const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}


struct SynthFlags {
  SyntheticSpec spec;
  std::string rule = "random";
  std::string out = "synthetic.fcae";
  std::optional<std::uint64_t> seed;
};

void register_synth(CLI::App* sub, SynthFlags& f) {
  sub->add_option("--classes", f.spec.num_classes, "number of classes")->capture_default_str();
  sub->add_option("--per-class", f.spec.samples_per_class, "samples per class")->capture_default_str();
  sub->add_option("--dim", f.spec.dim, "embedding dimension")->capture_default_str();
  sub->add_option("--noise", f.spec.intra_class_noise, "intra-class noise std")->capture_default_str();
  sub->add_option("--center-rule", f.rule, "random | orthogonal")->capture_default_str();
  sub->add_option("--base-classes", f.spec.base_classes,
                  "classes in session 0 (0 = all)")->capture_default_str();
  sub->add_option("--n-way", f.spec.n_way, "classes per incremental session")->capture_default_str();
  sub->add_option("--test-fraction", f.spec.test_fraction, "test share per class")->capture_default_str();
  sub->add_option("--out,-o", f.out, "archive path")->capture_default_str();
  optional_flag(sub, "--seed", f.seed, "root seed (default FSCIL_SEED or 0)");
}

int cmd_synth(SynthFlags f, std::ostream& out) {
  f.spec.rule = parse_center_rule(f.rule);
  f.spec.seed = resolve_seed(f.seed, std::nullopt);
  const auto archive = generate_synthetic(f.spec);
  write_archive(archive.set, archive.manifest, f.out);
  out << "wrote " << archive.set.size() << " records (dim " << archive.manifest.dim << ", "
      << archive.manifest.classes.size() << " classes, " << archive.manifest.sessions.size()
      << " sessions) to " << f.out << "\n";
  return kExitOk;
}


struct RunFlags {
  std::optional<std::string> config, archive, out, classifier, optimizer, prototype_loss, episode_loss;
  std::optional<std::size_t> n_way, k_shot, sessions, base_classes, base_epochs, incremental_epochs,
      mc_samples;
  std::optional<double> lambda, logit_scale, learning_rate, sigma_init;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> formats;
  bool fixed_sigma = false;
};

void register_run_flags(CLI::App* sub, RunFlags& f, bool with_plan_axes) {
  optional_flag(sub, "--config,-c", f.config, "JSON config file; flags override it");
  optional_flag(sub, "--archive,-a", f.archive, "FCAE archive");
  optional_flag(sub, "--out,-o", f.out, "output directory");
  optional_flag(sub, "--classifier", f.classifier, "stochastic | deterministic");
  if (with_plan_axes) {
    optional_flag(sub, "--n-way", f.n_way, "classes per incremental session");
    optional_flag(sub, "--k-shot", f.k_shot, "shots per class");
  }
  optional_flag(sub, "--sessions", f.sessions, "total sessions including the base session");
  optional_flag(sub, "--base-classes", f.base_classes, "expected base class count");
  optional_flag(sub, "--lambda", f.lambda, "prototype loss weight in [0, 1]");
  optional_flag(sub, "--logit-scale", f.logit_scale, "cosine logit scale");
  optional_flag(sub, "--base-epochs", f.base_epochs, "epochs in session 0");
  optional_flag(sub, "--incremental-epochs", f.incremental_epochs, "epochs per incremental session");
  optional_flag(sub, "--mc-samples", f.mc_samples, "weight draws per step");
  optional_flag(sub, "--sigma-init", f.sigma_init, "initial sigma entries");
  optional_flag(sub, "--optimizer", f.optimizer, "sgd | momentum | adam");
  optional_flag(sub, "--lr", f.learning_rate, "learning rate");
  optional_flag(sub, "--prototype-loss", f.prototype_loss, "per_prototype | literal");
  optional_flag(sub, "--episode-loss", f.episode_loss, "query | both");
  optional_flag(sub, "--seed", f.seed, "root seed (default: config, FSCIL_SEED, 0)");
  sub->add_option("--format", f.formats, "table, csv, json (repeatable)")->delimiter(',');
  sub->add_flag("--fixed-sigma", f.fixed_sigma, "keep sigma at its initial value");
}

RunConfig build_config(const RunFlags& f) {
  RunConfig cfg = f.config ? load_run_config(*f.config) : RunConfig{};
  auto& t = cfg.settings.training;
  if (f.archive) cfg.archive = *f.archive;
  if (f.out) cfg.output_dir = *f.out;
  if (f.classifier) cfg.classifier = parse_classifier_kind(*f.classifier);
  if (f.n_way) cfg.shape.n_way = *f.n_way;
  if (f.k_shot) cfg.shape.k_shot = *f.k_shot;
  if (f.sessions) cfg.shape.num_sessions = *f.sessions;
  if (f.base_classes) cfg.shape.base_classes = *f.base_classes;
  if (f.lambda) t.lambda = *f.lambda;
  if (f.logit_scale) t.logit_scale = *f.logit_scale;
  if (f.base_epochs) cfg.settings.base_epochs = *f.base_epochs;
  if (f.incremental_epochs) cfg.settings.incremental_epochs = *f.incremental_epochs;
  if (f.mc_samples) t.mc_samples_per_step = *f.mc_samples;
  if (f.sigma_init) t.sigma_init = *f.sigma_init;
  if (f.optimizer) t.optimizer.kind = parse_optimizer_kind(*f.optimizer);
  if (f.learning_rate) t.optimizer.learning_rate = *f.learning_rate;
  if (f.prototype_loss) t.prototype_mode = parse_prototype_mode(*f.prototype_loss);
  if (f.episode_loss) cfg.settings.episode_loss = parse_episode_loss(*f.episode_loss);
  if (f.fixed_sigma) t.train_sigma = false;
  if (!f.formats.empty()) {
    cfg.formats.clear();
    for (const auto& name : f.formats) cfg.formats.push_back(parse_report_format(name));
  }
  cfg.seed = resolve_seed(f.seed, cfg.seed);
  cfg.validate();
  return cfg;
}

ProtocolResult execute(const RunConfig& cfg, const Archive& archive) {
  const auto in = prepare_protocol(archive, cfg.shape, cfg.settings);
  return run_full_protocol(in.plan, in.train_sets, in.test_sets, Rng(*cfg.seed), cfg.classifier);
}

std::string loss_trace_csv(const std::vector<std::vector<double>>& traces) {
  std::string s = "session,step,loss\n";
  for (std::size_t m = 0; m < traces.size(); ++m) {
    for (std::size_t i = 0; i < traces[m].size(); ++i) {
      s += std::to_string(m) + "," + std::to_string(i) + "," + g17(traces[m][i]) + "\n";
    }
  }
  return s;
}

int cmd_run(const RunFlags& f, std::ostream& out) {
  const auto cfg = build_config(f);
  const auto archive = read_archive(cfg.archive);
  const auto result = execute(cfg, archive);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  for (auto format : cfg.formats) {
    write_file_atomic(dir / (std::string("report") + format_extension(format)),
                      render_report(result.report, format));
  }
  write_file_atomic(dir / "loss_traces.csv", loss_trace_csv(result.loss_traces));
  std::string log;
  for (const auto& line : result.log) log += line + "\n";
  write_file_atomic(dir / "run.log", log);

  emit_report(result.report, ReportFormat::table, out);
  out << "reports written to " << dir.string() << "\n";
  return kExitOk;
}

struct SweepFlags {
  RunFlags run;
  std::vector<std::size_t> n_list{5};
  std::vector<std::size_t> k_list{5};
};

int cmd_sweep(const SweepFlags& f, std::ostream& out) {
  if (f.n_list.empty() || f.k_list.empty()) throw ArgumentError("sweep needs non-empty --n and --k lists");
  auto base_cfg = build_config(f.run);
  const auto archive = read_archive(base_cfg.archive);

  // grid[k_index][n_index]
  std::vector<std::vector<std::optional<double>>> grid(
      f.k_list.size(), std::vector<std::optional<double>>(f.n_list.size()));
  for (std::size_t ki = 0; ki < f.k_list.size(); ++ki) {
    for (std::size_t ni = 0; ni < f.n_list.size(); ++ni) {
      RunConfig cfg = base_cfg;
      cfg.shape.n_way = f.n_list[ni];
      cfg.shape.k_shot = f.k_list[ki];
      try {
        cfg.validate();
        const auto result = execute(cfg, archive);
        grid[ki][ni] = result.report.records.back().all_acc;
      } catch (const Error& e) {
        if (e.category() != ErrorCategory::validation) throw;
        out << "cell N=" << cfg.shape.n_way << " K=" << cfg.shape.k_shot << " infeasible: " << e.name()
            << ": " << e.what() << "\n";
      }
    }
  }

  std::string csv = "K\\N";
  for (std::size_t n : f.n_list) csv += "," + std::to_string(n);
  csv += "\n";
  for (std::size_t ki = 0; ki < f.k_list.size(); ++ki) {
    csv += std::to_string(f.k_list[ki]);
    for (const auto& cell : grid[ki]) csv += "," + (cell ? g17(*cell) : std::string());
    csv += "\n";
  }
  const fs::path dir = base_cfg.output_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "sweep.csv", csv);

  out << "last-session All accuracy (rows K, columns N)\n" << std::fixed << std::setprecision(2);
  out << std::setw(6) << "K\\N";
  for (std::size_t n : f.n_list) out << std::setw(9) << n;
  out << "\n";
  for (std::size_t ki = 0; ki < f.k_list.size(); ++ki) {
    out << std::setw(6) << f.k_list[ki];
    for (const auto& cell : grid[ki]) {
      if (cell) {
        out << std::setw(9) << *cell;
      } else {
        out << std::setw(9) << "-";
      }
    }
    out << "\n";
  }

  // Informational only: more shots are expected, not required, to help.
  std::size_t flagged = 0;
  for (std::size_t ni = 0; ni < f.n_list.size(); ++ni) {
    std::vector<std::pair<std::size_t, double>> by_k;
    for (std::size_t ki = 0; ki < f.k_list.size(); ++ki) {
      if (grid[ki][ni]) by_k.emplace_back(f.k_list[ki], *grid[ki][ni]);
    }
    std::sort(by_k.begin(), by_k.end());
    for (std::size_t i = 1; i < by_k.size(); ++i) {
      if (by_k[i].second < by_k[i - 1].second) {
        ++flagged;
        out << "monotonicity: N=" << f.n_list[ni] << " accuracy fell from " << by_k[i - 1].second
            << " (K=" << by_k[i - 1].first << ") to " << by_k[i].second << " (K=" << by_k[i].first
            << ")\n";
      }
    }
  }
  if (flagged == 0) out << "monotonicity: accuracy never fell as K grew\n";
  out << "grid written to " << (dir / "sweep.csv").string() << "\n";
  out.unsetf(std::ios::floatfield);
  return kExitOk;
}


struct GradFlags {
  std::optional<std::uint64_t> seed;
  std::size_t instances = 1000;
  std::size_t configurations = 100;
  std::size_t max_dim = 16;
  std::size_t max_classes = 8;
  double step = 1e-6;
  bool sigma_zero = false;
};

int cmd_gradcheck(const GradFlags& f, std::ostream& out) {
  if (f.max_dim < 2 || f.max_classes < 1) throw ArgumentError("need --max-dim >= 2 and --max-classes >= 1");
  if (!(f.step > 0.0)) throw ArgumentError("--step must be positive");
  const std::uint64_t seed = resolve_seed(f.seed, std::nullopt);
  gradcheck::InstanceLimits limits;
  limits.max_dim = f.max_dim;
  limits.max_classes = f.max_classes;

  if (f.sigma_zero) {
    const auto r = gradcheck::run_sigma_zero_suite(seed, f.configurations, limits);
    const bool ok = r.max_loss_gap <= 1e-12 && r.max_mu_grad_gap <= 1e-12;
    out << "sigma-zero reduction seed=" << seed << " configurations=" << r.configurations << "\n"
        << "max |loss_stochastic - loss_deterministic| = " << sci(r.max_loss_gap) << "\n"
        << "max |grad_mu - grad_weights|             = " << sci(r.max_mu_grad_gap) << "\n"
        << "result: " << (ok ? "PASS" : "FAIL") << " (tolerance 1e-12)\n";
    return ok ? kExitOk : kExitRuntime;
  }

  gradcheck::SuiteOptions opt;
  opt.seed = seed;
  opt.instances = f.instances;
  opt.limits = limits;
  opt.step = f.step;
  const auto report = gradcheck::run_gradient_suite(opt);
  out << "gradient check seed=" << seed << " instances=" << f.instances << " step=" << f.step << "\n";
  out << std::left << std::setw(20) << "loss" << std::right << std::setw(10) << "coords"
      << std::setw(16) << "worst_rel" << std::setw(16) << "worst_abs" << std::setw(16) << "loss_gap"
      << std::setw(10) << "refined" << std::setw(10) << "failures" << "\n";
  for (const auto& [name, s] : report.per_loss) {
    out << std::left << std::setw(20) << name << std::right << std::setw(10) << s.coordinates
        << std::setw(16) << sci(s.worst_relative) << std::setw(16) << sci(s.worst_absolute)
        << std::setw(16) << sci(s.worst_loss_gap) << std::setw(10) << s.refined << std::setw(10)
        << s.failures << "\n";
  }
  const bool ok = report.passed();
  out << "result: " << (ok ? "PASS" : "FAIL") << " (relative 1e-5, absolute 1e-8)\n";
  return ok ? kExitOk : kExitRuntime;
}


struct ReportFlags {
  std::string input;
  std::string format = "table";
  std::optional<std::string> out;
};

int cmd_report(const ReportFlags& f, std::ostream& out) {
  const auto format = parse_report_format(f.format);
  std::ifstream in(f.input, std::ios::binary);
  if (!in) throw IoError("cannot open report '" + f.input + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("report '" + f.input + "' is not valid JSON: " + e.what());
  }
  const auto report = report_from_json(j);
  check_report_consistency(report);
  const auto text = render_report(report, format);
  if (f.out) {
    write_file_atomic(*f.out, text);
  } else {
    out << text;
  }
  return kExitOk;
}

int cmd_validate(const std::string& path, std::ostream& out) {
  const auto archive = read_archive(path);
  const auto labels = session_label_sets(archive.set, archive.manifest);
  out << path << ": ok\n"
      << "records " << archive.set.size() << ", dim " << archive.manifest.dim << ", classes "
      << archive.manifest.classes.size() << ", sessions " << archive.manifest.sessions.size() << "\n";
  for (std::size_t m = 0; m < labels.size(); ++m) {
    const auto& s = archive.manifest.sessions[m];
    out << "  session " << m << ": " << labels[m].size() << " classes, " << s.train.size()
        << " train, " << s.test.size() << " test\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot class-incremental classification with a stochastic cosine head", "fscil"};
  app.require_subcommand(1);

  SynthFlags synth;
  register_synth(app.add_subcommand("synth", "generate a synthetic FCAE archive"), synth);

  RunFlags run;
  register_run_flags(app.add_subcommand("run", "train and evaluate every session"), run, true);

  SweepFlags sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid of last-session accuracy over N and K");
  register_run_flags(sweep_cmd, sweep.run, false);
  sweep_cmd->add_option("--n", sweep.n_list, "N values, comma separated")->delimiter(',');
  sweep_cmd->add_option("--k", sweep.k_list, "K values, comma separated")->delimiter(',');

  GradFlags grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  optional_flag(grad_cmd, "--seed", grad.seed, "root seed (default FSCIL_SEED or 0)");
  grad_cmd->add_option("--instances", grad.instances, "random instances")->capture_default_str();
  grad_cmd->add_option("--configurations", grad.configurations,
                       "configurations in --sigma-zero mode")->capture_default_str();
  grad_cmd->add_option("--max-dim", grad.max_dim, "largest embedding dim")->capture_default_str();
  grad_cmd->add_option("--max-classes", grad.max_classes, "largest class count")->capture_default_str();
  grad_cmd->add_option("--step", grad.step, "central difference step")->capture_default_str();
  grad_cmd->add_flag("--sigma-zero", grad.sigma_zero, "compare stochastic and deterministic heads at sigma = 0");

  ReportFlags report;
  auto* report_cmd = app.add_subcommand("report", "re-render a json report");
  report_cmd->add_option("input", report.input, "report.json")->required();
  report_cmd->add_option("--format", report.format, "table | csv | json")->capture_default_str();
  optional_flag(report_cmd, "--out,-o", report.out, "write here instead of stdout");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "check an archive and its manifest");
  validate_cmd->add_option("archive", validate_path, "archive path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "ArgumentError: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (app.got_subcommand("synth")) return cmd_synth(synth, out);
    if (app.got_subcommand("run")) return cmd_run(run, out);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep, out);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(grad, out);
    if (app.got_subcommand("report")) return cmd_report(report, out);
    if (app.got_subcommand("validate")) return cmd_validate(validate_path, out);
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "IoError: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "InternalError: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace fscil
