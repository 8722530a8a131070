#include "fscil/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "fscil/errors.hpp"

namespace fscil {
namespace {

constexpr ClassGroup kGroups[] = {ClassGroup::base, ClassGroup::incremental, ClassGroup::all};

const char* csv_group(ClassGroup g) {
  switch (g) {
    case ClassGroup::base: return "Base";
    case ClassGroup::incremental: return "Incremental";
    case ClassGroup::all: return "All";
  }
  return "?";
}

const char* json_group(ClassGroup g) {
  switch (g) {
    case ClassGroup::base: return "base";
    case ClassGroup::incremental: return "incremental";
    case ClassGroup::all: return "all";
  }
  return "?";
}

std::optional<double> field(const SessionAccuracyRecord& r, ClassGroup g) {
  switch (g) {
    case ClassGroup::base: return r.base_acc;
    case ClassGroup::incremental: return r.incr_acc;
    case ClassGroup::all: return r.all_acc;
  }
  return std::nullopt;
}

std::string full_precision(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string two_decimals(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", round_2dp(x));
  return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

GroupValues summarize(const RunReport& r, bool average) {
  GroupValues out;
  for (ClassGroup g : kGroups) {
    auto s = r.series(g);
    if (s.empty()) continue;
    const double v = average ? average_accuracy(s) : performance_dropping(s, g);
    if (g == ClassGroup::base) out.base = v;
    if (g == ClassGroup::incremental) out.incremental = v;
    if (g == ClassGroup::all) out.all = v;
  }
  return out;
}

void emit_table(const RunReport& report, std::ostream& os) {
  os << "classifier: " << report.classifier << "  seed: " << report.seed << "\n";
  char cell[64];
  os << "Session";
  for (const auto& r : report.records) {
    std::snprintf(cell, sizeof cell, "%9zu", r.session_index);
    os << cell;
  }
  os << "   AA (%)   PD (%)\n";
  for (ClassGroup g : kGroups) {
    if (report.series(g).empty()) continue;
    std::snprintf(cell, sizeof cell, "%-7s", group_label(g));
    os << cell;
    for (const auto& r : report.records) {
      auto v = field(r, g);
      std::snprintf(cell, sizeof cell, "%9s", v ? two_decimals(*v).c_str() : "-");
      os << cell;
    }
    auto aa = report.aa.get(g);
    auto pd = report.pd.get(g);
    std::snprintf(cell, sizeof cell, "%9s%9s", aa ? two_decimals(*aa).c_str() : "-",
                  pd ? two_decimals(*pd).c_str() : "-");
    os << cell << "\n";
  }
}

void emit_csv(const RunReport& report, std::ostream& os) {
  os << "group,session,accuracy\n";
  for (ClassGroup g : kGroups) {
    for (const auto& r : report.records) {
      if (auto v = field(r, g)) {
        os << csv_group(g) << ',' << r.session_index << ',' << full_precision(*v) << '\n';
      }
    }
  }
  for (ClassGroup g : kGroups) {
    if (auto v = report.aa.get(g)) os << csv_group(g) << ",AA," << full_precision(*v) << '\n';
    if (auto v = report.pd.get(g)) os << csv_group(g) << ",PD," << full_precision(*v) << '\n';
  }
}

}  // namespace

const char* group_label(ClassGroup g) {
  switch (g) {
    case ClassGroup::base: return "Base";
    case ClassGroup::incremental: return "Incr.";
    case ClassGroup::all: return "All";
  }
  return "?";
}

double accuracy(std::span<const ClassId> predictions, std::span<const ClassId> truths) {
  if (predictions.empty()) throw ArgumentError("accuracy of an empty prediction set");
  if (predictions.size() != truths.size()) {
    throw ArgumentError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(truths.size()) + " truths");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == truths[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double average_accuracy(std::span<const double> series) {
  if (series.empty()) throw ArgumentError("average accuracy of an empty series");
  double sum = 0.0;
  for (double a : series) sum += a;
  return sum / static_cast<double>(series.size());
}

double performance_dropping(std::span<const double> series, ClassGroup) {
  if (series.empty()) throw ArgumentError("performance dropping of an empty series");
  return series.front() - series.back();
}

std::optional<double> GroupValues::get(ClassGroup g) const {
  switch (g) {
    case ClassGroup::base: return base;
    case ClassGroup::incremental: return incremental;
    case ClassGroup::all: return all;
  }
  return std::nullopt;
}

std::vector<double> RunReport::series(ClassGroup g) const {
  std::vector<double> s;
  for (const auto& r : records) {
    if (auto v = field(r, g)) s.push_back(*v);
  }
  return s;
}

RunReport make_report(std::vector<SessionAccuracyRecord> records, std::string classifier,
                      nlohmann::json config, std::uint64_t seed) {
  RunReport r;
  r.records = std::move(records);
  r.classifier = std::move(classifier);
  r.config = std::move(config);
  r.seed = seed;
  for (const auto& rec : r.records) {
    for (const auto& v : {rec.base_acc, rec.incr_acc, std::optional<double>(rec.all_acc)}) {
      if (v && !(*v >= 0.0 && *v <= 100.0)) throw DataError("accuracy outside [0, 100]");
    }
    if (rec.incr_acc.has_value() == (rec.session_index == 0)) {
      throw DataError("incremental accuracy must be absent exactly at session 0");
    }
  }
  r.aa = summarize(r, true);
  r.pd = summarize(r, false);
  return r;
}

void check_report_consistency(const RunReport& report, double tol) {
  const auto aa = summarize(report, true);
  const auto pd = summarize(report, false);
  for (ClassGroup g : kGroups) {
    for (const auto& [stored, fresh] : {std::pair{report.aa.get(g), aa.get(g)},
                                        std::pair{report.pd.get(g), pd.get(g)}}) {
      if (stored.has_value() != fresh.has_value() ||
          (stored && std::abs(*stored - *fresh) > tol)) {
        throw DataError(std::string("report summary for ") + csv_group(g) +
                        " disagrees with its records");
      }
    }
  }
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "table") return ReportFormat::table;
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw ArgumentError("unknown report format '" + name + "'");
}

const char* format_extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::table: return ".txt";
    case ReportFormat::csv: return ".csv";
    case ReportFormat::json: return ".json";
  }
  return "";
}

double round_2dp(double x) { return std::round(x * 100.0) / 100.0; }

void emit_report(const RunReport& report, ReportFormat format, std::ostream& sink) {
  switch (format) {
    case ReportFormat::table: emit_table(report, sink); break;
    case ReportFormat::csv: emit_csv(report, sink); break;
    case ReportFormat::json: sink << report_to_json(report).dump(2) << '\n'; break;
  }
  if (!sink) throw IoError("failed writing report");
}

std::string render_report(const RunReport& report, ReportFormat format) {
  std::ostringstream os;
  emit_report(report, format, os);
  return os.str();
}

nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["classifier"] = report.classifier;
  j["seed"] = report.seed;
  j["config"] = report.config;
  auto& records = j["records"] = nlohmann::json::array();
  for (const auto& r : report.records) {
    records.push_back({{"session_index", r.session_index},
                       {"base_acc", optional_json(r.base_acc)},
                       {"incr_acc", optional_json(r.incr_acc)},
                       {"all_acc", r.all_acc}});
  }
  for (const auto& [key, values] : {std::pair{"aa", &report.aa}, std::pair{"pd", &report.pd}}) {
    auto& obj = j[key] = nlohmann::json::object();
    for (ClassGroup g : kGroups) obj[json_group(g)] = optional_json(values->get(g));
  }
  return j;
}

RunReport report_from_json(const nlohmann::json& j) {
  try {
    RunReport r;
    r.classifier = j.at("classifier").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    for (const auto& rec : j.at("records")) {
      r.records.push_back({rec.at("session_index").get<std::size_t>(), optional_from(rec, "base_acc"),
                           optional_from(rec, "incr_acc"), rec.at("all_acc").get<double>()});
    }
    for (auto* values : {&r.aa, &r.pd}) {
      const auto& obj = j.at(values == &r.aa ? "aa" : "pd");
      values->base = optional_from(obj, "base");
      values->incremental = optional_from(obj, "incremental");
      values->all = optional_from(obj, "all");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report json: ") + e.what());
  }
}

RunReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "group,session,accuracy") {
    throw DataError("csv report is missing its header");
  }
  std::map<std::size_t, SessionAccuracyRecord> sessions;
  RunReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw DataError("bad csv row: " + line);
    const std::string group = line.substr(0, c1);
    const std::string key = line.substr(c1 + 1, c2 - c1 - 1);
    const double value = std::stod(line.substr(c2 + 1));
    ClassGroup g;
    if (group == "Base") g = ClassGroup::base;
    else if (group == "Incremental") g = ClassGroup::incremental;
    else if (group == "All") g = ClassGroup::all;
    else throw DataError("unknown csv group " + group);
    if (key == "AA" || key == "PD") {
      auto& target = key == "AA" ? r.aa : r.pd;
      (g == ClassGroup::base ? target.base : g == ClassGroup::incremental ? target.incremental
                                                                          : target.all) = value;
      continue;
    }
    const std::size_t session = std::stoul(key);
    auto& rec = sessions[session];
    rec.session_index = session;
    if (g == ClassGroup::base) rec.base_acc = value;
    if (g == ClassGroup::incremental) rec.incr_acc = value;
    if (g == ClassGroup::all) rec.all_acc = value;
  }
  for (auto& [idx, rec] : sessions) r.records.push_back(rec);
  return r;
}

}  // namespace fscil
