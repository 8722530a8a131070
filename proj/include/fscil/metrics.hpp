#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fscil/embedding_set.hpp"

namespace fscil {

enum class ClassGroup { base, incremental, all };

const char* group_label(ClassGroup g);  // "Base", "Incr.", "All"

/// Percent correct. Throws ArgumentError on empty or unequal inputs.
double accuracy(std::span<const ClassId> predictions, std::span<const ClassId> truths);

/// Mean of the series. Throws ArgumentError when empty.
double average_accuracy(std::span<const double> series);

/// First entry minus last entry of the group's defined series. For the
/// incremental group callers pass sessions 1..M-1 only.
double performance_dropping(std::span<const double> series, ClassGroup group);

struct SessionAccuracyRecord {
  std::size_t session_index = 0;
  std::optional<double> base_acc;
  std::optional<double> incr_acc;  // absent iff session_index == 0
  double all_acc = 0.0;

  friend bool operator==(const SessionAccuracyRecord&, const SessionAccuracyRecord&) = default;
};

struct GroupValues {
  std::optional<double> base;
  std::optional<double> incremental;
  std::optional<double> all;

  std::optional<double> get(ClassGroup g) const;
  friend bool operator==(const GroupValues&, const GroupValues&) = default;
};

struct RunReport {
  std::vector<SessionAccuracyRecord> records;
  GroupValues aa;
  GroupValues pd;
  std::string classifier = "stochastic";
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// Defined entries of one group, in session order.
  std::vector<double> series(ClassGroup g) const;
};

/// Report with aa / pd computed from the records.
RunReport make_report(std::vector<SessionAccuracyRecord> records, std::string classifier,
                      nlohmann::json config, std::uint64_t seed);

/// Throws DataError unless stored aa / pd match a recomputation within tol.
void check_report_consistency(const RunReport& report, double tol = 1e-9);

enum class ReportFormat { table, csv, json };

ReportFormat parse_report_format(const std::string& name);
const char* format_extension(ReportFormat f);

/// Half away from zero to two decimals, as printed in table mode.
double round_2dp(double x);

void emit_report(const RunReport& report, ReportFormat format, std::ostream& sink);
std::string render_report(const RunReport& report, ReportFormat format);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

/// Rebuilds records and summaries from csv emission text.
RunReport report_from_csv(const std::string& text);

}  // namespace fscil
