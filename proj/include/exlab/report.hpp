#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace exlab::report {

/// Fixed metric vocabulary.
inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"kl_predictive", "kl_posterior", "nll", "sq_loss", "coverage"};
  return names;
}

struct ReportRow {
  std::string experiment;
  std::string model;
  std::size_t dim = 1;
  std::size_t length = 0;  // T, or the training length for posterior-gap cells
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

class EvalReport {
 public:
  /// Throws ContractError on an unknown metric or a non-finite value.
  void add(ReportRow row);

  const std::vector<ReportRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  std::vector<std::string> model_ids() const;  // in first-appearance order

 private:
  std::vector<ReportRow> rows_;
};

std::string to_csv(const EvalReport& report);
std::string to_json(const EvalReport& report);
/// Log-y line plot of value against length, one polyline per model id.
std::string to_svg(const EvalReport& report, const std::string& title = "");

EvalReport parse_csv(const std::string& text);

enum class Format { csv, json, svg };
Format format_from_string(const std::string& s);

void emit_report(const EvalReport& report, Format format, const std::filesystem::path& path);

}  // namespace exlab::report
