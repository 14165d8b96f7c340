#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "cao/evaluation.hpp"

namespace cao {

namespace {

constexpr const char* kMetricNames[4] = {"Accuracy", "Sensitivity", "Specificity", "AUROC"};
constexpr const char* kPlusMinus = "\xC2\xB1";  // U+00B1

std::string cnn_name(nn::Variant v) { return v == nn::Variant::Conv1D ? "1D-CNN" : "2D-CNN"; }
std::string arm_name(bool preprocessed) { return preprocessed ? "preprocessed" : "raw"; }

std::array<MetricSummary, 4> table_cells(const EvalReport& r, int stage) {
  if (r.runs.empty()) throw std::invalid_argument("report_render: report has no runs");
  const StageSummary& s = stage == 1 ? r.stage1 : r.stage2;
  const std::optional<MetricSummary>* fields[4] = {&s.accuracy, &s.sensitivity, &s.specificity, &s.auroc};
  std::array<MetricSummary, 4> out;
  for (int k = 0; k < 4; ++k) {
    if (!fields[k]->has_value())
      throw std::invalid_argument("report_render: stage-" + std::to_string(stage) + " " + kMetricNames[k] +
                                  " is undefined for " + cnn_name(r.variant) + "/" + arm_name(r.preprocessed));
    out[static_cast<std::size_t>(k)] = **fields[k];
  }
  return out;
}

// Display width of a UTF-8 string (counts code points).
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++n;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

nlohmann::json summary_json(const std::optional<MetricSummary>& m) {
  if (!m) return nullptr;
  return {{"mean", m->mean}, {"std", m->std}, {"n", m->n}};
}

nlohmann::json stage_metrics_json(const StageMetrics& m) {
  return {{"accuracy", optional_json(m.accuracy)},
          {"sensitivity", optional_json(m.sensitivity)},
          {"specificity", optional_json(m.specificity)},
          {"auroc", optional_json(m.auroc)},
          {"record_auroc", optional_json(m.record_auroc)},
          {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"tn", m.confusion.tn}, {"fn", m.confusion.fn}}}};
}

nlohmann::json stage_summary_json(const StageSummary& s) {
  return {{"accuracy", summary_json(s.accuracy)},
          {"sensitivity", summary_json(s.sensitivity)},
          {"specificity", summary_json(s.specificity)},
          {"auroc", summary_json(s.auroc)},
          {"record_auroc", summary_json(s.record_auroc)}};
}

}  // namespace

std::string format_cell(const MetricSummary& m) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f %s %.3f", m.mean, kPlusMinus, m.std);
  return buf;
}

std::string render_report_text(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("report_render: no reports");
  std::ostringstream out;
  for (int stage = 1; stage <= 2; ++stage) {
    out << (stage == 1 ? "Stage-1 (LAD vs non-LAD)\n" : "Stage-2 (LCX vs RCA)\n");
    out << pad("CNN", 8) << pad("Dataset", 14);
    for (const char* name : kMetricNames) out << pad(name, 16);
    out << '\n';
    for (const EvalReport& r : reports) {
      const auto cells = table_cells(r, stage);
      out << pad(cnn_name(r.variant), 8) << pad(arm_name(r.preprocessed), 14);
      for (const MetricSummary& m : cells) out << pad(format_cell(m), 16);
      out << '\n';
    }
    if (stage == 1) out << '\n';
  }
  // Trailing spaces from padding are noise in a text table.
  std::string text = out.str();
  std::string cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    const auto end = line.find_last_not_of(' ');
    cleaned += (end == std::string::npos ? std::string() : line.substr(0, end + 1)) + '\n';
  }
  return cleaned;
}

std::string render_report_csv(std::span<const EvalReport> reports) {
  if (reports.empty()) throw std::invalid_argument("report_render: no reports");
  std::ostringstream out;
  out << "stage,cnn,dataset,accuracy,sensitivity,specificity,auroc\n";
  for (int stage = 1; stage <= 2; ++stage) {
    for (const EvalReport& r : reports) {
      const auto cells = table_cells(r, stage);
      out << stage << ',' << cnn_name(r.variant) << ',' << arm_name(r.preprocessed);
      for (const MetricSummary& m : cells) out << ',' << format_cell(m);
      out << '\n';
    }
  }
  return out.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "stage,cnn,dataset,accuracy,sensitivity,specificity,auroc")
    throw std::runtime_error("report csv: unexpected header");
  std::vector<ReportRow> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 7) throw std::runtime_error("report csv line " + std::to_string(lineno) + ": expected 7 fields");
    ReportRow row;
    row.stage = std::stoi(fields[0]);
    row.cnn = fields[1];
    row.arm = fields[2];
    for (std::size_t k = 0; k < 4; ++k) {
      const std::string& cell = fields[3 + k];
      const auto pm = cell.find(kPlusMinus);
      if (pm == std::string::npos)
        throw std::runtime_error("report csv line " + std::to_string(lineno) + ": malformed cell '" + cell + "'");
      row.cells[k].mean = std::stod(cell.substr(0, pm));
      row.cells[k].std = std::stod(cell.substr(pm + 2));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunResult& run : r.runs) {
    runs.push_back({{"run", run.run_index},
                    {"seed", run.seed},
                    {"split_redraws", run.split.redraws},
                    {"train_records", run.split.train_ids},
                    {"test_records", run.split.test_ids},
                    {"train_pulses", run.train_pulses},
                    {"test_pulses", run.test_pulses},
                    {"stage1", stage_metrics_json(run.stage1)},
                    {"stage2", stage_metrics_json(run.stage2)}});
  }
  return {{"cnn", cnn_name(r.variant)},
          {"dataset", arm_name(r.preprocessed)},
          {"seed", r.seed},
          {"n_runs", r.runs.size()},
          {"config", r.config},
          {"summary", {{"stage1", stage_summary_json(r.stage1)}, {"stage2", stage_summary_json(r.stage2)}}},
          {"runs", runs}};
}

nlohmann::json reports_to_json(std::span<const EvalReport> reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EvalReport& r : reports) arr.push_back(report_to_json(r));
  return arr;
}

}  // namespace cao
