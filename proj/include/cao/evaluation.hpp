#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cao/cascade.hpp"
#include "cao/nn/config.hpp"
#include "cao/pulse.hpp"
#include "cao/signal.hpp"

namespace cao {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return tn + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// A score >= threshold is a positive prediction. Labels must be 0 or 1.
ConfusionCounts compute_confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Ratios with a zero denominator are left empty rather than reported as 0.
struct BinaryMetrics {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

BinaryMetrics metrics_from_confusion(const ConfusionCounts& c);

/// Mann-Whitney AUROC with midranks for ties. Needs both classes.
double compute_auroc(std::span<const double> scores, std::span<const int> labels);

/// Record-level split: every record lands on exactly one side.
struct RecordSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::size_t redraws = 0;
};

/// Stratified by class: round(test_fraction * n_c) test records per class,
/// at least one and at most n_c - 1. `acceptable` can veto a draw (for
/// example when a side would lack pulses of some class); vetoed draws are
/// redrawn from derive_seed(seed, attempt). Both id lists come back sorted.
RecordSplit stratified_record_split(std::span<const std::string> record_ids, std::span<const CaoClass> labels,
                                    double test_fraction, std::uint64_t seed,
                                    const std::function<bool(const RecordSplit&)>& acceptable = {});

struct StageMetrics {
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> auroc;
  std::optional<double> record_auroc;  // mean pulse score per record
  ConfusionCounts confusion;
};

/// Scores one stage: confusion at `threshold`, the three ratios, pulse AUROC
/// and record-level AUROC. `record_ids` runs parallel to scores.
StageMetrics score_stage(std::span<const double> scores, std::span<const int> labels,
                         std::span<const std::string> record_ids, double threshold);

struct RunResult {
  std::size_t run_index = 0;
  std::uint64_t seed = 0;
  RecordSplit split;
  std::size_t train_pulses = 0;
  std::size_t test_pulses = 0;
  StageMetrics stage1;
  StageMetrics stage2;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation
  std::size_t n = 0;  // runs where the metric was defined
};

struct StageSummary {
  std::optional<MetricSummary> accuracy;
  std::optional<MetricSummary> sensitivity;
  std::optional<MetricSummary> specificity;
  std::optional<MetricSummary> auroc;
  std::optional<MetricSummary> record_auroc;
};

/// Mean and sample std of the defined values, or empty when fewer than two.
std::optional<MetricSummary> summarize(std::span<const std::optional<double>> values);

struct EvalReport {
  nn::Variant variant = nn::Variant::Conv1D;
  bool preprocessed = true;
  std::uint64_t seed = 0;
  std::vector<RunResult> runs;
  StageSummary stage1;
  StageSummary stage2;
  nlohmann::json config;  // resolved options, embedded in report.json
};

/// Recomputes the summaries from `report.runs`.
void aggregate(EvalReport& report);

struct ExperimentOptions {
  bool preprocess = true;
  nn::Variant variant = nn::Variant::Conv1D;
  std::size_t n_runs = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  FilterSpec filter{};
  WindowSpec window{};
  nn::ModelConfig model{};
  nn::TrainConfig train{};  // train.seed is replaced per run
  double threshold1 = 0.5;
  double threshold2 = 0.5;
  unsigned threads = 1;  // concurrent runs

  void validate() const;
  nlohmann::json to_json() const;
};

/// Stage scores for one run. stage1 is parallel to test.pulses; stage2 is
/// parallel to the non-LAD test pulses in their original order.
struct StageScores {
  std::vector<double> stage1;
  std::vector<double> stage2;
};

struct RunContext {
  std::size_t run_index;
  std::uint64_t seed;
  const PulseDataset& train;
  const PulseDataset& test;
};

using StageScorer = std::function<StageScores(const RunContext&)>;

/// Trains a cascade on ctx.train (train seed = ctx.seed) and scores ctx.test.
/// `on_trained` (optional) sees every trained cascade, e.g. to checkpoint it;
/// it may be called from several threads at once.
StageScorer cascade_scorer(const ExperimentOptions& options,
                           std::function<void(std::size_t run, const Cascade&)> on_trained = {});

/// Progress lines, attributed by run index. Called under a lock.
using ExperimentLog = std::function<void(const std::string&)>;

/// Repeated record-level stratified splits. Run r uses seed derive_seed(seed, r)
/// for its split and training; runs may execute concurrently but results are
/// folded in run order, so the report does not depend on `threads`.
EvalReport run_experiment(std::span<const EcgRecord> records, const ExperimentOptions& options,
                          const StageScorer& scorer, const ExperimentLog& log = {});

EvalReport run_experiment(std::span<const EcgRecord> records, const ExperimentOptions& options,
                          const ExperimentLog& log = {});

/// "m.mmm ± s.sss"
std::string format_cell(const MetricSummary& m);

/// Aligned tables, one per stage, rows (CNN, arm) x (Accuracy, Sensitivity,
/// Specificity, AUROC). Throws if any report lacks runs or a metric summary.
std::string render_report_text(std::span<const EvalReport> reports);
std::string render_report_csv(std::span<const EvalReport> reports);

struct ReportRow {
  int stage = 1;
  std::string cnn;
  std::string arm;
  std::array<MetricSummary, 4> cells;  // accuracy, sensitivity, specificity, auroc
};

std::vector<ReportRow> parse_report_csv(const std::string& csv);

nlohmann::json report_to_json(const EvalReport& report);
nlohmann::json reports_to_json(std::span<const EvalReport> reports);

}  // namespace cao
