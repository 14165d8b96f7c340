#include "cao/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include "cao/nn/train.hpp"
#include "cao/pulse_io.hpp"
#include "cao/random.hpp"

namespace cao {

namespace {

void check_labels(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1, got " + std::to_string(y));
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts compute_confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("compute_confusion: " + std::to_string(scores.size()) + " scores but " +
                                std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw std::invalid_argument("compute_confusion: empty input");
  check_labels(labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1)
      (predicted ? c.tp : c.fn)++;
    else
      (predicted ? c.fp : c.tn)++;
  }
  return c;
}

BinaryMetrics metrics_from_confusion(const ConfusionCounts& c) {
  return {ratio(c.tp + c.tn, c.total()), ratio(c.tp, c.positives()), ratio(c.tn, c.negatives())};
}

double compute_auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("compute_auroc: scores and labels differ in length");
  check_labels(labels);
  for (double s : scores)
    if (std::isnan(s)) throw std::invalid_argument("compute_auroc: NaN score");
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("compute_auroc: both classes are required");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, with tied groups sharing their midrank. Ranks are
  // doubled so the sum stays an exact integer.
  std::uint64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t midrank2 = static_cast<std::uint64_t>(i + 1 + j);  // 2 * (i+1 + j) / 2
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum2 += midrank2;
    i = j;
  }
  // U = R_pos - n_pos (n_pos + 1) / 2, all doubled.
  const std::uint64_t u2 = rank_sum2 - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

RecordSplit stratified_record_split(std::span<const std::string> record_ids, std::span<const CaoClass> labels,
                                    double test_fraction, std::uint64_t seed,
                                    const std::function<bool(const RecordSplit&)>& acceptable) {
  if (record_ids.size() != labels.size())
    throw std::invalid_argument("stratified_record_split: ids and labels differ in length");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("stratified_record_split: test fraction must lie in (0, 1)");
  std::set<std::string> unique(record_ids.begin(), record_ids.end());
  if (unique.size() != record_ids.size()) throw std::invalid_argument("stratified_record_split: duplicate record ids");

  std::array<std::vector<std::string>, 3> by_class;
  for (std::size_t i = 0; i < record_ids.size(); ++i)
    by_class[static_cast<std::size_t>(labels[i])].push_back(record_ids[i]);
  for (CaoClass c : kAllClasses) {
    auto& ids = by_class[static_cast<std::size_t>(c)];
    if (ids.size() < 2)
      throw std::invalid_argument("stratified_record_split: class " + std::string(to_string(c)) + " has " +
                                  std::to_string(ids.size()) + " record(s); at least 2 are needed");
    std::sort(ids.begin(), ids.end());
  }

  constexpr std::size_t kMaxAttempts = 100;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(derive_seed(seed, attempt));
    RecordSplit split;
    split.redraws = attempt;
    for (auto ids : by_class) {
      const std::size_t n = ids.size();
      const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
      const std::size_t n_test = std::clamp<std::size_t>(want, 1, n - 1);
      rng.shuffle(std::span<std::string>(ids));
      split.test_ids.insert(split.test_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
      split.train_ids.insert(split.train_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    }
    std::sort(split.train_ids.begin(), split.train_ids.end());
    std::sort(split.test_ids.begin(), split.test_ids.end());
    if (!acceptable || acceptable(split)) return split;
  }
  throw std::runtime_error("stratified_record_split: no acceptable split after " + std::to_string(kMaxAttempts) +
                           " draws");
}

StageMetrics score_stage(std::span<const double> scores, std::span<const int> labels,
                         std::span<const std::string> record_ids, double threshold) {
  if (record_ids.size() != scores.size())
    throw std::invalid_argument("score_stage: record ids and scores differ in length");
  StageMetrics m;
  m.confusion = compute_confusion(scores, labels, threshold);
  const BinaryMetrics b = metrics_from_confusion(m.confusion);
  m.accuracy = b.accuracy;
  m.sensitivity = b.sensitivity;
  m.specificity = b.specificity;
  if (m.confusion.positives() > 0 && m.confusion.negatives() > 0) m.auroc = compute_auroc(scores, labels);

  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::map<std::string, int> record_label;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto& [sum, count] = sums[record_ids[i]];
    sum += scores[i];
    ++count;
    record_label[record_ids[i]] = labels[i];
  }
  std::vector<double> rs;
  std::vector<int> rl;
  for (const auto& [id, sc] : sums) {
    rs.push_back(sc.first / static_cast<double>(sc.second));
    rl.push_back(record_label[id]);
  }
  const auto pos = std::count(rl.begin(), rl.end(), 1);
  if (pos > 0 && pos < static_cast<std::ptrdiff_t>(rl.size())) m.record_auroc = compute_auroc(rs, rl);
  return m;
}

std::optional<MetricSummary> summarize(std::span<const std::optional<double>> values) {
  std::vector<double> v;
  for (const auto& x : values)
    if (x) v.push_back(*x);
  if (v.size() < 2) return std::nullopt;
  MetricSummary s;
  s.n = v.size();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(s.n);
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  return s;
}

namespace {

StageSummary summarize_stage(const std::vector<RunResult>& runs, StageMetrics RunResult::*stage) {
  auto column = [&](std::optional<double> StageMetrics::*field) {
    std::vector<std::optional<double>> v;
    for (const RunResult& r : runs) v.push_back((r.*stage).*field);
    return summarize(v);
  };
  return {column(&StageMetrics::accuracy), column(&StageMetrics::sensitivity), column(&StageMetrics::specificity),
          column(&StageMetrics::auroc), column(&StageMetrics::record_auroc)};
}

bool has_all_classes(const std::vector<std::size_t>& counts) {
  return std::all_of(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; });
}

}  // namespace

void aggregate(EvalReport& report) {
  report.stage1 = summarize_stage(report.runs, &RunResult::stage1);
  report.stage2 = summarize_stage(report.runs, &RunResult::stage2);
}

void ExperimentOptions::validate() const {
  if (n_runs < 2) throw std::invalid_argument("n_runs must be at least 2 (the spread is undefined for one run)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test_fraction must lie in (0, 1)");
  if (!(threshold1 > 0.0 && threshold1 < 1.0) || !(threshold2 > 0.0 && threshold2 < 1.0))
    throw std::invalid_argument("thresholds must lie in (0, 1)");
  model.validate();
  train.validate();
  if (model.variant != variant) throw std::invalid_argument("model.variant disagrees with the experiment variant");
}

nlohmann::json ExperimentOptions::to_json() const {
  nlohmann::json train_json = train.to_json();
  train_json.erase("seed");
  return {
      {"arm", preprocess ? "preprocessed" : "raw"},
      {"variant", std::string(nn::to_string(variant))},
      {"n_runs", n_runs},
      {"seed", seed},
      {"test_fraction", test_fraction},
      {"filter", filter_to_json(filter)},
      {"window", window_to_json(window)},
      {"model", model.to_json()},
      {"train", train_json},
      {"threshold1", threshold1},
      {"threshold2", threshold2},
  };
}

StageScorer cascade_scorer(const ExperimentOptions& options,
                           std::function<void(std::size_t run, const Cascade&)> on_trained) {
  return [options, on_trained = std::move(on_trained)](const RunContext& ctx) {
    nn::TrainConfig tc = options.train;
    tc.seed = ctx.seed;
    Cascade cascade = train_cascade(ctx.train, options.model, tc);
    cascade.threshold1 = options.threshold1;
    cascade.threshold2 = options.threshold2;
    if (on_trained) on_trained(ctx.run_index, cascade);

    std::vector<const Pulse*> all, non_lad;
    for (const Pulse& p : ctx.test.pulses) {
      all.push_back(&p);
      if (p.label != CaoClass::LAD) non_lad.push_back(&p);
    }
    return StageScores{nn::predict_proba(cascade.stage1, all), nn::predict_proba(cascade.stage2, non_lad)};
  };
}

EvalReport run_experiment(std::span<const EcgRecord> records, const ExperimentOptions& options,
                          const ExperimentLog& log) {
  return run_experiment(records, options, cascade_scorer(options), log);
}

EvalReport run_experiment(std::span<const EcgRecord> records, const ExperimentOptions& options,
                          const StageScorer& scorer, const ExperimentLog& log) {
  options.validate();
  if (records.empty()) throw std::invalid_argument("run_experiment: no records");

  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(line);
  };

  // Pulses are built once per record; every run just regroups them.
  const PulseDataset all =
      build_dataset(records, options.preprocess, options.filter, options.window, std::max(1u, options.threads));
  std::map<std::string, std::vector<std::size_t>> pulses_of;
  for (const EcgRecord& r : records) pulses_of[r.record_id];
  for (std::size_t i = 0; i < all.pulses.size(); ++i) pulses_of[all.pulses[i].source_record_id].push_back(i);

  std::vector<std::string> ids;
  std::vector<CaoClass> labels;
  std::map<std::string, CaoClass> label_of;
  for (const EcgRecord& r : records) {
    ids.push_back(r.record_id);
    labels.push_back(r.label);
    label_of[r.record_id] = r.label;
  }
  say("built " + std::to_string(all.pulses.size()) + " " + std::string(to_string(all.provenance)) +
      " pulses from " + std::to_string(records.size()) + " records");

  auto side_counts = [&](const std::vector<std::string>& side) {
    std::vector<std::size_t> counts(3, 0);
    for (const std::string& id : side)
      counts[static_cast<std::size_t>(label_of.at(id))] += pulses_of.at(id).size();
    return counts;
  };
  auto acceptable = [&](const RecordSplit& s) {
    return has_all_classes(side_counts(s.train_ids)) && has_all_classes(side_counts(s.test_ids));
  };
  auto subset = [&](const std::vector<std::string>& side) {
    PulseDataset ds;
    ds.window = all.window;
    ds.sample_rate_hz = all.sample_rate_hz;
    ds.provenance = all.provenance;
    ds.pulse_length = all.pulse_length;
    for (const std::string& id : side)
      for (std::size_t i : pulses_of.at(id)) ds.pulses.push_back(all.pulses[i]);
    return ds;
  };

  EvalReport report;
  report.variant = options.variant;
  report.preprocessed = options.preprocess;
  report.seed = options.seed;
  report.config = options.to_json();
  report.runs.resize(options.n_runs);
  std::vector<std::exception_ptr> failures(options.n_runs);

  auto run_one = [&](std::size_t r) {
    RunResult& out = report.runs[r];
    out.run_index = r;
    out.seed = derive_seed(options.seed, r);
    out.split = stratified_record_split(ids, labels, options.test_fraction, derive_seed(out.seed, 0), acceptable);
    if (out.split.redraws > 0)
      say("[run " + std::to_string(r) + "] split redrawn " + std::to_string(out.split.redraws) + " time(s)");

    std::vector<std::string> overlap;
    std::set_intersection(out.split.train_ids.begin(), out.split.train_ids.end(), out.split.test_ids.begin(),
                          out.split.test_ids.end(), std::back_inserter(overlap));
    if (!overlap.empty()) throw std::logic_error("record '" + overlap.front() + "' appears in train and test");

    const PulseDataset train = subset(out.split.train_ids);
    const PulseDataset test = subset(out.split.test_ids);
    out.train_pulses = train.pulses.size();
    out.test_pulses = test.pulses.size();
    say("[run " + std::to_string(r) + "] " + std::to_string(out.split.train_ids.size()) + " train / " +
        std::to_string(out.split.test_ids.size()) + " test records, " + std::to_string(out.train_pulses) + " / " +
        std::to_string(out.test_pulses) + " pulses");

    const StageScores scores = scorer(RunContext{r, derive_seed(out.seed, 1), train, test});

    std::vector<int> y1, y2;
    std::vector<std::string> rec1, rec2;
    for (const Pulse& p : test.pulses) {
      y1.push_back(p.label == CaoClass::LAD ? 1 : 0);
      rec1.push_back(p.source_record_id);
      if (p.label != CaoClass::LAD) {
        y2.push_back(p.label == CaoClass::LCX ? 1 : 0);
        rec2.push_back(p.source_record_id);
      }
    }
    if (scores.stage1.size() != y1.size() || scores.stage2.size() != y2.size())
      throw std::logic_error("scorer returned " + std::to_string(scores.stage1.size()) + "/" +
                             std::to_string(scores.stage2.size()) + " scores for " + std::to_string(y1.size()) +
                             "/" + std::to_string(y2.size()) + " test pulses");
    out.stage1 = score_stage(scores.stage1, y1, rec1, options.threshold1);
    out.stage2 = score_stage(scores.stage2, y2, rec2, options.threshold2);

    auto fmt = [](const std::optional<double>& v) {
      if (!v) return std::string("undefined");
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", *v);
      return std::string(buf);
    };
    say("[run " + std::to_string(r) + "] stage-1 AUROC " + fmt(out.stage1.auroc) + ", stage-2 AUROC " +
        fmt(out.stage2.auroc));
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < options.n_runs;) {
      try {
        run_one(r);
      } catch (...) {
        failures[r] = std::current_exception();
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(options.n_runs)));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }
  for (std::size_t r = 0; r < options.n_runs; ++r) {
    if (!failures[r]) continue;
    try {
      std::rethrow_exception(failures[r]);
    } catch (const std::exception& e) {
      throw std::runtime_error("run " + std::to_string(r) + " (seed " + std::to_string(derive_seed(options.seed, r)) +
                               ") failed: " + e.what());
    }
  }

  aggregate(report);
  return report;
}

}  // namespace cao
