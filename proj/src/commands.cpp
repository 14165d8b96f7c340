#include "cao/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "cao/cascade.hpp"
#include "cao/evaluation.hpp"
#include "cao/pulse_io.hpp"
#include "cao/record_io.hpp"
#include "cao/synth.hpp"

namespace fs = std::filesystem;

namespace cao {

namespace {

// Errors the user caused (bad flags, wrong directories), reported without
// a stack of context.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json command_json(const std::vector<std::string>& args) { return args; }

bool is_nonempty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::size_t n_lad = kDefaultSynthCounts.lad;
  std::size_t n_lcx = kDefaultSynthCounts.lcx;
  std::size_t n_rca = kDefaultSynthCounts.rca;
  std::uint64_t seed = 0;
  std::string out;
  bool force = false;
  bool no_noise = false;
  SynthConfig config{};
};

void add_synth(CLI::App& app, SynthArgs& a) {
  app.add_option("--n-lad", a.n_lad, "LAD records")->capture_default_str();
  app.add_option("--n-lcx", a.n_lcx, "LCX records")->capture_default_str();
  app.add_option("--n-rca", a.n_rca, "RCA records")->capture_default_str();
  app.add_option("--seed", a.seed, "dataset seed")->required();
  app.add_option("--out", a.out, "output directory")->required();
  app.add_flag("--force", a.force, "overwrite an existing dataset in --out");
  app.add_option("--fs", a.config.fs_hz, "sample rate (Hz)")->capture_default_str();
  app.add_option("--duration", a.config.duration_s, "record length (s)")->capture_default_str();
  app.add_option("--bpm-min", a.config.heart_rate_min_bpm)->capture_default_str();
  app.add_option("--bpm-max", a.config.heart_rate_max_bpm)->capture_default_str();
  app.add_option("--st-mv", a.config.st_elevation_mv, "ST elevation (mV)")->capture_default_str();
  app.add_option("--wander-mv", a.config.noise.baseline_wander_amp_mv)->capture_default_str();
  app.add_option("--wander-hz", a.config.noise.baseline_wander_freq_hz)->capture_default_str();
  app.add_option("--powerline-mv", a.config.noise.powerline_amp_mv)->capture_default_str();
  app.add_option("--powerline-hz", a.config.noise.powerline_freq_hz)->capture_default_str();
  app.add_option("--white-mv", a.config.noise.white_noise_std_mv)->capture_default_str();
  app.add_flag("--no-noise", a.no_noise, "set every noise amplitude to zero");
}

nlohmann::json synth_config_json(const SynthArgs& a) {
  const SynthConfig& c = a.config;
  return {{"counts", {{"LAD", a.n_lad}, {"LCX", a.n_lcx}, {"RCA", a.n_rca}}},
          {"seed", a.seed},
          {"fs_hz", c.fs_hz},
          {"duration_s", c.duration_s},
          {"heart_rate_bpm", {c.heart_rate_min_bpm, c.heart_rate_max_bpm}},
          {"st_elevation_mv", c.st_elevation_mv},
          {"noise",
           {{"baseline_wander_amp_mv", c.noise.baseline_wander_amp_mv},
            {"baseline_wander_freq_hz", c.noise.baseline_wander_freq_hz},
            {"powerline_amp_mv", c.noise.powerline_amp_mv},
            {"powerline_freq_hz", c.noise.powerline_freq_hz},
            {"white_noise_std_mv", c.noise.white_noise_std_mv}}}};
}

// Only files this command writes are removed, never the directory itself.
void clear_dataset_files(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path& p = entry.path();
    const std::string name = p.filename().string();
    if (entry.is_regular_file() &&
        (p.extension() == ".csv" || name == "manifest.jsonl" || name == "ground_truth.jsonl" || name == "synth.json"))
      fs::remove(p);
  }
}

int cmd_synth(SynthArgs a, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (a.no_noise) a.config.noise = NoiseConfig::none();
  const fs::path dir = a.out;
  if (is_nonempty_dir(dir)) {
    if (!a.force) throw UsageError(dir.string() + " exists and is not empty (use --force to overwrite)");
    clear_dataset_files(dir);
  }
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
  const ClassCounts counts{a.n_lad, a.n_lcx, a.n_rca};
  a.config.validate();

  const std::vector<SynthRecord> synth = generate_dataset(counts, a.config, a.seed);
  std::vector<EcgRecord> records;
  records.reserve(synth.size());
  for (const SynthRecord& s : synth) records.push_back(s.record);
  fs::create_directories(dir);
  write_dataset(dir, records);
  write_ground_truth(dir / "ground_truth.jsonl", synth);
  nlohmann::json meta = synth_config_json(a);
  meta["command"] = command_json(args);
  write_text(dir / "synth.json", meta.dump(2) + "\n");

  if (counts.total() == 0) err << "warning: all class counts are zero; wrote an empty dataset\n";
  out << "LAD " << counts.lad << "\nLCX " << counts.lcx << "\nRCA " << counts.rca << "\n"
      << counts.total() << " records written to " << dir.string() << "\n";
  return 0;
}

// --- shared preprocessing flags ---------------------------------------------

struct PipelineArgs {
  FilterSpec filter{};
  WindowSpec window{};
  unsigned threads = 0;
};

void add_pipeline(CLI::App& app, PipelineArgs& a) {
  app.add_option("--notch-hz", a.filter.notch_freq_hz)->capture_default_str();
  app.add_option("--notch-q", a.filter.notch_q)->capture_default_str();
  app.add_option("--highpass-hz", a.filter.highpass_cutoff_hz)->capture_default_str();
  app.add_option("--highpass-order", a.filter.highpass_order)->capture_default_str();
  app.add_option("--pre-s", a.window.pre_s, "window start before the R peak (s)")->capture_default_str();
  app.add_option("--post-s", a.window.post_s, "window end after the R peak (s)")->capture_default_str();
  app.add_option("--threads", a.threads, "worker threads (default: CAO_THREADS or all cores)");
}

unsigned resolve_threads(unsigned requested) { return requested > 0 ? requested : default_thread_count(); }

std::vector<EcgRecord> load_records(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("dataset directory " + dir.string() + " does not exist");
  if (!fs::exists(dir / "manifest.jsonl")) throw UsageError("missing manifest: " + (dir / "manifest.jsonl").string());
  return read_dataset(dir);
}

// --- preprocess ---------------------------------------------------------------

struct PreprocessArgs {
  std::string data;
  std::string out;
  bool raw = false;
  bool preprocessed = false;
  PipelineArgs pipeline;
};

int cmd_preprocess(const PreprocessArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const bool preprocess = !a.raw;
  const std::vector<EcgRecord> records = load_records(a.data);
  if (records.empty()) throw UsageError("dataset " + a.data + " has no records");
  const PulseDataset ds = build_dataset(records, preprocess, a.pipeline.filter, a.pipeline.window,
                                        resolve_threads(a.pipeline.threads));

  const fs::path dir = a.out.empty() ? fs::path(a.data) / (preprocess ? "pulses-preprocessed" : "pulses-raw")
                                     : fs::path(a.out);
  fs::create_directories(dir);
  write_pulses(dir / "pulses.bin", ds);
  nlohmann::json meta = pulse_summary(ds);
  meta["config"] = {{"data", a.data},
                    {"arm", preprocess ? "preprocessed" : "raw"},
                    {"filter", filter_to_json(a.pipeline.filter)},
                    {"window", window_to_json(a.pipeline.window)}};
  meta["command"] = command_json(args);

  std::map<std::string, std::size_t> per_record;
  for (const EcgRecord& r : records) per_record[r.record_id] = 0;
  for (const Pulse& p : ds.pulses) ++per_record[p.source_record_id];
  std::size_t lo = SIZE_MAX, hi = 0;
  for (const auto& [id, n] : per_record) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  const double mean = static_cast<double>(ds.pulses.size()) / static_cast<double>(records.size());
  meta["pulses_per_record"] = {{"min", lo}, {"max", hi}, {"mean", mean}};
  write_text(dir / "pulses.meta.json", meta.dump(2) + "\n");

  const ClassCounts c = ds.class_counts();
  char line[128];
  out << "arm " << (preprocess ? "preprocessed" : "raw") << ", pulse length " << ds.pulse_length << " samples\n";
  out << "class  records  pulses\n";
  std::map<CaoClass, std::size_t> rec_by_class;
  for (const EcgRecord& r : records) ++rec_by_class[r.label];
  for (CaoClass k : kAllClasses) {
    std::snprintf(line, sizeof line, "%-5s  %7zu  %6zu\n", std::string(to_string(k)).c_str(), rec_by_class[k], c[k]);
    out << line;
  }
  std::snprintf(line, sizeof line, "total  %7zu  %6zu\n", records.size(), ds.pulses.size());
  out << line;
  std::snprintf(line, sizeof line, "pulses per record: min %zu, mean %.2f, max %zu\n", lo, mean, hi);
  out << line << "wrote " << (dir / "pulses.bin").string() << "\n";
  return 0;
}

// --- train-eval ---------------------------------------------------------------

struct TrainEvalArgs {
  std::string data;
  std::string out;
  std::string variant = "all";
  std::string arm = "all";
  std::size_t runs = 10;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  double threshold1 = 0.5;
  double threshold2 = 0.5;
  bool no_checkpoints = false;
  nn::TrainConfig train{};
  nn::ModelConfig model{};
  PipelineArgs pipeline;
};

void add_train_eval(CLI::App& app, TrainEvalArgs& a) {
  app.add_option("--data", a.data, "dataset directory")->required();
  app.add_option("--out", a.out, "output directory")->required();
  app.add_option("--variant", a.variant, "1d, 2d or all")
      ->check(CLI::IsMember({"1d", "2d", "all"}))
      ->capture_default_str();
  app.add_option("--arm", a.arm, "raw, preprocessed or all")
      ->check(CLI::IsMember({"raw", "preprocessed", "all"}))
      ->capture_default_str();
  app.add_option("--runs", a.runs, "repeated splits (at least 2)")->capture_default_str();
  app.add_option("--seed", a.seed, "experiment seed")->required();
  app.add_option("--test-fraction", a.test_fraction)->capture_default_str();
  app.add_option("--threshold1", a.threshold1)->capture_default_str();
  app.add_option("--threshold2", a.threshold2)->capture_default_str();
  app.add_option("--epochs", a.train.epochs)->capture_default_str();
  app.add_option("--batch-size", a.train.batch_size)->capture_default_str();
  app.add_option("--lr", a.train.learning_rate)->capture_default_str();
  app.add_option("--stem-channels", a.model.stem_channels)->capture_default_str();
  app.add_option("--blocks", a.model.block_channels, "channels of each residual block")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--kernel", a.model.kernel_time, "time extent of conv kernels")->capture_default_str();
  app.add_option("--fc-hidden", a.model.fc_hidden)->capture_default_str();
  app.add_flag("--no-checkpoints", a.no_checkpoints, "skip writing cascade checkpoints");
  add_pipeline(app, a.pipeline);
}

int cmd_train_eval(const TrainEvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.runs < 2) throw UsageError("--runs must be at least 2 (the standard deviation needs two runs)");
  std::vector<bool> arms;
  if (a.arm != "preprocessed") arms.push_back(false);
  if (a.arm != "raw") arms.push_back(true);
  std::vector<nn::Variant> variants;
  if (a.variant != "2d") variants.push_back(nn::Variant::Conv1D);
  if (a.variant != "1d") variants.push_back(nn::Variant::Conv2D);

  const std::vector<EcgRecord> records = load_records(a.data);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  const unsigned threads = resolve_threads(a.pipeline.threads);

  std::mutex out_mutex;
  std::vector<EvalReport> reports;
  for (nn::Variant v : variants) {
    for (bool preprocessed : arms) {
      ExperimentOptions o;
      o.preprocess = preprocessed;
      o.variant = v;
      o.n_runs = a.runs;
      o.seed = a.seed;
      o.test_fraction = a.test_fraction;
      o.filter = a.pipeline.filter;
      o.window = a.pipeline.window;
      o.model = a.model;
      o.model.variant = v;
      o.train = a.train;
      o.threshold1 = a.threshold1;
      o.threshold2 = a.threshold2;
      o.threads = threads;

      const std::string tag = std::string(nn::to_string(v)) + "-" + (preprocessed ? "preprocessed" : "raw");
      auto log = [&](const std::string& line) {
        std::lock_guard lock(out_mutex);
        out << "[" << tag << "] " << line << std::endl;
      };
      std::function<void(std::size_t, const Cascade&)> checkpoint;
      if (!a.no_checkpoints)
        checkpoint = [&dir, tag](std::size_t run, const Cascade& c) {
          save_cascade(dir / "checkpoints" / tag / ("run" + std::to_string(run)), c);
        };
      reports.push_back(run_experiment(records, o, cascade_scorer(o, checkpoint), log));
    }
  }

  nlohmann::json doc;
  doc["config"] = {{"data", a.data}, {"variant", a.variant}, {"arm", a.arm}, {"runs", a.runs}, {"seed", a.seed}};
  doc["command"] = command_json(args);
  doc["reports"] = reports_to_json(reports);
  write_text(dir / "report.json", doc.dump(2) + "\n");
  write_text(dir / "report.csv", render_report_csv(reports));
  const std::string text = render_report_text(reports);
  write_text(dir / "report.txt", text);
  out << "\n" << text;
  return 0;
}

void report_error(std::ostream& err, const std::string& command, const std::string& message) {
  err << nlohmann::json{{"error", message}, {"command", command}}.dump() << std::endl;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coronary artery occlusion localization from synthetic 12-lead ECGs", "cao"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a labelled synthetic dataset");
  add_synth(*synth_cmd, synth);

  PreprocessArgs pre;
  CLI::App* pre_cmd = app.add_subcommand("preprocess", "build a pulse dataset from records");
  pre_cmd->add_option("--data", pre.data, "dataset directory")->required();
  pre_cmd->add_option("--out", pre.out, "output directory (default: <data>/pulses-<arm>)");
  CLI::Option* raw_flag = pre_cmd->add_flag("--raw", pre.raw, "unfiltered, unaligned windows");
  CLI::Option* pre_flag = pre_cmd->add_flag("--preprocessed", pre.preprocessed, "denoised, R-aligned pulses (default)");
  raw_flag->excludes(pre_flag);
  add_pipeline(*pre_cmd, pre.pipeline);

  TrainEvalArgs te;
  CLI::App* te_cmd = app.add_subcommand("train-eval", "repeated-split training and evaluation of the cascade");
  add_train_eval(*te_cmd, te);

  std::string command = args.empty() ? std::string() : args.front();
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, command, e.what());
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth, args, out, err);
    if (pre_cmd->parsed()) return cmd_preprocess(pre, args, out);
    if (te_cmd->parsed()) return cmd_train_eval(te, args, out);
  } catch (const UsageError& e) {
    report_error(err, command, e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(err, command, e.what());
    return 1;
  }
  return 1;
}

}  // namespace cao
