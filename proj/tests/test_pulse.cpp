#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "cao/pulse.hpp"
#include "cao/random.hpp"
#include "cao/synth.hpp"

using namespace cao;
using Catch::Approx;

namespace {

constexpr double kFs = 500.0;

SynthRecord clean_record(std::uint64_t seed, double bpm_lo = 60.0, double bpm_hi = 80.0, double duration = 12.0,
                         CaoClass c = CaoClass::LAD) {
  SynthConfig cfg;
  cfg.noise = NoiseConfig::none();
  cfg.heart_rate_min_bpm = bpm_lo;
  cfg.heart_rate_max_bpm = bpm_hi;
  cfg.duration_s = duration;
  cfg.label = c;
  cfg.rng_seed = seed;
  return generate_record(cfg, "rec" + std::to_string(seed));
}

// One-to-one greedy matching of detections to truth within `tol` seconds.
double detection_f1(const std::vector<Eigen::Index>& found, const std::vector<double>& truth, double tol) {
  std::vector<bool> used(truth.size(), false);
  std::size_t tp = 0;
  for (Eigen::Index p : found) {
    const double t = static_cast<double>(p) / kFs;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (!used[j] && std::abs(truth[j] - t) <= tol) {
        used[j] = true;
        ++tp;
        break;
      }
    }
  }
  if (found.empty() && truth.empty()) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(found.size() + truth.size());
}

Eigen::VectorXd with_white_noise(const Eigen::VectorXd& clean, double snr_db, Rng& rng) {
  const double centred_power = (clean.array() - clean.mean()).square().mean();
  const double sigma = std::sqrt(centred_power / std::pow(10.0, snr_db / 10.0));
  Eigen::VectorXd x = clean;
  for (auto& v : x) v += sigma * rng.normal();
  return x;
}

double mean_f1(double snr_db, int seeds) {
  double total = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const SynthRecord r = clean_record(static_cast<std::uint64_t>(1000 + s), 60.0, 80.0, 12.0);
    Rng rng(derive_seed(77, static_cast<std::uint64_t>(s)));
    const Eigen::VectorXd ii = r.record.samples.row(lead::II).transpose();
    const Eigen::VectorXd x = std::isinf(snr_db) ? ii : with_white_noise(ii, snr_db, rng);
    total += detection_f1(detect_r_peaks(x, kFs), r.truth.r_peak_times_s, 0.05);
  }
  return total / seeds;
}

}  // namespace

TEST_CASE("detector finds nothing in silence", "[pulse][detect]") {
  CHECK(detect_r_peaks(Eigen::VectorXd::Zero(5000), kFs).empty());
  CHECK_THROWS_AS(detect_r_peaks(Eigen::VectorXd::Zero(999), kFs), std::invalid_argument);
}

TEST_CASE("detector on a clean 60 bpm record", "[pulse][detect]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SynthRecord r = clean_record(seed, 60.0, 60.0, 10.0);
    const auto peaks = detect_r_peaks(r.record.samples.row(lead::II).transpose(), kFs);
    CHECK(peaks.size() >= 9);
    CHECK(peaks.size() <= 10);
    for (Eigen::Index p : peaks) {
      const double t = static_cast<double>(p) / kFs;
      const double nearest = *std::min_element(r.truth.r_peak_times_s.begin(), r.truth.r_peak_times_s.end(),
                                               [&](double a, double b) { return std::abs(a - t) < std::abs(b - t); });
      CHECK(std::abs(nearest - t) <= 0.05);
    }
  }
}

TEST_CASE("detector F1 holds up under white noise", "[pulse][detect]") {
  CHECK(mean_f1(INFINITY, 20) >= 0.99);
  CHECK(mean_f1(20.0, 20) >= 0.99);
  CHECK(mean_f1(10.0, 20) >= 0.95);
}

TEST_CASE("detected peaks respect the refractory period", "[pulse][detect][property]") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    SynthConfig cfg;
    cfg.rng_seed = rng.next();
    cfg.heart_rate_min_bpm = 40.0;
    cfg.heart_rate_max_bpm = 160.0;
    cfg.noise.white_noise_std_mv = rng.uniform(0.0, 0.3);
    const SynthRecord r = generate_record(cfg);
    const auto peaks = detect_r_peaks(r.record.samples.row(lead::II).transpose(), kFs);
    for (std::size_t i = 1; i < peaks.size(); ++i) CHECK(peaks[i] - peaks[i - 1] >= static_cast<Eigen::Index>(0.2 * kFs));
    for (Eigen::Index p : peaks) {
      CHECK(p >= 0);
      CHECK(p < r.record.length());
    }
  }
}

TEST_CASE("window arithmetic", "[pulse][extract]") {
  const WindowSpec w;
  CHECK(w.pre_samples(kFs) == 125);
  CHECK(w.length(kFs) == 350);
}

TEST_CASE("extract_pulses keeps interior peaks and skips edge overruns", "[pulse][extract]") {
  EcgRecord rec = clean_record(3).record;
  std::vector<Eigen::Index> peaks;
  for (int k = 0; k < 10; ++k) peaks.push_back(300 + 500 * k);
  const auto pulses = extract_pulses(rec, peaks, WindowSpec{});
  REQUIRE(pulses.size() == 10);
  for (const Pulse& p : pulses) {
    CHECK(p.leads.rows() == 12);
    CHECK(p.leads.cols() == 350);
    CHECK(p.r_peak_index == 125);
    CHECK(p.label == rec.label);
    CHECK(p.source_record_id == rec.record_id);
  }

  const std::vector<Eigen::Index> near_start{50, 1000};
  CHECK(extract_pulses(rec, near_start, WindowSpec{}).size() == 1);
  const std::vector<Eigen::Index> near_end{1000, rec.length() - 100};
  CHECK(extract_pulses(rec, near_end, WindowSpec{}).size() == 1);
}

TEST_CASE("extract_pulses rejects bad peak lists", "[pulse][extract]") {
  const EcgRecord rec = clean_record(3).record;
  const std::vector<Eigen::Index> unordered{2000, 1000};
  const std::vector<Eigen::Index> repeated{1000, 1000};
  const std::vector<Eigen::Index> outside{1000, rec.length()};
  const std::vector<Eigen::Index> negative{-1};
  CHECK_THROWS_AS(extract_pulses(rec, unordered, WindowSpec{}), std::invalid_argument);
  CHECK_THROWS_AS(extract_pulses(rec, repeated, WindowSpec{}), std::invalid_argument);
  CHECK_THROWS_AS(extract_pulses(rec, outside, WindowSpec{}), std::invalid_argument);
  CHECK_THROWS_AS(extract_pulses(rec, negative, WindowSpec{}), std::invalid_argument);
}

TEST_CASE("pulse normalization centres leads and bounds the window", "[pulse][normalize][property]") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const auto cols = static_cast<Eigen::Index>(rng.uniform(2.0, 400.0));
    LeadMatrix w(12, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-3.0, 3.0) + (i % 7);
    normalize_pulse(w);
    for (Eigen::Index l = 0; l < 12; ++l) {
      std::vector<double> row(w.row(l).data(), w.row(l).data() + cols);
      std::sort(row.begin(), row.end());
      const double median =
          cols % 2 ? row[cols / 2] : 0.5 * (row[static_cast<std::size_t>(cols / 2 - 1)] + row[cols / 2]);
      CHECK(std::abs(median) < 1e-9);
    }
    CHECK(w.cwiseAbs().maxCoeff() == Approx(1.0).margin(1e-9));
  }

  LeadMatrix flat = LeadMatrix::Constant(12, 350, 2.5);
  normalize_pulse(flat);
  CHECK(flat.isZero(0.0));
}

TEST_CASE("extracted pulses are normalized", "[pulse][normalize]") {
  const SynthRecord r = clean_record(8);
  std::vector<Eigen::Index> peaks;
  for (double t : r.truth.r_peak_times_s) peaks.push_back(static_cast<Eigen::Index>(std::llround(t * kFs)));
  for (const Pulse& p : extract_pulses(r.record, peaks, WindowSpec{})) {
    CHECK(p.leads.cwiseAbs().maxCoeff() == Approx(1.0).margin(1e-9));
    CHECK(p.leads.allFinite());
  }
}

TEST_CASE("raw segmentation tiles the record", "[pulse][raw]") {
  const EcgRecord rec = clean_record(1).record;
  const auto windows = segment_raw_windows(rec, WindowSpec{});
  CHECK(windows.size() == 17);
  for (const Pulse& p : windows) {
    CHECK(p.leads.cols() == 350);
    CHECK(p.r_peak_index == 0);
  }
}

TEST_CASE("build_dataset on one clean record", "[pulse][dataset]") {
  const std::vector<EcgRecord> one{clean_record(21, 60.0, 60.0, 12.0).record};
  const PulseDataset pre = build_dataset(one, true, FilterSpec{}, WindowSpec{});
  CHECK(pre.provenance == Provenance::Preprocessed);
  CHECK(pre.pulses.size() >= 8);
  CHECK(pre.pulses.size() <= 11);
  CHECK(pre.pulse_length == 350);
  CHECK_NOTHROW(pre.validate());

  const PulseDataset raw = build_dataset(one, false, FilterSpec{}, WindowSpec{});
  CHECK(raw.provenance == Provenance::Raw);
  CHECK(raw.pulses.size() == 17);
}

TEST_CASE("build_dataset rejects empty and mixed-rate input", "[pulse][dataset]") {
  CHECK_THROWS_AS(build_dataset({}, true, FilterSpec{}, WindowSpec{}), std::invalid_argument);
  std::vector<EcgRecord> mixed{clean_record(1).record, clean_record(2).record};
  mixed[1].sample_rate_hz = 250.0;
  CHECK_THROWS_AS(build_dataset(mixed, false, FilterSpec{}, WindowSpec{}), std::invalid_argument);
}

TEST_CASE("build_dataset ordering, labels and thread invariance", "[pulse][dataset][property]") {
  std::vector<EcgRecord> records;
  for (const auto& s : generate_dataset({3, 2, 3}, SynthConfig{}, 5)) records.push_back(s.record);
  std::reverse(records.begin(), records.end());

  for (bool preprocess : {false, true}) {
    const PulseDataset one = build_dataset(records, preprocess, FilterSpec{}, WindowSpec{}, 1);
    const PulseDataset many = build_dataset(records, preprocess, FilterSpec{}, WindowSpec{}, 3);
    REQUIRE(one.pulses.size() == many.pulses.size());
    for (std::size_t i = 0; i < one.pulses.size(); ++i) {
      CHECK(one.pulses[i].source_record_id == many.pulses[i].source_record_id);
      CHECK(one.pulses[i].leads == many.pulses[i].leads);
      if (i) CHECK(one.pulses[i - 1].source_record_id <= one.pulses[i].source_record_id);
    }
    CHECK(one.record_count() == records.size());
    for (const Pulse& p : one.pulses) {
      const auto src = std::find_if(records.begin(), records.end(),
                                    [&](const EcgRecord& r) { return r.record_id == p.source_record_id; });
      REQUIRE(src != records.end());
      CHECK(p.label == src->label);
      CHECK(p.leads.cols() == one.pulse_length);
    }
  }
}

TEST_CASE("pulse count never exceeds the detected peak count", "[pulse][dataset][property]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.rng_seed = seed;
    const EcgRecord rec = generate_record(cfg, "r").record;
    const EcgRecord clean = denoise_record(rec, FilterSpec{});
    const auto peaks = detect_r_peaks(clean.samples.row(lead::II).transpose(), kFs);
    CHECK(record_pulses(rec, true, FilterSpec{}, WindowSpec{}).size() <= peaks.size());
  }
}

TEST_CASE("preprocessed yield on the default synthetic set", "[pulse][dataset]") {
  std::vector<EcgRecord> records;
  for (const auto& s : generate_dataset(kDefaultSynthCounts, SynthConfig{}, 7)) records.push_back(s.record);
  const PulseDataset ds = build_dataset(records, true, FilterSpec{}, WindowSpec{}, default_thread_count());
  const double per_record = static_cast<double>(ds.pulses.size()) / static_cast<double>(records.size());
  CHECK(per_record >= 8.0);
  CHECK(per_record <= 14.0);
  const ClassCounts c = ds.class_counts();
  CHECK(c.lad > c.rca);
  CHECK(c.rca > c.lcx);
  CHECK(c.total() == ds.pulses.size());
}
