#include "cao/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "cao/random.hpp"

namespace cao {

namespace {

constexpr double kTemplateStart = -0.35;
constexpr double kTemplateEnd = 0.55;

// Support of a beat's waves and ST window relative to R (Gaussians are
// below 1e-12 of their peak outside it).
constexpr double kBeatSupportPre = 0.45;
constexpr double kBeatSupportPost = 0.65;

constexpr double kStStart = 0.04;
constexpr double kStEnd = 0.16;
constexpr double kStRamp = 0.02;

constexpr double kRrJitter = 0.03;

}  // namespace

double BeatShape::value(double t) const {
  double v = 0.0;
  for (const GaussianWave& w : waves) {
    if (w.amplitude_mv == 0.0) continue;
    const double d = (t - w.center_s) / w.width_s;
    v += w.amplitude_mv * std::exp(-0.5 * d * d);
  }
  return v;
}

BeatTemplate generate_beat_template(double fs, const BeatShape& shape) {
  if (!(fs >= 100.0)) throw std::invalid_argument("beat template needs fs >= 100 Hz");
  const auto first = static_cast<Eigen::Index>(std::ceil(kTemplateStart * fs));
  const auto last = static_cast<Eigen::Index>(std::floor(kTemplateEnd * fs));
  BeatTemplate t;
  t.sample_rate_hz = fs;
  t.r_index = -first;
  t.samples.resize(last - first + 1);
  for (Eigen::Index n = first; n <= last; ++n)
    t.samples[n - first] = shape.value(static_cast<double>(n) / fs);
  return t;
}

double st_lead_factor(CaoClass c, int l) {
  using namespace lead;
  auto in = [l](std::initializer_list<int> group) {
    for (int g : group)
      if (g == l) return true;
    return false;
  };
  switch (c) {
    case CaoClass::LAD:
      if (in({V1, V2, V3, V4})) return 1.0;
      if (in({II, III, aVF})) return -0.5;
      return 0.0;
    case CaoClass::LCX:
      if (in({I, aVL, V5, V6})) return 1.0;
      if (in({V1, V2})) return -0.5;
      return 0.0;
    case CaoClass::RCA:
      if (in({II, III, aVF})) return 1.0;
      if (in({I, aVL})) return -0.5;
      return 0.0;
  }
  return 0.0;
}

double st_window(double t) {
  if (t <= kStStart || t >= kStEnd) return 0.0;
  if (t < kStStart + kStRamp)
    return 0.5 - 0.5 * std::cos(std::numbers::pi * (t - kStStart) / kStRamp);
  if (t > kStEnd - kStRamp) return 0.5 - 0.5 * std::cos(std::numbers::pi * (kStEnd - t) / kStRamp);
  return 1.0;
}

void SynthConfig::validate() const {
  if (!(fs_hz >= 100.0)) throw std::invalid_argument("synth: fs must be >= 100 Hz");
  if (!(duration_s >= 4.0)) throw std::invalid_argument("synth: duration must be >= 4 s");
  if (!(heart_rate_min_bpm > 0.0 && heart_rate_min_bpm <= heart_rate_max_bpm))
    throw std::invalid_argument("synth: heart-rate range must satisfy 0 < min <= max");
  if (!(heart_rate_max_bpm <= 240.0)) throw std::invalid_argument("synth: heart rate above 240 bpm");
  const NoiseConfig& n = noise;
  if (!(st_elevation_mv >= 0.0 && n.baseline_wander_amp_mv >= 0.0 && n.powerline_amp_mv >= 0.0 &&
        n.white_noise_std_mv >= 0.0))
    throw std::invalid_argument("synth: amplitudes must be non-negative");
  if (!(fs_hz > 2.0 * n.powerline_freq_hz))
    throw std::invalid_argument("synth: fs must exceed twice the powerline frequency");
  if (!(n.baseline_wander_freq_hz >= 0.0 && n.powerline_freq_hz > 0.0))
    throw std::invalid_argument("synth: interference frequencies must be positive");
}

SynthRecord generate_record(const SynthConfig& cfg, const std::string& record_id) {
  cfg.validate();
  Rng rng(cfg.rng_seed);
  const double fs = cfg.fs_hz;
  const auto n_samples = static_cast<Eigen::Index>(std::llround(cfg.duration_s * fs));

  // Beat times, starting up to one RR before t = 0 so the record opens mid-rhythm.
  const double bpm = rng.uniform(cfg.heart_rate_min_bpm, cfg.heart_rate_max_bpm);
  const double base_rr = 60.0 / bpm;
  std::vector<double> beats;
  for (double t = -base_rr * rng.uniform(); t < cfg.duration_s + kBeatSupportPre;
       t += base_rr * (1.0 + rng.uniform(-kRrJitter, kRrJitter)))
    beats.push_back(t);

  const BeatShape shape;
  Eigen::VectorXd base = Eigen::VectorXd::Zero(n_samples);
  Eigen::VectorXd st = Eigen::VectorXd::Zero(n_samples);
  for (double tb : beats) {
    const auto first = std::max<Eigen::Index>(
        0, static_cast<Eigen::Index>(std::ceil((tb - kBeatSupportPre) * fs)));
    const auto last = std::min<Eigen::Index>(
        n_samples - 1, static_cast<Eigen::Index>(std::floor((tb + kBeatSupportPost) * fs)));
    for (Eigen::Index n = first; n <= last; ++n) {
      const double rel = static_cast<double>(n) / fs - tb;
      base[n] += shape.value(rel);
      st[n] += st_window(rel);
    }
  }

  SynthRecord out;
  GroundTruth& gt = out.truth;
  gt.record_id = record_id;
  gt.label = cfg.label;
  for (double tb : beats)
    if (tb >= 0.0 && tb <= cfg.duration_s) gt.r_peak_times_s.push_back(tb);

  gt.clean.resize(kLeadCount, n_samples);
  for (std::size_t l = 0; l < kLeadCount; ++l) {
    const double st_gain = st_lead_factor(cfg.label, static_cast<int>(l)) * cfg.st_elevation_mv;
    gt.clean.row(l) = (kLeadGains[l] * base + st_gain * st).transpose();
  }

  // Interference: per-lead baseline phase, shared powerline phase, white noise.
  const NoiseConfig& nz = cfg.noise;
  std::array<double, kLeadCount> wander_phase{};
  for (double& p : wander_phase) p = 2.0 * std::numbers::pi * rng.uniform();
  const double mains_phase = 2.0 * std::numbers::pi * rng.uniform();

  EcgRecord& rec = out.record;
  rec.record_id = record_id;
  rec.label = cfg.label;
  rec.sample_rate_hz = fs;
  rec.samples = gt.clean;
  const bool any_noise =
      nz.baseline_wander_amp_mv > 0.0 || nz.powerline_amp_mv > 0.0 || nz.white_noise_std_mv > 0.0;
  if (any_noise) {
    for (std::size_t l = 0; l < kLeadCount; ++l) {
      for (Eigen::Index n = 0; n < n_samples; ++n) {
        const double t = static_cast<double>(n) / fs;
        double v = 0.0;
        if (nz.baseline_wander_amp_mv > 0.0)
          v += nz.baseline_wander_amp_mv *
               std::sin(2.0 * std::numbers::pi * nz.baseline_wander_freq_hz * t + wander_phase[l]);
        if (nz.powerline_amp_mv > 0.0)
          v += nz.powerline_amp_mv *
               std::sin(2.0 * std::numbers::pi * nz.powerline_freq_hz * t + mains_phase);
        if (nz.white_noise_std_mv > 0.0) v += nz.white_noise_std_mv * rng.normal();
        rec.samples(static_cast<Eigen::Index>(l), n) += v;
      }
    }
  }
  return out;
}

std::vector<SynthRecord> generate_dataset(const ClassCounts& counts, const SynthConfig& base,
                                          std::uint64_t seed) {
  base.validate();
  std::vector<SynthRecord> out;
  out.reserve(counts.total());
  std::uint64_t index = 0;
  char id[32];
  for (CaoClass c : kAllClasses) {
    for (std::size_t k = 0; k < counts[c]; ++k, ++index) {
      SynthConfig cfg = base;
      cfg.label = c;
      cfg.rng_seed = derive_seed(seed, index);
      std::snprintf(id, sizeof id, "rec%05llu", static_cast<unsigned long long>(index));
      out.push_back(generate_record(cfg, id));
    }
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, std::span<const SynthRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const SynthRecord& r : records) {
    nlohmann::json j;
    j["record_id"] = r.truth.record_id;
    j["r_peak_times_s"] = r.truth.r_peak_times_s;
    j["class"] = std::string(to_string(r.truth.label));
    out << j.dump() << '\n';
  }
}

}  // namespace cao
