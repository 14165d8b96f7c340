#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cao/signal.hpp"

namespace cao {

/// One Gaussian deflection, amplitude * exp(-(t - center)^2 / (2 width^2)),
/// with time measured relative to the R peak.
struct GaussianWave {
  double amplitude_mv;
  double center_s;
  double width_s;
};

/// P, Q, R, S, T.
struct BeatShape {
  std::array<GaussianWave, 5> waves{{
      {0.15, -0.20, 0.025},
      {-0.10, -0.03, 0.010},
      {1.00, 0.00, 0.012},
      {-0.20, 0.03, 0.010},
      {0.30, 0.25, 0.050},
  }};

  double value(double t_rel_s) const;
};

struct BeatTemplate {
  Eigen::VectorXd samples;
  Eigen::Index r_index = 0;  // sample holding t = 0
  double sample_rate_hz = 0.0;
};

/// One cardiac cycle sampled over [-0.35 s, +0.55 s] around the R peak.
BeatTemplate generate_beat_template(double sample_rate_hz, const BeatShape& shape = {});

/// Projection of the base beat onto each lead (I, II, III, aVR, aVL, aVF, V1..V6).
inline constexpr std::array<double, kLeadCount> kLeadGains{0.6, 1.0, 0.5, -0.8, 0.3, 0.75,
                                                           0.4, 0.6, 0.8, 1.0,  0.9, 0.7};

/// ST offset multiplier for a lead: +1 on the class's territory, -0.5 on the
/// reciprocal group, 0 elsewhere.
///   LAD: V1-V4, reciprocal II/III/aVF
///   LCX: I/aVL/V5/V6, reciprocal V1/V2
///   RCA: II/III/aVF, reciprocal I/aVL
double st_lead_factor(CaoClass c, int lead);

/// ST plateau window shape: 0 outside [R+0.04, R+0.16] s, 1 on [R+0.06, R+0.14] s,
/// raised-cosine ramps in between.
double st_window(double t_rel_s);

struct NoiseConfig {
  double baseline_wander_amp_mv = 0.3;
  double baseline_wander_freq_hz = 0.2;
  double powerline_amp_mv = 0.15;
  double powerline_freq_hz = 60.0;
  double white_noise_std_mv = 0.05;

  static NoiseConfig none() { return {0.0, 0.2, 0.0, 60.0, 0.0}; }
};

struct SynthConfig {
  double fs_hz = 500.0;
  double duration_s = 12.0;
  double heart_rate_min_bpm = 60.0;
  double heart_rate_max_bpm = 80.0;
  CaoClass label = CaoClass::LAD;
  double st_elevation_mv = 0.2;
  NoiseConfig noise{};
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct GroundTruth {
  std::string record_id;
  std::vector<double> r_peak_times_s;
  CaoClass label = CaoClass::LAD;
  LeadMatrix clean;  // noise-free 12-lead reference
};

struct SynthRecord {
  EcgRecord record;
  GroundTruth truth;
};

/// Tiles beats at jittered RR intervals, adds the class ST signature and the
/// configured interference. Deterministic in `config.rng_seed`.
SynthRecord generate_record(const SynthConfig& config, const std::string& record_id = "synthetic");

/// Records ordered LAD, LCX, RCA with ids `rec00000`, `rec00001`, ...; record i
/// uses seed derive_seed(seed, i). Default desk-scale counts mirror the
/// 419:70:283 skew of the clinical dataset.
inline constexpr ClassCounts kDefaultSynthCounts{120, 20, 80};
std::vector<SynthRecord> generate_dataset(const ClassCounts& counts, const SynthConfig& base,
                                          std::uint64_t seed);

/// `ground_truth.jsonl`: record_id, r_peak_times_s, class.
void write_ground_truth(const std::filesystem::path& path, std::span<const SynthRecord> records);

}  // namespace cao
