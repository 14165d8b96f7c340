#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cao/signal.hpp"

namespace cao {

struct Pulse {
  std::string source_record_id;
  LeadMatrix leads;  // 12 x L, normalized
  Eigen::Index r_peak_index = 0;
  CaoClass label = CaoClass::LAD;

  Eigen::Index length() const { return leads.cols(); }
};

/// RAW mirrors unaligned, unfiltered windows; PREPROCESSED is denoised,
/// R-aligned pulses.
enum class Provenance : std::uint8_t { Raw = 0, Preprocessed = 1 };

std::string_view to_string(Provenance p);

struct WindowSpec {
  double pre_s = 0.25;
  double post_s = 0.45;

  Eigen::Index pre_samples(double fs) const;
  Eigen::Index length(double fs) const;
};

struct PulseDataset {
  std::vector<Pulse> pulses;
  WindowSpec window{};
  double sample_rate_hz = 0.0;
  Provenance provenance = Provenance::Preprocessed;
  Eigen::Index pulse_length = 0;

  ClassCounts class_counts() const;
  std::size_t record_count() const;
  void validate() const;
};

/// Pan-Tompkins-style QRS detector: 5-15 Hz band-pass, five-point derivative,
/// squaring, 150 ms moving-window integration, adaptive dual thresholds with a
/// 200 ms refractory period and search-back, then refinement to the largest
/// sample of `lead` within +-25 ms.
///
/// Requires at least 2 s of signal. Returns strictly increasing indices whose
/// gaps are at least 200 ms; an empty result is valid.
std::vector<Eigen::Index> detect_r_peaks(const Eigen::Ref<const Eigen::VectorXd>& lead, double fs);

/// Median-centres each lead, then divides the whole window by its largest
/// absolute value (floored at 1e-6).
void normalize_pulse(LeadMatrix& window);

/// One normalized pulse per peak whose [p - pre, p + post) window fits inside
/// the record; others are skipped.
std::vector<Pulse> extract_pulses(const EcgRecord& record, std::span<const Eigen::Index> peaks,
                                  const WindowSpec& window);

/// floor(N / L) back-to-back windows from the start of the record, normalized
/// like pulses but without filtering or alignment (r_peak_index = 0).
std::vector<Pulse> segment_raw_windows(const EcgRecord& record, const WindowSpec& window);

/// Pulses of a single record for the chosen arm.
std::vector<Pulse> record_pulses(const EcgRecord& record, bool preprocess, const FilterSpec& spec,
                                 const WindowSpec& window);

/// Records are processed independently (up to `threads` at a time); output is
/// ordered by record_id, then by position within the record.
PulseDataset build_dataset(std::span<const EcgRecord> records, bool preprocess,
                           const FilterSpec& spec, const WindowSpec& window,
                           unsigned threads = 1);

/// Worker count from CAO_THREADS, else the hardware concurrency (at least 1).
unsigned default_thread_count();

}  // namespace cao
