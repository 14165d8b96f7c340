#pragma once

#include <vector>

#include "cao/pulse.hpp"
#include "cao/synth.hpp"

namespace cao::testing {

inline std::vector<EcgRecord> synth_records(const ClassCounts& counts, std::uint64_t seed, bool noisy = true) {
  SynthConfig cfg;
  if (!noisy) cfg.noise = NoiseConfig::none();
  std::vector<EcgRecord> out;
  for (SynthRecord& r : generate_dataset(counts, cfg, seed)) out.push_back(std::move(r.record));
  return out;
}

/// Preprocessed pulses of a small synthetic cohort.
inline PulseDataset synth_pulses(const ClassCounts& counts, std::uint64_t seed, bool noisy = true) {
  const std::vector<EcgRecord> records = synth_records(counts, seed, noisy);
  return build_dataset(records, true, FilterSpec{}, WindowSpec{});
}

/// A pulse of the given class with random samples; enough for routing tests.
inline Pulse labeled_pulse(CaoClass label, const std::string& record, std::uint64_t seed, Eigen::Index len = 64) {
  Rng rng(seed);
  Pulse p;
  p.source_record_id = record;
  p.label = label;
  p.leads.resize(12, len);
  for (Eigen::Index i = 0; i < p.leads.size(); ++i) p.leads.data()[i] = rng.normal();
  return p;
}

}  // namespace cao::testing
