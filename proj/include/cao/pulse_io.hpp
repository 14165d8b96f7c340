#pragma once

#include <filesystem>

#include <json.hpp>

#include "cao/pulse.hpp"

namespace cao {

/// `pulses.bin`, little-endian:
///   "CAOP" | version u32 | L u32 | count u64 | fs f64 | provenance u8
///   then per pulse: id length u32 + UTF-8 bytes | label u8 | r_peak_index u32 |
///   12 x L f32, lead-major.
/// Amplitudes are stored as f32, so a round trip is exact only to float precision.
inline constexpr std::uint32_t kPulseFileVersion = 1;

void write_pulses(const std::filesystem::path& path, const PulseDataset& dataset);
PulseDataset read_pulses(const std::filesystem::path& path);

/// Summary for `pulses.meta.json`: per-class counts, window, provenance.
nlohmann::json pulse_summary(const PulseDataset& dataset);

nlohmann::json filter_to_json(const FilterSpec& spec);
FilterSpec filter_from_json(const nlohmann::json& j);
nlohmann::json window_to_json(const WindowSpec& window);
WindowSpec window_from_json(const nlohmann::json& j);

}  // namespace cao
