#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cao/signal.hpp"

namespace cao {

/// One line of `manifest.jsonl`.
struct ManifestEntry {
  std::string record_id;
  CaoClass label = CaoClass::LAD;
  double sample_rate_hz = 0.0;
  std::string file;
};

/// CSV body: header row of the 12 lead names, then one row per sample in mV.
void write_record_csv(const std::filesystem::path& path, const EcgRecord& record);
LeadMatrix read_record_csv(const std::filesystem::path& path);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dataset_dir);

/// Writes `manifest.jsonl` plus one `<record_id>.csv` per record.
void write_dataset(const std::filesystem::path& dataset_dir, std::span<const EcgRecord> records);

/// Loads every manifest entry. All unreadable records are reported together,
/// each named, in a single std::runtime_error.
std::vector<EcgRecord> read_dataset(const std::filesystem::path& dataset_dir);

}  // namespace cao
