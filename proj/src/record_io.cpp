#include "cao/record_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cao {

namespace fs = std::filesystem;
using nlohmann::json;

void write_record_csv(const fs::path& path, const EcgRecord& record) {
  record.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  for (std::size_t l = 0; l < kLeadCount; ++l) out << (l ? "," : "") << kLeadNames[l];
  out << '\n';

  std::string line;
  char cell[32];
  for (Eigen::Index n = 0; n < record.length(); ++n) {
    line.clear();
    for (Eigen::Index l = 0; l < record.samples.rows(); ++l) {
      if (l) line.push_back(',');
      std::snprintf(cell, sizeof cell, "%.6f", record.samples(l, n));
      line += cell;
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

LeadMatrix read_record_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::string expected;
    for (std::size_t l = 0; l < kLeadCount; ++l) (expected += l ? "," : "") += kLeadNames[l];
    if (line != expected)
      throw std::runtime_error(path.string() + ": unexpected header '" + line + "'");
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t l = 0; l < kLeadCount; ++l) {
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{})
        throw std::runtime_error(path.string() + ": bad number on data row " + std::to_string(rows));
      values.push_back(v);
      p = next;
      if (l + 1 < kLeadCount) {
        if (p == end || *p != ',')
          throw std::runtime_error(path.string() + ": expected 12 columns on data row " +
                                   std::to_string(rows));
        ++p;
      }
    }
    if (p != end)
      throw std::runtime_error(path.string() + ": trailing data on row " + std::to_string(rows));
  }
  if (rows == 0) throw std::runtime_error(path.string() + ": no samples");

  // values are sample-major; transpose into lead rows.
  using SampleMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const SampleMajor> m(values.data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(kLeadCount));
  return m.transpose();
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.jsonl";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.record_id = j.at("record_id").get<std::string>();
      e.label = class_from_string(j.at("label").get<std::string>());
      e.sample_rate_hz = j.at("sample_rate_hz").get<double>();
      e.file = j.at("file").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

void write_dataset(const fs::path& dir, std::span<const EcgRecord> records) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.jsonl").string());
  for (const EcgRecord& r : records) {
    const std::string file = r.record_id + ".csv";
    write_record_csv(dir / file, r);
    json j;
    j["record_id"] = r.record_id;
    j["label"] = std::string(to_string(r.label));
    j["sample_rate_hz"] = r.sample_rate_hz;
    j["file"] = file;
    manifest << j.dump() << '\n';
  }
}

std::vector<EcgRecord> read_dataset(const fs::path& dir) {
  const std::vector<ManifestEntry> entries = read_manifest(dir);
  std::vector<EcgRecord> records;
  records.reserve(entries.size());
  std::ostringstream failures;
  std::size_t failed = 0;
  for (const ManifestEntry& e : entries) {
    try {
      EcgRecord r;
      r.record_id = e.record_id;
      r.label = e.label;
      r.sample_rate_hz = e.sample_rate_hz;
      r.samples = read_record_csv(dir / e.file);
      r.validate();
      records.push_back(std::move(r));
    } catch (const std::exception& ex) {
      failures << "\n  record '" << e.record_id << "': " << ex.what();
      ++failed;
    }
  }
  if (failed)
    throw std::runtime_error(std::to_string(failed) + " unreadable record(s) in " + dir.string() +
                             failures.str());
  return records;
}

}  // namespace cao
