#include "cao/pulse_io.hpp"

#include <fstream>
#include <stdexcept>

#include "cao/binary_io.hpp"

namespace cao {

namespace fs = std::filesystem;

void write_pulses(const fs::path& path, const PulseDataset& ds) {
  ds.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("CAOP", 4);
  binio::put<std::uint32_t>(out, kPulseFileVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.pulse_length));
  binio::put<std::uint64_t>(out, ds.pulses.size());
  binio::put<double>(out, ds.sample_rate_hz);
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(ds.provenance));
  for (const Pulse& p : ds.pulses) {
    binio::put_string(out, p.source_record_id);
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(p.label));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.r_peak_index));
    for (Eigen::Index l = 0; l < p.leads.rows(); ++l)
      for (Eigen::Index n = 0; n < p.leads.cols(); ++n)
        binio::put<float>(out, static_cast<float>(p.leads(l, n)));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PulseDataset read_pulses(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    binio::expect_magic(in, "CAOP", path.string());
    const auto version = binio::get<std::uint32_t>(in);
    if (version != kPulseFileVersion)
      throw std::runtime_error("unsupported version " + std::to_string(version));
    PulseDataset ds;
    ds.pulse_length = binio::get<std::uint32_t>(in);
    const auto count = binio::get<std::uint64_t>(in);
    ds.sample_rate_hz = binio::get<double>(in);
    const auto prov = binio::get<std::uint8_t>(in);
    if (prov > 1) throw std::runtime_error("bad provenance flag");
    ds.provenance = static_cast<Provenance>(prov);
    ds.pulses.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      Pulse p;
      p.source_record_id = binio::get_string(in);
      p.label = class_from_code(binio::get<std::uint8_t>(in));
      p.r_peak_index = binio::get<std::uint32_t>(in);
      p.leads.resize(kLeadCount, ds.pulse_length);
      for (Eigen::Index l = 0; l < p.leads.rows(); ++l)
        for (Eigen::Index n = 0; n < p.leads.cols(); ++n) p.leads(l, n) = binio::get<float>(in);
      ds.pulses.push_back(std::move(p));
    }
    ds.validate();
    return ds;
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

nlohmann::json pulse_summary(const PulseDataset& ds) {
  const ClassCounts c = ds.class_counts();
  nlohmann::json j;
  j["provenance"] = std::string(to_string(ds.provenance));
  j["sample_rate_hz"] = ds.sample_rate_hz;
  j["pulse_length"] = ds.pulse_length;
  j["window_pre_s"] = ds.window.pre_s;
  j["window_post_s"] = ds.window.post_s;
  j["pulse_count"] = ds.pulses.size();
  j["record_count"] = ds.record_count();
  j["class_counts"] = {{"LAD", c.lad}, {"LCX", c.lcx}, {"RCA", c.rca}};
  return j;
}

nlohmann::json filter_to_json(const FilterSpec& spec) {
  return {{"notch_freq_hz", spec.notch_freq_hz},
          {"notch_q", spec.notch_q},
          {"highpass_cutoff_hz", spec.highpass_cutoff_hz},
          {"highpass_order", spec.highpass_order},
          {"zero_phase", spec.zero_phase}};
}

FilterSpec filter_from_json(const nlohmann::json& j) {
  FilterSpec s;
  s.notch_freq_hz = j.at("notch_freq_hz").get<double>();
  s.notch_q = j.at("notch_q").get<double>();
  s.highpass_cutoff_hz = j.at("highpass_cutoff_hz").get<double>();
  s.highpass_order = j.at("highpass_order").get<int>();
  s.zero_phase = j.at("zero_phase").get<bool>();
  return s;
}

nlohmann::json window_to_json(const WindowSpec& window) {
  return {{"pre_s", window.pre_s}, {"post_s", window.post_s}};
}

WindowSpec window_from_json(const nlohmann::json& j) {
  return {j.at("pre_s").get<double>(), j.at("post_s").get<double>()};
}

}  // namespace cao
