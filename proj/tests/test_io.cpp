#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <utility>

#include "cao/nn/checkpoint.hpp"
#include "cao/pulse_io.hpp"
#include "cao/record_io.hpp"
#include "fixtures.hpp"

using namespace cao;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory, removed when the test ends.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("cao_test_io_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("record CSV round-trips to six decimals", "[io][csv]") {
  Scratch s("csv");
  const auto records = cao::testing::synth_records({1, 1, 1}, 4);
  write_dataset(s.dir, records);
  const std::vector<EcgRecord> back = read_dataset(s.dir);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].record_id == records[i].record_id);
    CHECK(back[i].label == records[i].label);
    CHECK(back[i].sample_rate_hz == records[i].sample_rate_hz);
    REQUIRE(back[i].samples.rows() == 12);
    REQUIRE(back[i].samples.cols() == records[i].samples.cols());
    CHECK((back[i].samples - records[i].samples).cwiseAbs().maxCoeff() <= 5e-7 + 1e-12);
  }
  std::ifstream csv(s.dir / "rec00000.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "I,II,III,aVR,aVL,aVF,V1,V2,V3,V4,V5,V6");
}

TEST_CASE("manifest problems are reported with their location", "[io][manifest]") {
  Scratch s("manifest");
  CHECK_THROWS_WITH(read_manifest(s.dir), Catch::Matchers::ContainsSubstring("manifest.jsonl"));

  write_text(s.dir / "manifest.jsonl",
             "{\"record_id\":\"a\",\"label\":\"LAD\",\"sample_rate_hz\":500,\"file\":\"a.csv\"}\n"
             "{\"record_id\":\"b\",\"label\":\"LMCA\",\"sample_rate_hz\":500,\"file\":\"b.csv\"}\n");
  CHECK_THROWS_WITH(read_manifest(s.dir), Catch::Matchers::ContainsSubstring("manifest.jsonl:2"));
}

TEST_CASE("every unreadable record is named in one error", "[io][manifest]") {
  Scratch s("broken");
  const auto records = cao::testing::synth_records({1, 1, 1}, 5);
  write_dataset(s.dir, records);
  fs::remove(s.dir / "rec00001.csv");
  write_text(s.dir / "rec00002.csv", "I,II\n1,2\n");
  try {
    read_dataset(s.dir);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2 unreadable") != std::string::npos);
    CHECK(msg.find("rec00001") != std::string::npos);
    CHECK(msg.find("rec00002") != std::string::npos);
    CHECK(msg.find("rec00000") == std::string::npos);
  }
}

TEST_CASE("pulse files round-trip at float precision", "[io][pulses]") {
  Scratch s("pulses");
  for (bool preprocess : {true, false}) {
    const auto records = cao::testing::synth_records({1, 1, 1}, 6);
    const PulseDataset d = build_dataset(records, preprocess, FilterSpec{}, WindowSpec{});
    write_pulses(s.dir / "pulses.bin", d);
    const PulseDataset back = read_pulses(s.dir / "pulses.bin");
    CHECK(back.provenance == d.provenance);
    CHECK(back.pulse_length == d.pulse_length);
    CHECK(back.sample_rate_hz == d.sample_rate_hz);
    CHECK(back.class_counts() == d.class_counts());
    REQUIRE(back.pulses.size() == d.pulses.size());
    for (std::size_t i = 0; i < d.pulses.size(); ++i) {
      const Pulse& a = d.pulses[i];
      const Pulse& b = back.pulses[i];
      CHECK(a.source_record_id == b.source_record_id);
      CHECK(a.label == b.label);
      CHECK(a.r_peak_index == b.r_peak_index);
      CHECK(b.leads == a.leads.cast<float>().cast<double>());
    }
    const nlohmann::json summary = pulse_summary(d);
    CHECK(summary.dump().find("LAD") != std::string::npos);
  }
}

TEST_CASE("corrupt pulse files are rejected with the path", "[io][pulses]") {
  Scratch s("bad_pulses");
  write_text(s.dir / "pulses.bin", "JUNKJUNKJUNK");
  CHECK_THROWS_WITH(read_pulses(s.dir / "pulses.bin"), Catch::Matchers::ContainsSubstring("pulses.bin"));
  CHECK_THROWS(read_pulses(s.dir / "missing.bin"));

  const auto records = cao::testing::synth_records({1, 0, 1}, 7);
  write_pulses(s.dir / "ok.bin", build_dataset(records, true, FilterSpec{}, WindowSpec{}));
  const auto size = fs::file_size(s.dir / "ok.bin");
  fs::resize_file(s.dir / "ok.bin", size - 100);
  CHECK_THROWS(read_pulses(s.dir / "ok.bin"));
}

TEST_CASE("filter and window settings round-trip through JSON", "[io][json]") {
  FilterSpec f;
  f.notch_freq_hz = 50.0;
  f.notch_q = 25.0;
  f.highpass_order = 3;
  f.zero_phase = false;
  const FilterSpec g = filter_from_json(filter_to_json(f));
  CHECK(g.notch_freq_hz == 50.0);
  CHECK(g.notch_q == 25.0);
  CHECK(g.highpass_cutoff_hz == f.highpass_cutoff_hz);
  CHECK(g.highpass_order == 3);
  CHECK_FALSE(g.zero_phase);
  WindowSpec w;
  w.pre_s = 0.3;
  w.post_s = 0.5;
  const WindowSpec v = window_from_json(window_to_json(w));
  CHECK(v.pre_s == 0.3);
  CHECK(v.post_s == 0.5);
}

TEST_CASE("model checkpoints round-trip bit-exactly", "[io][model]") {
  Scratch s("model");
  for (nn::Variant variant : {nn::Variant::Conv1D, nn::Variant::Conv2D}) {
    nn::ModelConfig cfg;
    cfg.variant = variant;
    cfg.stem_channels = 4;
    cfg.block_channels = {4, 8};
    cfg.fc_hidden = 8;
    nn::Model<double> m(cfg, 12);
    m.set_trained();
    Rng rng(1);
    for (auto* p : m.state())
      for (nn::Index i = 0; i < p->value.size(); ++i) p->value.values()[i] += 0.01 * rng.normal();
    nn::save_model(s.dir / "model.bin", m);
    const nn::Model<double> back = nn::load_model<double>(s.dir / "model.bin");
    CHECK(back.config() == cfg);
    CHECK(back.trained());
    const auto a = std::as_const(m).state();
    const auto b = back.state();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i]->name == b[i]->name);
      CHECK(a[i]->value.values() == b[i]->value.values());
    }
  }
}

TEST_CASE("model checkpoints are checked against their config", "[io][model]") {
  Scratch s("model_bad");
  nn::ModelConfig cfg;
  cfg.stem_channels = 4;
  cfg.block_channels = {4};
  cfg.fc_hidden = 8;
  nn::save_model(s.dir / "model.bin", nn::Model<double>(cfg, 1));

  // Rewrite the embedded config so the stored tensors no longer fit it.
  std::ifstream in(s.dir / "model.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::string from = "\"fc_hidden\":8", to = "\"fc_hidden\":9";
  const auto at = bytes.find(from);
  REQUIRE(at != std::string::npos);
  bytes.replace(at, from.size(), to);
  write_text(s.dir / "model.bin", bytes);
  CHECK_THROWS_WITH(nn::load_model<double>(s.dir / "model.bin"), Catch::Matchers::ContainsSubstring("shape"));

  write_text(s.dir / "junk.bin", "CAOX");
  CHECK_THROWS(nn::load_model<double>(s.dir / "junk.bin"));
}
