#include <catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>

#include "cao/cascade.hpp"
#include "cao/evaluation.hpp"
#include "fixtures.hpp"

using namespace cao;
using cao::testing::labeled_pulse;
using cao::testing::synth_pulses;

namespace {

PulseDataset counted_dataset(std::size_t lad, std::size_t lcx, std::size_t rca) {
  PulseDataset d;
  d.pulse_length = 64;
  std::uint64_t seed = 0;
  auto add = [&](CaoClass c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i, ++seed) d.pulses.push_back(labeled_pulse(c, "r" + std::to_string(seed), seed));
  };
  add(CaoClass::LAD, lad);
  add(CaoClass::LCX, lcx);
  add(CaoClass::RCA, rca);
  return d;
}

nn::ModelConfig tiny_model() {
  nn::ModelConfig m;
  m.stem_channels = 4;
  m.block_channels = {8};
  m.fc_hidden = 8;
  return m;
}

nn::TrainConfig quick_train(std::uint64_t seed, int epochs = 2) {
  nn::TrainConfig t;
  t.epochs = epochs;
  t.seed = seed;
  return t;
}

// Untrained stage models flagged as trained: routing does not care about skill.
Cascade random_cascade(std::uint64_t s1, std::uint64_t s2) {
  Cascade c{nn::Model<double>(tiny_model(), s1), nn::Model<double>(tiny_model(), s2)};
  c.stage1.set_trained();
  c.stage2.set_trained();
  return c;
}

std::vector<const Pulse*> pointers(const PulseDataset& d) {
  std::vector<const Pulse*> out;
  for (const Pulse& p : d.pulses) out.push_back(&p);
  return out;
}

bool same_bits(const nn::Model<double>& a, const nn::Model<double>& b) {
  const auto sa = a.state(), sb = b.state();
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (sa[i]->value.values().size() != sb[i]->value.values().size() ||
        std::memcmp(sa[i]->value.data(), sb[i]->value.data(), sizeof(double) * sa[i]->value.size()) != 0)
      return false;
  return sa.size() == sb.size();
}

}  // namespace

TEST_CASE("stage datasets follow the class mapping", "[cascade][derive]") {
  const PulseDataset d = counted_dataset(10, 3, 7);
  const auto s1 = derive_stage_dataset(d, StageTask::Stage1);
  CHECK(s1.size() == 20);
  CHECK(s1.positives() == 10);
  const auto s2 = derive_stage_dataset(d, StageTask::Stage2);
  CHECK(s2.size() == 10);
  CHECK(s2.positives() == 3);
  for (std::size_t i = 0; i < s2.size(); ++i) {
    CHECK(s2.pulses[i]->label != CaoClass::LAD);
    CHECK(s2.labels[i] == (s2.pulses[i]->label == CaoClass::LCX ? 1 : 0));
  }
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1.pulses[i] == &d.pulses[i]);
    CHECK(s1.labels[i] == (d.pulses[i].label == CaoClass::LAD ? 1 : 0));
  }
}

TEST_CASE("stage 2 derivation needs both LCX and RCA", "[cascade][derive]") {
  CHECK_THROWS_AS(derive_stage_dataset(counted_dataset(5, 0, 0), StageTask::Stage2), std::invalid_argument);
  CHECK_THROWS_AS(derive_stage_dataset(counted_dataset(5, 2, 0), StageTask::Stage2), std::invalid_argument);
  CHECK_THROWS_AS(derive_stage_dataset(PulseDataset{}, StageTask::Stage1), std::invalid_argument);
  CHECK_NOTHROW(derive_stage_dataset(counted_dataset(5, 0, 0), StageTask::Stage1));
}

TEST_CASE("routing examples", "[cascade][route]") {
  int calls = 0;
  auto stage2 = [&](double p) {
    return [&calls, p] {
      ++calls;
      return p;
    };
  };
  const CascadeDecision lad = route_cascade(0.9, stage2(0.1), 0.5, 0.5);
  CHECK(lad.label == CaoClass::LAD);
  CHECK_FALSE(lad.p2.has_value());
  CHECK(calls == 0);

  const CascadeDecision lcx = route_cascade(0.2, stage2(0.7), 0.5, 0.5);
  CHECK(lcx.label == CaoClass::LCX);
  CHECK(lcx.p2 == 0.7);
  CHECK(calls == 1);

  const CascadeDecision rca = route_cascade(0.2, stage2(0.3), 0.5, 0.5);
  CHECK(rca.label == CaoClass::RCA);
  CHECK(rca.p1 == 0.2);
  CHECK(calls == 2);

  CHECK(route_cascade(0.5, stage2(0.0), 0.5, 0.5).label == CaoClass::LAD);
  CHECK(route_cascade(0.1, stage2(0.5), 0.5, 0.5).label == CaoClass::LCX);
}

TEST_CASE("untrained cascades are rejected", "[cascade][predict]") {
  Cascade c{nn::Model<double>(tiny_model(), 1), nn::Model<double>(tiny_model(), 2)};
  const Pulse p = labeled_pulse(CaoClass::LAD, "r", 3);
  CHECK_THROWS_AS(cascade_predict(c, p), std::logic_error);
  c.stage1.set_trained();
  CHECK_THROWS_AS(cascade_predict(c, p), std::logic_error);
  c.stage2.set_trained();
  CHECK_NOTHROW(cascade_predict(c, p));
}

TEST_CASE("predictions partition inputs by the stage-1 threshold", "[cascade][predict][property]") {
  const PulseDataset d = counted_dataset(20, 20, 20);
  const auto ptrs = pointers(d);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Cascade c = random_cascade(seed, seed + 100);
    const auto base = cascade_predict(c, ptrs);
    std::vector<double> p1;
    for (const auto& dec : base) p1.push_back(dec.p1);
    std::vector<double> thresholds = p1;
    thresholds.push_back(0.01);
    thresholds.push_back(0.99);
    std::sort(thresholds.begin(), thresholds.end());

    std::size_t previous_lad = ptrs.size() + 1;
    for (double t1 : thresholds) {
      c.threshold1 = t1;
      const auto decisions = cascade_predict(c, ptrs);
      std::size_t lad = 0;
      for (std::size_t i = 0; i < decisions.size(); ++i) {
        const CascadeDecision& dec = decisions[i];
        CHECK(dec.p1 == p1[i]);
        if (dec.label == CaoClass::LAD) {
          ++lad;
          CHECK(dec.p1 >= t1);
          CHECK_FALSE(dec.p2.has_value());
        } else {
          CHECK(dec.p1 < t1);
          REQUIRE(dec.p2.has_value());
          CHECK(dec.label == (*dec.p2 >= c.threshold2 ? CaoClass::LCX : CaoClass::RCA));
        }
      }
      CHECK(lad <= previous_lad);
      previous_lad = lad;
    }
  }
}

TEST_CASE("single and batched prediction agree", "[cascade][predict]") {
  const PulseDataset d = counted_dataset(5, 5, 5);
  const Cascade c = random_cascade(3, 4);
  const auto batched = cascade_predict(c, pointers(d));
  for (std::size_t i = 0; i < d.pulses.size(); ++i) {
    const CascadeDecision one = cascade_predict(c, d.pulses[i]);
    CHECK(one.label == batched[i].label);
    CHECK(one.p1 == batched[i].p1);
    CHECK(one.p2 == batched[i].p2);
  }
}

TEST_CASE("training rejects a missing class", "[cascade][train]") {
  CHECK_THROWS_AS(train_cascade(counted_dataset(4, 4, 0), tiny_model(), quick_train(1)), std::invalid_argument);
  CHECK_THROWS_AS(train_cascade(counted_dataset(0, 4, 4), tiny_model(), quick_train(1)), std::invalid_argument);
  CHECK_THROWS_AS(train_cascade(counted_dataset(4, 0, 4), tiny_model(), quick_train(1)), std::invalid_argument);
}

TEST_CASE("cascade training is deterministic and stages are independent", "[cascade][train]") {
  const PulseDataset d = counted_dataset(12, 6, 8);
  const Cascade a = train_cascade(d, tiny_model(), quick_train(21));
  const Cascade b = train_cascade(d, tiny_model(), quick_train(21));
  CHECK(same_bits(a.stage1, b.stage1));
  CHECK(same_bits(a.stage2, b.stage2));
  CHECK(a.stage1.trained());
  CHECK(a.stage2.trained());

  // Stage 1 alone, with the same base seed, is the same model.
  CHECK(same_bits(a.stage1, train_stage(d, StageTask::Stage1, tiny_model(), quick_train(21))));

  // Retraining stage 2 under another seed leaves stage 1 and p1 untouched.
  Cascade c = a;
  c.stage2 = train_stage(d, StageTask::Stage2, tiny_model(), quick_train(99));
  CHECK_FALSE(same_bits(c.stage2, a.stage2));
  CHECK(same_bits(c.stage1, a.stage1));
  const auto before = cascade_predict(a, pointers(d));
  const auto after = cascade_predict(c, pointers(d));
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::memcmp(&before[i].p1, &after[i].p1, sizeof(double)) == 0);

  const StageSeeds s1 = stage_seeds(21, 1), s2 = stage_seeds(21, 2);
  CHECK(s1.init != s2.init);
  CHECK(s1.shuffle != s2.shuffle);
}

TEST_CASE("both stages fit clean synthetic data", "[cascade][train][slow]") {
  const PulseDataset d = synth_pulses({8, 6, 8}, 5, false);
  nn::ModelConfig m;
  m.stem_channels = 8;
  m.block_channels = {8, 16};
  m.fc_hidden = 16;
  const Cascade c = train_cascade(d, m, quick_train(3, 8));
  for (StageTask task : {StageTask::Stage1, StageTask::Stage2}) {
    const auto data = derive_stage_dataset(d, task);
    const std::vector<double> p =
        nn::predict_proba(task == StageTask::Stage1 ? c.stage1 : c.stage2, data.pulses);
    const double auroc = compute_auroc(p, data.labels);
    INFO("stage " << (task == StageTask::Stage1 ? 1 : 2) << " training AUROC " << auroc);
    CHECK(auroc >= 0.95);
  }
}

TEST_CASE("cascade checkpoints round-trip", "[cascade][io]") {
  const auto dir = std::filesystem::temp_directory_path() / "cao_test_cascade_ckpt";
  std::filesystem::remove_all(dir);
  Cascade c = random_cascade(7, 8);
  c.threshold1 = 0.4;
  c.threshold2 = 0.6;
  save_cascade(dir, c);
  CHECK(std::filesystem::exists(dir / "stage1" / "model.bin"));
  CHECK(std::filesystem::exists(dir / "stage2" / "model.bin"));
  CHECK(std::filesystem::exists(dir / "cascade.json"));
  const Cascade back = load_cascade(dir);
  CHECK(back.threshold1 == 0.4);
  CHECK(back.threshold2 == 0.6);
  CHECK(same_bits(back.stage1, c.stage1));
  CHECK(same_bits(back.stage2, c.stage2));
  const PulseDataset d = counted_dataset(3, 3, 3);
  const auto x = cascade_predict(c, pointers(d));
  const auto y = cascade_predict(back, pointers(d));
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].label == y[i].label);
    CHECK(x[i].p1 == y[i].p1);
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_cascade(dir));
}
