#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cao/nn/model.hpp"
#include "cao/nn/train.hpp"
#include "cao/pulse.hpp"

namespace cao {

/// STAGE1: LAD (1) vs LCX or RCA (0) over every pulse.
/// STAGE2: LCX (1) vs RCA (0) over non-LAD pulses only.
enum class StageTask { Stage1, Stage2 };

/// Binary view of a dataset for one stage; pulse pointers alias `dataset`.
nn::LabeledPulses derive_stage_dataset(const PulseDataset& dataset, StageTask task);

struct CascadeDecision {
  CaoClass label = CaoClass::LAD;
  double p1 = 0.0;
  std::optional<double> p2;  // set only when stage 2 was consulted
};

/// The two-stage routing rule: LAD when p1 >= threshold1, otherwise stage 2
/// is evaluated (exactly once) and LCX when p2 >= threshold2, else RCA.
CascadeDecision route_cascade(double p1, const std::function<double()>& stage2_probability, double threshold1,
                              double threshold2);

struct Cascade {
  nn::Model<double> stage1;
  nn::Model<double> stage2;
  double threshold1 = 0.5;
  double threshold2 = 0.5;
};

CascadeDecision cascade_predict(const Cascade& cascade, const Pulse& pulse);

/// Batched prediction; stage 2 only runs on pulses that stage 1 does not claim.
std::vector<CascadeDecision> cascade_predict(const Cascade& cascade, std::span<const Pulse* const> pulses);

/// Trains stage 1 on the STAGE1 derivation and stage 2 on the ground-truth
/// STAGE2 derivation. Stage k uses init seed derive_seed(train.seed, 2k) and
/// shuffle seed derive_seed(train.seed, 2k + 1).
Cascade train_cascade(const PulseDataset& train, const nn::ModelConfig& model, const nn::TrainConfig& train_cfg);

/// One stage of train_cascade on its own (stage 1 or 2), with the same seeds.
nn::Model<double> train_stage(const PulseDataset& train, StageTask task, const nn::ModelConfig& model,
                              const nn::TrainConfig& train_cfg);

/// Seeds used for stage `stage` (1 or 2) under `base_seed`.
struct StageSeeds {
  std::uint64_t init;
  std::uint64_t shuffle;
};
StageSeeds stage_seeds(std::uint64_t base_seed, int stage);

/// Directory with stage1/model.bin, stage2/model.bin and cascade.json.
void save_cascade(const std::filesystem::path& dir, const Cascade& cascade);
Cascade load_cascade(const std::filesystem::path& dir);

}  // namespace cao
