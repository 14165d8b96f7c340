#include "cao/cascade.hpp"

#include <fstream>
#include <stdexcept>

#include "cao/nn/checkpoint.hpp"
#include "cao/random.hpp"

namespace cao {

nn::LabeledPulses derive_stage_dataset(const PulseDataset& dataset, StageTask task) {
  if (dataset.pulses.empty()) throw std::invalid_argument("derive_stage_dataset: empty dataset");
  nn::LabeledPulses out;
  for (const Pulse& p : dataset.pulses) {
    if (task == StageTask::Stage1) {
      out.pulses.push_back(&p);
      out.labels.push_back(p.label == CaoClass::LAD ? 1 : 0);
    } else if (p.label != CaoClass::LAD) {
      out.pulses.push_back(&p);
      out.labels.push_back(p.label == CaoClass::LCX ? 1 : 0);
    }
  }
  if (task == StageTask::Stage2) {
    const std::size_t pos = out.positives();
    if (pos == 0 || pos == out.size())
      throw std::invalid_argument("derive_stage_dataset: stage 2 needs both LCX and RCA pulses");
  }
  return out;
}

CascadeDecision route_cascade(double p1, const std::function<double()>& stage2_probability, double threshold1,
                              double threshold2) {
  CascadeDecision d;
  d.p1 = p1;
  if (p1 >= threshold1) {
    d.label = CaoClass::LAD;
    return d;
  }
  d.p2 = stage2_probability();
  d.label = *d.p2 >= threshold2 ? CaoClass::LCX : CaoClass::RCA;
  return d;
}

namespace {

void require_trained(const Cascade& c) {
  if (!c.stage1.trained() || !c.stage2.trained())
    throw std::logic_error("cascade_predict: both stage models must be trained");
}

}  // namespace

CascadeDecision cascade_predict(const Cascade& cascade, const Pulse& pulse) {
  const Pulse* one[] = {&pulse};
  return cascade_predict(cascade, one).front();
}

std::vector<CascadeDecision> cascade_predict(const Cascade& cascade, std::span<const Pulse* const> pulses) {
  require_trained(cascade);
  const std::vector<double> p1 = nn::predict_proba(cascade.stage1, pulses);
  std::vector<const Pulse*> second;
  for (std::size_t i = 0; i < pulses.size(); ++i)
    if (p1[i] < cascade.threshold1) second.push_back(pulses[i]);
  const std::vector<double> p2 = second.empty() ? std::vector<double>{} : nn::predict_proba(cascade.stage2, second);

  std::vector<CascadeDecision> out;
  out.reserve(pulses.size());
  std::size_t k = 0;
  for (double p : p1)
    out.push_back(route_cascade(p, [&] { return p2.at(k++); }, cascade.threshold1, cascade.threshold2));
  return out;
}

StageSeeds stage_seeds(std::uint64_t base_seed, int stage) {
  const auto s = static_cast<std::uint64_t>(stage);
  return {derive_seed(base_seed, 2 * s), derive_seed(base_seed, 2 * s + 1)};
}

Cascade train_cascade(const PulseDataset& train, const nn::ModelConfig& model, const nn::TrainConfig& train_cfg) {
  const ClassCounts counts = train.class_counts();
  for (CaoClass c : kAllClasses)
    if (counts[c] == 0)
      throw std::invalid_argument("train_cascade: training set has no " + std::string(to_string(c)) + " pulses");

  return Cascade{train_stage(train, StageTask::Stage1, model, train_cfg),
                 train_stage(train, StageTask::Stage2, model, train_cfg)};
}

nn::Model<double> train_stage(const PulseDataset& train, StageTask task, const nn::ModelConfig& model,
                              const nn::TrainConfig& train_cfg) {
  const StageSeeds seeds = stage_seeds(train_cfg.seed, task == StageTask::Stage1 ? 1 : 2);
  nn::Model<double> m(model, seeds.init);
  nn::TrainConfig cfg = train_cfg;
  cfg.seed = seeds.shuffle;
  nn::train(m, derive_stage_dataset(train, task), cfg);
  return m;
}

void save_cascade(const std::filesystem::path& dir, const Cascade& c) {
  std::filesystem::create_directories(dir / "stage1");
  std::filesystem::create_directories(dir / "stage2");
  nn::save_model(dir / "stage1" / "model.bin", c.stage1);
  nn::save_model(dir / "stage2" / "model.bin", c.stage2);
  nlohmann::json j;
  j["threshold1"] = c.threshold1;
  j["threshold2"] = c.threshold2;
  j["variant"] = std::string(nn::to_string(c.stage1.config().variant));
  std::ofstream out(dir / "cascade.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "cascade.json").string());
  out << j.dump(2) << '\n';
}

Cascade load_cascade(const std::filesystem::path& dir) {
  std::ifstream in(dir / "cascade.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "cascade.json").string());
  const nlohmann::json j = nlohmann::json::parse(in);
  Cascade c{nn::load_model<double>(dir / "stage1" / "model.bin"), nn::load_model<double>(dir / "stage2" / "model.bin"),
            j.at("threshold1").get<double>(), j.at("threshold2").get<double>()};
  if (!(c.stage1.config() == c.stage2.config()))
    throw std::runtime_error(dir.string() + ": stage models disagree on architecture");
  if (nn::variant_from_string(j.at("variant").get<std::string>()) != c.stage1.config().variant)
    throw std::runtime_error(dir.string() + ": cascade.json variant does not match the stage models");
  return c;
}

}  // namespace cao
