#include "cao/pulse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace cao {

std::string_view to_string(Provenance p) {
  return p == Provenance::Raw ? "RAW" : "PREPROCESSED";
}

Eigen::Index WindowSpec::pre_samples(double fs) const {
  return static_cast<Eigen::Index>(std::llround(pre_s * fs));
}

Eigen::Index WindowSpec::length(double fs) const {
  return pre_samples(fs) + static_cast<Eigen::Index>(std::llround(post_s * fs));
}

ClassCounts PulseDataset::class_counts() const {
  ClassCounts c;
  for (const Pulse& p : pulses) ++c[p.label];
  return c;
}

std::size_t PulseDataset::record_count() const {
  std::set<std::string_view> ids;
  for (const Pulse& p : pulses) ids.insert(p.source_record_id);
  return ids.size();
}

void PulseDataset::validate() const {
  for (const Pulse& p : pulses) {
    if (p.leads.rows() != static_cast<Eigen::Index>(kLeadCount) || p.leads.cols() != pulse_length)
      throw std::invalid_argument("pulse from '" + p.source_record_id + "' has wrong shape");
    if (p.r_peak_index < 0 || p.r_peak_index >= pulse_length)
      throw std::invalid_argument("pulse from '" + p.source_record_id + "' has r_peak_index outside window");
    if (!p.leads.allFinite())
      throw std::invalid_argument("pulse from '" + p.source_record_id + "' has non-finite values");
  }
}

namespace {

constexpr double kRefractoryS = 0.200;
constexpr double kIntegrationS = 0.150;
constexpr double kRefineS = 0.025;
constexpr double kTWaveS = 0.360;

// Centered moving average of width `w` (odd) with truncated edges.
Eigen::VectorXd moving_average(const Eigen::VectorXd& x, Eigen::Index w) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd cum(n + 1);
  cum[0] = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) cum[i + 1] = cum[i] + x[i];
  const Eigen::Index half = w / 2;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n, i + half + 1);
    out[i] = (cum[hi] - cum[lo]) / static_cast<double>(w);
  }
  return out;
}

struct Candidate {
  Eigen::Index index;
  double value;
};

}  // namespace

std::vector<Eigen::Index> detect_r_peaks(const Eigen::Ref<const Eigen::VectorXd>& lead, double fs) {
  if (!(fs > 0.0)) throw std::invalid_argument("detect_r_peaks: sample rate must be positive");
  const Eigen::Index n = lead.size();
  const auto two_seconds = static_cast<Eigen::Index>(std::ceil(2.0 * fs));
  if (n < two_seconds) throw std::invalid_argument("detect_r_peaks: signal shorter than 2 s");
  if (!lead.allFinite()) throw std::invalid_argument("detect_r_peaks: non-finite sample");

  // Band-pass 5-15 Hz (zero-phase, so no group-delay bookkeeping).
  const double hi_cut = std::min(15.0, 0.45 * fs);
  Eigen::VectorXd bp = apply_filter(lead, design_highpass_butterworth(5.0, 2, fs), true);
  bp = apply_filter(bp, design_lowpass_butterworth(hi_cut, 2, fs), true);

  Eigen::VectorXd slope = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 2; i + 2 < n; ++i)
    slope[i] = (2.0 * bp[i + 1] + bp[i + 2] - bp[i - 2] - 2.0 * bp[i - 1]) * fs / 8.0;

  Eigen::Index width = std::max<Eigen::Index>(1, std::llround(kIntegrationS * fs));
  if (width % 2 == 0) ++width;
  const Eigen::VectorXd energy = moving_average(slope.array().square().matrix(), width);

  const auto refractory = static_cast<Eigen::Index>(std::llround(kRefractoryS * fs));
  const auto t_wave_window = static_cast<Eigen::Index>(std::llround(kTWaveS * fs));

  // Local maxima of the integrated energy, at most one per refractory span.
  std::vector<Candidate> candidates;
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    if (!(energy[i] > 0.0 && energy[i] > energy[i - 1] && energy[i] >= energy[i + 1])) continue;
    if (!candidates.empty() && i - candidates.back().index < refractory) {
      if (energy[i] > candidates.back().value) candidates.back() = {i, energy[i]};
      continue;
    }
    candidates.push_back({i, energy[i]});
  }
  if (candidates.empty()) return {};

  // Threshold learning over the first 2 s.
  const Eigen::VectorXd head = energy.head(two_seconds);
  double spk = 0.25 * head.maxCoeff();
  double npk = 0.5 * head.mean();
  auto threshold1 = [&] { return npk + 0.25 * (spk - npk); };

  auto max_slope_near = [&](Eigen::Index i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - width / 2);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + width / 2);
    return slope.segment(lo, hi - lo + 1).cwiseAbs().maxCoeff();
  };

  std::vector<Eigen::Index> qrs;
  std::deque<Eigen::Index> rr_history;
  double last_slope = 0.0;
  std::vector<Candidate> rejected;  // since the last accepted QRS

  auto accept = [&](const Candidate& c, double learn) {
    if (!qrs.empty()) {
      rr_history.push_back(c.index - qrs.back());
      if (rr_history.size() > 8) rr_history.pop_front();
    }
    qrs.push_back(c.index);
    last_slope = max_slope_near(c.index);
    spk = learn * c.value + (1.0 - learn) * spk;
    rejected.clear();
  };

  for (const Candidate& c : candidates) {
    // Search-back when the rhythm has gone quiet for 1.66 RR.
    if (!qrs.empty() && !rr_history.empty()) {
      const double rr_avg =
          std::accumulate(rr_history.begin(), rr_history.end(), 0.0) / rr_history.size();
      if (static_cast<double>(c.index - qrs.back()) > 1.66 * rr_avg) {
        const double threshold2 = 0.5 * threshold1();
        const Candidate* best = nullptr;
        for (const Candidate& r : rejected)
          if (r.value > threshold2 && r.index - qrs.back() >= refractory &&
              c.index - r.index >= refractory && (!best || r.value > best->value))
            best = &r;
        if (best) accept(*best, 0.25);
      }
    }

    const bool clear_of_last = qrs.empty() || c.index - qrs.back() >= refractory;
    bool is_qrs = c.value > threshold1() && clear_of_last;
    if (is_qrs && !qrs.empty() && c.index - qrs.back() < t_wave_window &&
        max_slope_near(c.index) < 0.5 * last_slope)
      is_qrs = false;  // T wave

    if (is_qrs) {
      accept(c, 0.125);
    } else {
      npk = 0.125 * c.value + 0.875 * npk;
      rejected.push_back(c);
    }
  }

  // Refine to the largest sample of the input lead, then re-impose the refractory gap.
  const auto reach = static_cast<Eigen::Index>(std::llround(kRefineS * fs));
  std::vector<Eigen::Index> peaks;
  for (Eigen::Index q : qrs) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, q - reach);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, q + reach);
    Eigen::Index arg = 0;
    lead.segment(lo, hi - lo + 1).maxCoeff(&arg);
    const Eigen::Index p = lo + arg;
    if (!peaks.empty() && p - peaks.back() < refractory) {
      if (lead[p] > lead[peaks.back()]) peaks.back() = p;
      continue;
    }
    peaks.push_back(p);
  }
  return peaks;
}

void normalize_pulse(LeadMatrix& w) {
  std::vector<double> scratch(static_cast<std::size_t>(w.cols()));
  for (Eigen::Index l = 0; l < w.rows(); ++l) {
    std::copy(w.row(l).data(), w.row(l).data() + w.cols(), scratch.begin());
    const std::size_t mid = scratch.size() / 2;
    std::nth_element(scratch.begin(), scratch.begin() + mid, scratch.end());
    double median = scratch[mid];
    if (scratch.size() % 2 == 0) {
      const double below = *std::max_element(scratch.begin(), scratch.begin() + mid);
      median = 0.5 * (median + below);
    }
    w.row(l).array() -= median;
  }
  const double scale = std::max(w.cwiseAbs().maxCoeff(), 1e-6);
  w /= scale;
}

std::vector<Pulse> extract_pulses(const EcgRecord& record, std::span<const Eigen::Index> peaks,
                                  const WindowSpec& window) {
  const Eigen::Index n = record.length();
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    if (peaks[i] < 0 || peaks[i] >= n)
      throw std::invalid_argument("extract_pulses: peak index out of range in '" + record.record_id + "'");
    if (i && peaks[i] <= peaks[i - 1])
      throw std::invalid_argument("extract_pulses: peaks not strictly increasing in '" +
                                  record.record_id + "'");
  }
  const Eigen::Index pre = window.pre_samples(record.sample_rate_hz);
  const Eigen::Index len = window.length(record.sample_rate_hz);
  if (pre < 0 || len <= pre) throw std::invalid_argument("extract_pulses: empty window");

  std::vector<Pulse> out;
  for (Eigen::Index p : peaks) {
    const Eigen::Index start = p - pre;
    if (start < 0 || start + len > n) continue;
    Pulse pulse;
    pulse.source_record_id = record.record_id;
    pulse.label = record.label;
    pulse.r_peak_index = pre;
    pulse.leads = record.samples.middleCols(start, len);
    normalize_pulse(pulse.leads);
    out.push_back(std::move(pulse));
  }
  return out;
}

std::vector<Pulse> segment_raw_windows(const EcgRecord& record, const WindowSpec& window) {
  const Eigen::Index len = window.length(record.sample_rate_hz);
  if (len < 1) throw std::invalid_argument("segment_raw_windows: empty window");
  std::vector<Pulse> out;
  for (Eigen::Index start = 0; start + len <= record.length(); start += len) {
    Pulse pulse;
    pulse.source_record_id = record.record_id;
    pulse.label = record.label;
    pulse.r_peak_index = 0;
    pulse.leads = record.samples.middleCols(start, len);
    normalize_pulse(pulse.leads);
    out.push_back(std::move(pulse));
  }
  return out;
}

std::vector<Pulse> record_pulses(const EcgRecord& record, bool preprocess, const FilterSpec& spec,
                                 const WindowSpec& window) {
  record.validate();
  if (!preprocess) return segment_raw_windows(record, window);
  const EcgRecord clean = denoise_record(record, spec);
  const Eigen::VectorXd lead_ii = clean.samples.row(lead::II).transpose();
  const std::vector<Eigen::Index> peaks = detect_r_peaks(lead_ii, clean.sample_rate_hz);
  return extract_pulses(clean, peaks, window);
}

unsigned default_thread_count() {
  if (const char* env = std::getenv("CAO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

PulseDataset build_dataset(std::span<const EcgRecord> records, bool preprocess,
                           const FilterSpec& spec, const WindowSpec& window, unsigned threads) {
  if (records.empty()) throw std::invalid_argument("build_dataset: no records");
  const double fs = records.front().sample_rate_hz;
  for (const EcgRecord& r : records)
    if (r.sample_rate_hz != fs)
      throw std::invalid_argument("build_dataset: mixed sample rates ('" + r.record_id + "')");
  if (preprocess) spec.validate(fs);

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].record_id < records[b].record_id;
  });

  std::vector<std::vector<Pulse>> per_record(records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < order.size();) {
      try {
        per_record[i] = record_pulses(records[order[i]], preprocess, spec, window);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, records.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  PulseDataset ds;
  ds.window = window;
  ds.sample_rate_hz = fs;
  ds.provenance = preprocess ? Provenance::Preprocessed : Provenance::Raw;
  ds.pulse_length = window.length(fs);
  for (auto& group : per_record)
    for (Pulse& p : group) ds.pulses.push_back(std::move(p));
  return ds;
}

}  // namespace cao
