#include "cao/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cao {

std::string_view to_string(CaoClass c) {
  switch (c) {
    case CaoClass::LAD: return "LAD";
    case CaoClass::LCX: return "LCX";
    case CaoClass::RCA: return "RCA";
  }
  throw std::invalid_argument("invalid CaoClass value");
}

CaoClass class_from_string(std::string_view name) {
  for (CaoClass c : kAllClasses)
    if (to_string(c) == name) return c;
  throw std::invalid_argument("unknown class label '" + std::string(name) + "'");
}

CaoClass class_from_code(std::uint8_t code) {
  if (code > 2) throw std::invalid_argument("class code out of range: " + std::to_string(code));
  return static_cast<CaoClass>(code);
}

std::size_t& ClassCounts::operator[](CaoClass c) {
  switch (c) {
    case CaoClass::LAD: return lad;
    case CaoClass::LCX: return lcx;
    case CaoClass::RCA: return rca;
  }
  throw std::invalid_argument("invalid CaoClass value");
}

std::size_t ClassCounts::operator[](CaoClass c) const {
  return const_cast<ClassCounts&>(*this)[c];
}

void EcgRecord::validate() const {
  if (samples.rows() != static_cast<Eigen::Index>(kLeadCount))
    throw std::invalid_argument("record '" + record_id + "' has " + std::to_string(samples.rows()) +
                                " leads, expected 12");
  if (samples.cols() < 1) throw std::invalid_argument("record '" + record_id + "' is empty");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
    throw std::invalid_argument("record '" + record_id + "' has non-positive sample rate");
  if (!samples.allFinite())
    throw std::invalid_argument("record '" + record_id + "' contains non-finite samples");
}

void FilterSpec::validate(double fs) const {
  const double nyquist = fs / 2.0;
  if (!(notch_freq_hz > 0.0 && notch_freq_hz < nyquist))
    throw std::invalid_argument("notch frequency must lie in (0, fs/2)");
  if (!(highpass_cutoff_hz > 0.0 && highpass_cutoff_hz < nyquist))
    throw std::invalid_argument("high-pass cutoff must lie in (0, fs/2)");
  if (!(notch_q > 0.0)) throw std::invalid_argument("notch Q must be positive");
  if (highpass_order < 1) throw std::invalid_argument("high-pass order must be >= 1");
}

std::complex<double> Biquad::response(double freq_hz, double fs) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / fs;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

std::complex<double> BiquadCascade::response(double freq_hz, double fs) const {
  std::complex<double> h{1.0, 0.0};
  for (const Biquad& s : sections) h *= s.response(freq_hz, fs);
  return h;
}

namespace {

void check_band(double f, double fs, const char* what) {
  if (!(fs > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (!(f > 0.0 && f < fs / 2.0))
    throw std::invalid_argument(std::string(what) + " must lie in (0, fs/2)");
}

enum class Band { Low, High };

BiquadCascade design_butterworth(Band band, double cutoff, int order, double fs) {
  check_band(cutoff, fs, "cutoff");
  if (order < 1) throw std::invalid_argument("filter order must be >= 1");

  // Pre-warped normalized analog cutoff.
  const double k = std::tan(std::numbers::pi * cutoff / fs);
  const double k2 = k * k;
  std::vector<Biquad> sections;

  for (int i = 0; i < order / 2; ++i) {
    // Pole-pair angle from the negative real axis; odd orders add a real pole.
    const double theta = order % 2 == 0 ? std::numbers::pi * (2.0 * i + 1.0) / (2.0 * order)
                                        : std::numbers::pi * (i + 1.0) / order;
    const double q = 1.0 / (2.0 * std::cos(theta));
    const double norm = 1.0 / (1.0 + k / q + k2);
    Biquad s;
    if (band == Band::High) {
      s.b0 = norm;
      s.b1 = -2.0 * norm;
      s.b2 = norm;
    } else {
      s.b0 = k2 * norm;
      s.b1 = 2.0 * k2 * norm;
      s.b2 = k2 * norm;
    }
    s.a1 = 2.0 * (k2 - 1.0) * norm;
    s.a2 = (1.0 - k / q + k2) * norm;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    const double norm = 1.0 / (1.0 + k);
    Biquad s;
    if (band == Band::High) {
      s.b0 = norm;
      s.b1 = -norm;
    } else {
      s.b0 = k * norm;
      s.b1 = k * norm;
    }
    s.a1 = (k - 1.0) * norm;
    sections.push_back(s);
  }
  return {std::move(sections), order};
}

// Direct form II transposed over `x` in place. When `steady_start` is set the
// state is initialised as if x[0] had been applied forever.
void run_section(const Biquad& s, Eigen::Ref<Eigen::VectorXd> x, bool steady_start) {
  double z1 = 0.0, z2 = 0.0;
  if (steady_start && x.size() > 0) {
    const double u = x[0];
    const double y = s.dc_gain() * u;
    z2 = s.b2 * u - s.a2 * y;
    z1 = s.b1 * u - s.a1 * y + z2;
  }
  for (Eigen::Index n = 0; n < x.size(); ++n) {
    const double in = x[n];
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    x[n] = out;
  }
}

void run_cascade(const BiquadCascade& f, Eigen::Ref<Eigen::VectorXd> x, bool steady_start) {
  for (const Biquad& s : f.sections) run_section(s, x, steady_start);
}

}  // namespace

Biquad design_notch(double f0, double q, double fs) {
  check_band(f0, fs, "notch frequency");
  if (!(q > 0.0)) throw std::invalid_argument("notch Q must be positive");
  // Second-order notch whose digital -3 dB bandwidth is exactly f0/q.
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double beta = std::tan(0.5 * w0 / q);
  const double gain = 1.0 / (1.0 + beta);
  const double cw = std::cos(w0);
  Biquad s;
  s.b0 = gain;
  s.b1 = -2.0 * cw * gain;
  s.b2 = gain;
  s.a1 = -2.0 * cw * gain;
  s.a2 = 2.0 * gain - 1.0;
  return s;
}

BiquadCascade design_highpass_butterworth(double cutoff, int order, double fs) {
  return design_butterworth(Band::High, cutoff, order, fs);
}

BiquadCascade design_lowpass_butterworth(double cutoff, int order, double fs) {
  return design_butterworth(Band::Low, cutoff, order, fs);
}

Eigen::VectorXd apply_filter(const Eigen::Ref<const Eigen::VectorXd>& signal,
                             const BiquadCascade& filter, bool zero_phase) {
  const Eigen::Index n = signal.size();
  if (n < 1) throw std::invalid_argument("apply_filter: empty signal");
  if (!signal.allFinite()) throw std::invalid_argument("apply_filter: non-finite sample");

  if (!zero_phase) {
    Eigen::VectorXd y = signal;
    run_cascade(filter, y, false);
    return y;
  }

  const Eigen::Index pad = std::min<Eigen::Index>(3 * filter.order, n - 1);
  Eigen::VectorXd ext(n + 2 * pad);
  ext.segment(pad, n) = signal;
  const double first = signal[0];
  const double last = signal[n - 1];
  for (Eigen::Index k = 1; k <= pad; ++k) {
    ext[pad - k] = 2.0 * first - signal[k];
    ext[pad + n - 1 + k] = 2.0 * last - signal[n - 1 - k];
  }

  run_cascade(filter, ext, true);
  ext.reverseInPlace();
  run_cascade(filter, ext, true);
  ext.reverseInPlace();
  return ext.segment(pad, n);
}

EcgRecord denoise_record(const EcgRecord& record, const FilterSpec& spec) {
  if (record.denoised)
    throw std::invalid_argument("record '" + record.record_id + "' is already denoised");
  record.validate();
  spec.validate(record.sample_rate_hz);

  const BiquadCascade notch = design_notch(spec.notch_freq_hz, spec.notch_q, record.sample_rate_hz);
  const BiquadCascade highpass = design_highpass_butterworth(
      spec.highpass_cutoff_hz, spec.highpass_order, record.sample_rate_hz);

  EcgRecord out = record;
  for (Eigen::Index l = 0; l < out.samples.rows(); ++l) {
    const Eigen::VectorXd lead = record.samples.row(l).transpose();
    out.samples.row(l) =
        apply_filter(apply_filter(lead, notch, spec.zero_phase), highpass, spec.zero_phase)
            .transpose();
  }
  out.denoised = true;
  return out;
}

}  // namespace cao
