#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cao {

/// Occlusion site. There is no "normal" class: every input is assumed CAO-positive.
enum class CaoClass : std::uint8_t { LAD = 0, LCX = 1, RCA = 2 };

inline constexpr std::array<CaoClass, 3> kAllClasses{CaoClass::LAD, CaoClass::LCX, CaoClass::RCA};

std::string_view to_string(CaoClass c);
CaoClass class_from_string(std::string_view name);
CaoClass class_from_code(std::uint8_t code);

inline constexpr std::size_t kLeadCount = 12;
inline constexpr std::array<std::string_view, kLeadCount> kLeadNames{
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

namespace lead {
inline constexpr int I = 0, II = 1, III = 2, aVR = 3, aVL = 4, aVF = 5;
inline constexpr int V1 = 6, V2 = 7, V3 = 8, V4 = 9, V5 = 10, V6 = 11;
}  // namespace lead

/// Leads x samples, each lead row contiguous.
using LeadMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ClassCounts {
  std::size_t lad = 0;
  std::size_t lcx = 0;
  std::size_t rca = 0;

  std::size_t& operator[](CaoClass c);
  std::size_t operator[](CaoClass c) const;
  std::size_t total() const { return lad + lcx + rca; }
  bool operator==(const ClassCounts&) const = default;
};

struct EcgRecord {
  std::string record_id;
  LeadMatrix samples;  // 12 x N, millivolts
  double sample_rate_hz = 500.0;
  CaoClass label = CaoClass::LAD;
  bool denoised = false;

  Eigen::Index length() const { return samples.cols(); }
  /// Throws std::invalid_argument when the record breaks its shape/finiteness contract.
  void validate() const;
};

struct FilterSpec {
  double notch_freq_hz = 60.0;
  double notch_q = 30.0;
  double highpass_cutoff_hz = 0.5;
  int highpass_order = 2;
  bool zero_phase = true;

  void validate(double sample_rate_hz) const;
};

/// Normalized second-order section (a0 == 1), direct form II transposed:
///   y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

/// Series of sections. `order` is the order of the realized transfer function
/// (a first-order section stored as a biquad with b2 == a2 == 0 counts once).
struct BiquadCascade {
  std::vector<Biquad> sections;
  int order = 0;

  BiquadCascade() = default;
  BiquadCascade(std::vector<Biquad> s, int ord) : sections(std::move(s)), order(ord) {}
  BiquadCascade(const Biquad& single) : sections{single}, order(2) {}  // NOLINT(implicit)

  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
  double magnitude(double freq_hz, double sample_rate_hz) const {
    return std::abs(response(freq_hz, sample_rate_hz));
  }
};

/// Unit-DC-gain notch at f0 with bandwidth f0/q.
Biquad design_notch(double f0_hz, double q, double sample_rate_hz);

/// Butterworth high-pass by bilinear transform with pre-warped cutoff.
BiquadCascade design_highpass_butterworth(double cutoff_hz, int order, double sample_rate_hz);
BiquadCascade design_lowpass_butterworth(double cutoff_hz, int order, double sample_rate_hz);

/// Runs the cascade over `signal`.
///
/// Single pass starts from rest. Zero-phase mode pads both ends by odd
/// reflection (3 x filter order samples, clipped to length - 1), starts each
/// section in the steady state of its first input sample, filters forward,
/// then filters the reversed result, so the net phase is zero and the
/// magnitude response is squared.
Eigen::VectorXd apply_filter(const Eigen::Ref<const Eigen::VectorXd>& signal,
                             const BiquadCascade& filter, bool zero_phase);

/// Notch then high-pass on every lead. Refuses records already denoised.
EcgRecord denoise_record(const EcgRecord& record, const FilterSpec& spec);

}  // namespace cao
