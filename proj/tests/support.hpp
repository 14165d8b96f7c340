#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace cao::testing {

/// Direct DFT coefficient X[k] = sum_n x[n] e^{-2 pi i k n / N}.
inline std::complex<double> dft_bin(const Eigen::Ref<const Eigen::VectorXd>& x, double k) {
  std::complex<double> acc = 0.0;
  const double n_total = static_cast<double>(x.size());
  for (Eigen::Index n = 0; n < x.size(); ++n)
    acc += x(n) * std::polar(1.0, -2.0 * std::numbers::pi * k * static_cast<double>(n) / n_total);
  return acc;
}

inline double rms(const Eigen::Ref<const Eigen::VectorXd>& x) { return std::sqrt(x.squaredNorm() / x.size()); }

inline Eigen::VectorXd tone(double freq_hz, double amplitude, double fs, Eigen::Index n, double phase = 0.0) {
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x(i) = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / fs + phase);
  return x;
}

/// H(e^{jw}) of one normalized biquad, written out independently of the library.
inline std::complex<double> biquad_h(double b0, double b1, double b2, double a1, double a2, double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  return (b0 + b1 * z1 + b2 * z1 * z1) / (1.0 + a1 * z1 + a2 * z1 * z1);
}

/// Largest per-entry relative error between `analytic` and central differences
/// of `loss` in each entry of `x` (perturbed in place and restored). Entries
/// whose magnitude is below `floor` are compared on an absolute scale of `floor`.
template <typename Loss>
double max_fd_error(Loss&& loss, double* x, const double* analytic, Eigen::Index n, double h = 1e-5,
                    double floor = 1e-4) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / scale);
  }
  return worst;
}

struct FdResult {
  double worst = 0.0;
  std::size_t kinks = 0;  // entries where the central difference was off by > 1e-6 and a one-sided one fit better
};

/// As max_fd_error, for losses built from ReLU and max. Where the central
/// difference is off by more than 1e-6 and the two one-sided slopes disagree by
/// more than `jump` (relative), the stencil may straddle a non-differentiable
/// point; such an entry also accepts a second-order one-sided difference.
template <typename Loss>
FdResult fd_check_piecewise(Loss&& loss, double* x, const double* analytic, Eigen::Index n, double h = 1e-5,
                            double floor = 1e-4, double jump = 1e-4) {
  FdResult out;
  const double base = loss();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    x[i] = keep - h;
    const double down = loss();
    x[i] = keep;
    const double fwd = (up - base) / h, bwd = (base - down) / h, central = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(central), std::abs(analytic[i]), floor});
    const auto err = [&](double numeric) { return std::abs(numeric - analytic[i]) / scale; };
    double e = err(central);
    if (e > 1e-6 && std::abs(fwd - bwd) > jump * scale) {
      // Second-order one-sided stencils, each clear of a kink on the other side.
      x[i] = keep + 2.0 * h;
      const double up2 = loss();
      x[i] = keep - 2.0 * h;
      const double down2 = loss();
      x[i] = keep;
      const double one_sided = std::min(err((4.0 * up - 3.0 * base - up2) / (2.0 * h)),
                                        err((3.0 * base - 4.0 * down + down2) / (2.0 * h)));
      if (one_sided < e) ++out.kinks;
      e = std::min(e, one_sided);
    }
    out.worst = std::max(out.worst, e);
  }
  return out;
}

}  // namespace cao::testing
