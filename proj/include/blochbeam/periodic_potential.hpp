#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "blochbeam/common.hpp"

namespace blochbeam {

// 2*pi-periodic potential given by a finite Fourier series
//   V(y) = sum_{|m| <= M_V} v_m e^{i m y},   v_{-m} = conj(v_m),
// so V is real-valued by construction. Stored as v_0..v_{M_V}; negative
// modes are derived.
class PeriodicPotential {
 public:
  // coeffs[m] = v_m for m = 0..M_V. v_0 must be real.
  explicit PeriodicPotential(std::vector<Complex> coeffs) : v_(std::move(coeffs)) {
    if (v_.empty()) v_.push_back(0.0);
    if (std::abs(v_[0].imag()) > 1e-14 * (1.0 + std::abs(v_[0].real())))
      throw ConfigError("periodic potential: v_0 must be real, got imag " +
                        std::to_string(v_[0].imag()));
    // trim trailing zeros so max_mode() reflects actual content
    while (v_.size() > 1 && v_.back() == Complex(0.0)) v_.pop_back();
  }

  static PeriodicPotential free_space() { return PeriodicPotential({Complex(0.0)}); }

  // V(y) = cos y
  static PeriodicPotential cosine() {
    return PeriodicPotential({Complex(0.0), Complex(0.5)});
  }

  int max_mode() const { return static_cast<int>(v_.size()) - 1; }

  Complex coeff(int m) const {
    int am = m < 0 ? -m : m;
    if (am > max_mode()) return Complex(0.0);
    return m < 0 ? std::conj(v_[am]) : v_[am];
  }

  double value(double y) const {
    Complex s = v_[0];
    for (int m = 1; m <= max_mode(); ++m)
      s += v_[m] * std::exp(kI * (m * y)) + std::conj(v_[m]) * std::exp(-kI * (m * y));
    return s.real();
  }

 private:
  std::vector<Complex> v_;
};

}  // namespace blochbeam
