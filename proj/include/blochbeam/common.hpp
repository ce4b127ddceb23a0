#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace blochbeam {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Mat = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

// Configuration problems: bad input files, inconsistent parameters,
// violated preconditions that the caller could have checked.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runtime breakdowns of the numerical scheme itself: band gap collapse,
// loss of Gaussian decay, gauge discontinuities, non-finite state.
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace blochbeam
