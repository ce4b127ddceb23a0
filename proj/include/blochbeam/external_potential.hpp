#pragma once

#include <cmath>
#include <string>

#include "blochbeam/common.hpp"

namespace blochbeam {

// Smooth macroscopic potential with three closed-form derivatives.
class ExternalPotential {
 public:
  enum class Form { Zero, Harmonic, GaussianWell, Cosine };

  static ExternalPotential zero() { return ExternalPotential(Form::Zero, 0, 0, 0); }

  // 0.5 * omega^2 * x^2
  static ExternalPotential harmonic(double omega) {
    if (!(omega >= 0.0)) throw ConfigError("harmonic potential: omega must be >= 0");
    return ExternalPotential(Form::Harmonic, omega, 0, 0);
  }

  // -depth * exp(-(x - center)^2 / (2 width^2))
  static ExternalPotential gaussian_well(double depth, double width, double center) {
    if (!(width > 0.0)) throw ConfigError("gaussian well: width must be > 0");
    return ExternalPotential(Form::GaussianWell, depth, width, center);
  }

  // amplitude * cos(wavenumber * x)
  static ExternalPotential cosine(double amplitude, double wavenumber) {
    return ExternalPotential(Form::Cosine, amplitude, wavenumber, 0);
  }

  double value(double x) const {
    switch (form_) {
      case Form::Zero: return 0.0;
      case Form::Harmonic: return 0.5 * a_ * a_ * x * x;
      case Form::GaussianWell: return -a_ * bump(x);
      case Form::Cosine: return a_ * std::cos(b_ * x);
    }
    return 0.0;
  }

  double d1(double x) const {
    switch (form_) {
      case Form::Zero: return 0.0;
      case Form::Harmonic: return a_ * a_ * x;
      case Form::GaussianWell: return -a_ * bump(x) * up(x);
      case Form::Cosine: return -a_ * b_ * std::sin(b_ * x);
    }
    return 0.0;
  }

  double d2(double x) const {
    switch (form_) {
      case Form::Zero: return 0.0;
      case Form::Harmonic: return a_ * a_;
      case Form::GaussianWell: {
        double u1 = up(x);
        return -a_ * bump(x) * (u1 * u1 - 1.0 / (b_ * b_));
      }
      case Form::Cosine: return -a_ * b_ * b_ * std::cos(b_ * x);
    }
    return 0.0;
  }

  double d3(double x) const {
    switch (form_) {
      case Form::Zero: return 0.0;
      case Form::Harmonic: return 0.0;
      case Form::GaussianWell: {
        double u1 = up(x);
        return -a_ * bump(x) * (u1 * u1 * u1 - 3.0 * u1 / (b_ * b_));
      }
      case Form::Cosine: return a_ * b_ * b_ * b_ * std::sin(b_ * x);
    }
    return 0.0;
  }

  Form form() const { return form_; }

 private:
  ExternalPotential(Form f, double a, double b, double c) : form_(f), a_(a), b_(b), c_(c) {}

  double bump(double x) const {
    double s = (x - c_) / b_;
    return std::exp(-0.5 * s * s);
  }
  // derivative of the gaussian exponent: d/dx [-(x-c)^2/(2w^2)]
  double up(double x) const { return -(x - c_) / (b_ * b_); }

  Form form_;
  double a_, b_, c_;
};

}  // namespace blochbeam
