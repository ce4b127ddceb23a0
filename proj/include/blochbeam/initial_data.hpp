#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "blochbeam/common.hpp"

namespace blochbeam {

// Macroscopic phase of the two-scale initial data, with two closed-form
// derivatives.
class PhaseS0 {
 public:
  enum class Form { Linear, Quadratic, GaussianPhase };

  // c * x
  static PhaseS0 linear(double c) { return PhaseS0(Form::Linear, c, 0); }

  // alpha * x^2
  static PhaseS0 quadratic(double alpha) { return PhaseS0(Form::Quadratic, alpha, 0); }

  // beta * exp(-x^2 / (2 sigma^2)); genuinely non-quadratic phase
  static PhaseS0 gaussian_phase(double beta, double sigma) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian phase: sigma must be > 0");
    return PhaseS0(Form::GaussianPhase, beta, sigma);
  }

  double value(double x) const {
    switch (form_) {
      case Form::Linear: return a_ * x;
      case Form::Quadratic: return a_ * x * x;
      case Form::GaussianPhase: return a_ * g(x);
    }
    return 0.0;
  }

  double d1(double x) const {
    switch (form_) {
      case Form::Linear: return a_;
      case Form::Quadratic: return 2.0 * a_ * x;
      case Form::GaussianPhase: return -a_ * x / (b_ * b_) * g(x);
    }
    return 0.0;
  }

  double d2(double x) const {
    switch (form_) {
      case Form::Linear: return 0.0;
      case Form::Quadratic: return 2.0 * a_;
      case Form::GaussianPhase: {
        double s2 = b_ * b_;
        return a_ * (x * x / s2 - 1.0) / s2 * g(x);
      }
    }
    return 0.0;
  }

 private:
  PhaseS0(Form f, double a, double b) : form_(f), a_(a), b_(b) {}
  double g(double x) const { return std::exp(-0.5 * x * x / (b_ * b_)); }
  Form form_;
  double a_, b_;
};

// Band amplitude envelope.
class Envelope {
 public:
  enum class Form { Gaussian, CosineBump };

  // A * exp(-(x - xc)^2 / (2 sigma^2))
  static Envelope gaussian(double A, double sigma, double xc) {
    if (!(sigma > 0.0)) throw ConfigError("gaussian envelope: sigma must be > 0");
    return Envelope(Form::Gaussian, A, sigma, xc);
  }

  // A * cos(pi (x - xc) / w) on |x - xc| < w/2, zero outside; compact support
  static Envelope cosine_bump(double A, double w, double xc) {
    if (!(w > 0.0)) throw ConfigError("cosine bump envelope: width must be > 0");
    return Envelope(Form::CosineBump, A, w, xc);
  }

  double operator()(double x) const {
    double t = x - xc_;
    switch (form_) {
      case Form::Gaussian: return A_ * std::exp(-0.5 * t * t / (w_ * w_));
      case Form::CosineBump:
        return std::abs(t) < 0.5 * w_ ? A_ * std::cos(kPi * t / w_) : 0.0;
    }
    return 0.0;
  }

  double peak() const { return std::abs(A_); }
  double center() const { return xc_; }

  // Radius beyond which |envelope| <= tol * |A| (exact for the bump).
  double support_radius(double tol) const {
    switch (form_) {
      case Form::Gaussian: return w_ * std::sqrt(std::max(0.0, -2.0 * std::log(tol)));
      case Form::CosineBump: return 0.5 * w_;
    }
    return 0.0;
  }

 private:
  Envelope(Form f, double A, double w, double xc) : form_(f), A_(A), w_(w), xc_(xc) {}
  Form form_;
  double A_, w_, xc_;
};

// Two-scale WKB initial data: bands, envelopes, phase, and the compact
// interval that carries all beam launch points.
struct InitialData {
  std::vector<int> bands;       // 1-based, strictly ascending
  std::vector<Envelope> envelopes;  // one per band
  PhaseS0 S0;
  double support_lo;
  double support_hi;

  void validate() const {
    if (bands.empty()) throw ConfigError("initial data: at least one band required");
    for (size_t i = 0; i < bands.size(); ++i) {
      if (bands[i] < 1)
        throw ConfigError("initial data: band indices are 1-based, got " +
                          std::to_string(bands[i]));
      if (i > 0 && bands[i] <= bands[i - 1])
        throw ConfigError("initial data: bands must be strictly ascending");
    }
    if (envelopes.size() != bands.size())
      throw ConfigError("initial data: need one envelope per band (" +
                        std::to_string(bands.size()) + " bands, " +
                        std::to_string(envelopes.size()) + " envelopes)");
    if (!(support_lo < support_hi) || !std::isfinite(support_lo) || !std::isfinite(support_hi))
      throw ConfigError("initial data: support interval must be finite with lo < hi");
    // Envelopes must have decayed to numerical zero at the support edges,
    // otherwise the seeding interval truncates the data.
    for (size_t i = 0; i < envelopes.size(); ++i) {
      const Envelope& e = envelopes[i];
      if (!(e.center() > support_lo && e.center() < support_hi))
        throw ConfigError("initial data: envelope " + std::to_string(i + 1) +
                          " is centered outside the support interval");
      double edge = std::max(std::abs(e(support_lo)), std::abs(e(support_hi)));
      if (edge > 1e-12 * e.peak())
        throw ConfigError("initial data: envelope " + std::to_string(i + 1) +
                          " has magnitude " + std::to_string(edge) +
                          " at the support edge; widen the support interval");
    }
  }
};

}  // namespace blochbeam
