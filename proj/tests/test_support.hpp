#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "vfharm/phase.hpp"

namespace test_support {

// ω(t) = ω0(1 + α cos θ(t)), sampled from the exact solution of θ̇ = ω0(1 + α cos θ), θ(0) = 0.
inline vfharm::FrequencyProfile phase_periodic_profile(double w0, double alpha, double t_end, double dt = 1e-4) {
  const double beta = std::sqrt(1.0 - alpha * alpha);
  const double c = std::sqrt((1.0 + alpha) / (1.0 - alpha));
  std::vector<double> ts, ws;
  const int n = static_cast<int>(std::ceil(t_end / dt));
  for (int i = 0; i <= n; ++i) {
    const double t = t_end * i / n;
    const double u = 0.5 * beta * w0 * t;
    const double th = 2.0 * (std::atan(c * std::tan(u)) + std::numbers::pi * std::floor(u / std::numbers::pi + 0.5));
    ts.push_back(t);
    ws.push_back(w0 * (1.0 + alpha * std::cos(th)));
  }
  return vfharm::FrequencyProfile::sampled(ts, ws);
}

inline vfharm::FrequencyProfile wavy_sampled_profile() {
  std::vector<double> ts, ws;
  for (int i = 0; i <= 400; ++i) {
    const double t = 0.01 * i;
    ts.push_back(t);
    ws.push_back(20.0 + 5.0 * std::sin(1.3 * t) + 2.0 * t);
  }
  return vfharm::FrequencyProfile::sampled(ts, ws);
}

}  // namespace test_support
