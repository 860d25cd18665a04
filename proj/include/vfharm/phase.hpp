#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "vfharm/error.hpp"

namespace vfharm {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Instantaneous frequency ω(t) together with an exact antiderivative.
class FrequencyProfile {
 public:
  enum class Kind { constant, ramp, blowup, sampled, composite };

  static FrequencyProfile constant(double omega0) {
    FrequencyProfile p;
    p.kind_ = Kind::constant;
    p.w0_ = omega0;
    return p;
  }

  static FrequencyProfile ramp(double omega0, double a) {
    FrequencyProfile p;
    p.kind_ = Kind::ramp;
    p.w0_ = omega0;
    p.c_ = a;
    return p;
  }

  // ω(t) = (1/ω0 − K t)^{-1}
  static FrequencyProfile blowup(double omega0, double K) {
    FrequencyProfile p;
    p.kind_ = Kind::blowup;
    p.w0_ = omega0;
    p.c_ = K;
    return p;
  }

  // Piecewise-linear interpolation of (t, ω) samples.
  static FrequencyProfile sampled(std::vector<double> t, std::vector<double> omega) {
    if (t.size() != omega.size() || t.size() < 2)
      raise(ErrorKind::DimensionMismatch, "sampled profile needs at least two (t, omega) pairs of equal length");
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1])) raise(ErrorKind::DomainExceeded, "sampled profile grid must be strictly increasing");
    auto d = std::make_shared<Sampled>();
    d->t = std::move(t);
    d->w = std::move(omega);
    d->cum.assign(d->t.size(), 0.0);
    for (std::size_t i = 1; i < d->t.size(); ++i)
      d->cum[i] = d->cum[i - 1] + 0.5 * (d->w[i] + d->w[i - 1]) * (d->t[i] - d->t[i - 1]);
    FrequencyProfile p;
    p.kind_ = Kind::sampled;
    p.sampled_ = std::move(d);
    return p;
  }

  // Piece i is active from starts[i] on and is evaluated in local time t − starts[i].
  static FrequencyProfile composite(std::vector<double> starts, std::vector<FrequencyProfile> pieces) {
    if (starts.size() != pieces.size() || pieces.empty())
      raise(ErrorKind::DimensionMismatch, "composite profile needs one start time per piece");
    for (std::size_t i = 1; i < starts.size(); ++i)
      if (!(starts[i] > starts[i - 1])) raise(ErrorKind::DomainExceeded, "composite start times must increase");
    auto d = std::make_shared<Composite>();
    d->starts = std::move(starts);
    d->pieces = std::move(pieces);
    d->cum.assign(d->pieces.size(), 0.0);
    for (std::size_t i = 0; i + 1 < d->pieces.size(); ++i) {
      const auto& pc = d->pieces[i];
      d->cum[i + 1] = d->cum[i] + pc.primitive(d->starts[i + 1] - d->starts[i]) - pc.primitive(0.0);
    }
    FrequencyProfile p;
    p.kind_ = Kind::composite;
    p.composite_ = std::move(d);
    return p;
  }

  Kind kind() const { return kind_; }
  double omega0() const { return w0_; }
  double rate() const { return c_; }  // ramp slope or blow-up constant K
  double blowup_time() const {
    return (kind_ == Kind::blowup && c_ > 0.0) ? 1.0 / (c_ * w0_) : std::numeric_limits<double>::infinity();
  }
  const std::vector<double>& sample_times() const { return sampled_->t; }
  const std::vector<double>& sample_values() const { return sampled_->w; }
  const std::vector<double>& piece_starts() const { return composite_->starts; }
  const std::vector<FrequencyProfile>& pieces() const { return composite_->pieces; }

  bool defined_at(double t) const {
    switch (kind_) {
      case Kind::constant:
      case Kind::ramp: return std::isfinite(t);
      case Kind::blowup: return 1.0 / w0_ - c_ * t > 0.0;
      case Kind::sampled: {
        const double slack = 1e-12 * (1.0 + std::abs(t));
        return t >= sampled_->t.front() - slack && t <= sampled_->t.back() + slack;
      }
      case Kind::composite: {
        auto [i, tl] = locate(t);
        return composite_->pieces[i].defined_at(tl);
      }
    }
    return false;
  }

  double omega(double t) const {
    switch (kind_) {
      case Kind::constant: return w0_;
      case Kind::ramp: return w0_ + c_ * t;
      case Kind::blowup: return 1.0 / (1.0 / w0_ - c_ * t);
      case Kind::sampled: {
        auto [i, s] = segment(t);
        return sampled_->w[i] + s * (t - sampled_->t[i]);
      }
      case Kind::composite: {
        auto [i, tl] = locate(t);
        return composite_->pieces[i].omega(tl);
      }
    }
    return 0.0;
  }

  double omega_dot(double t) const {
    switch (kind_) {
      case Kind::constant: return 0.0;
      case Kind::ramp: return c_;
      case Kind::blowup: {
        const double w = omega(t);
        return c_ * w * w;
      }
      case Kind::sampled: return segment(t).second;
      case Kind::composite: {
        auto [i, tl] = locate(t);
        return composite_->pieces[i].omega_dot(tl);
      }
    }
    return 0.0;
  }

  // Antiderivative of ω with an unspecified constant.
  double primitive(double t) const {
    switch (kind_) {
      case Kind::constant: return w0_ * t;
      case Kind::ramp: return w0_ * t + 0.5 * c_ * t * t;
      case Kind::blowup:
        if (c_ == 0.0) return w0_ * t;
        return -std::log1p(-c_ * w0_ * t) / c_;
      case Kind::sampled: {
        auto [i, s] = segment(t);
        const double dt = t - sampled_->t[i];
        return sampled_->cum[i] + sampled_->w[i] * dt + 0.5 * s * dt * dt;
      }
      case Kind::composite: {
        auto [i, tl] = locate(t);
        const auto& pc = composite_->pieces[i];
        return composite_->cum[i] + pc.primitive(tl) - pc.primitive(0.0);
      }
    }
    return 0.0;
  }

  // Minimum and maximum of ω over [t0, t1].
  std::pair<double, double> range(double t0, double t1) const {
    switch (kind_) {
      case Kind::constant: return {w0_, w0_};
      case Kind::ramp:
      case Kind::blowup: {
        const double a = omega(t0), b = omega(t1);
        return {std::min(a, b), std::max(a, b)};
      }
      case Kind::sampled: {
        double lo = std::min(omega(t0), omega(t1)), hi = std::max(omega(t0), omega(t1));
        const auto& ts = sampled_->t;
        auto first = std::upper_bound(ts.begin(), ts.end(), t0);
        for (auto it = first; it != ts.end() && *it < t1; ++it) {
          const double w = sampled_->w[static_cast<std::size_t>(it - ts.begin())];
          lo = std::min(lo, w);
          hi = std::max(hi, w);
        }
        return {lo, hi};
      }
      case Kind::composite: {
        const auto& st = composite_->starts;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        auto i0 = locate(t0).first, i1 = locate(t1).first;
        for (std::size_t i = i0; i <= i1; ++i) {
          const double a = (i == i0) ? t0 : st[i];
          const double b = (i == i1) ? t1 : st[i + 1];
          auto [l, h] = composite_->pieces[i].range(a - st[i], b - st[i]);
          lo = std::min(lo, l);
          hi = std::max(hi, h);
        }
        return {lo, hi};
      }
    }
    return {0.0, 0.0};
  }

 private:
  struct Sampled {
    std::vector<double> t, w, cum;
  };
  struct Composite {
    std::vector<double> starts;
    std::vector<FrequencyProfile> pieces;
    std::vector<double> cum;
  };

  // Segment index and slope for the sampled kind; clamps to the end segments.
  std::pair<std::size_t, double> segment(double t) const {
    const auto& ts = sampled_->t;
    auto it = std::upper_bound(ts.begin(), ts.end(), t);
    std::size_t i = (it == ts.begin()) ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
    i = std::min(i, ts.size() - 2);
    const double s = (sampled_->w[i + 1] - sampled_->w[i]) / (ts[i + 1] - ts[i]);
    return {i, s};
  }

  std::pair<std::size_t, double> locate(double t) const {
    const auto& st = composite_->starts;
    auto it = std::upper_bound(st.begin(), st.end(), t);
    std::size_t i = (it == st.begin()) ? 0 : static_cast<std::size_t>(it - st.begin()) - 1;
    return {i, t - st[i]};
  }

  Kind kind_ = Kind::constant;
  double w0_ = 1.0;
  double c_ = 0.0;
  std::shared_ptr<const Sampled> sampled_;
  std::shared_ptr<const Composite> composite_;
};

struct TimeDomain {
  double t_min = 0.0;
  double t_max = 0.0;
};

// θ(t) = θ0 + ∫_origin^t ω, with origin = 0 when 0 lies in the domain, t_min otherwise.
class PhaseFunction {
 public:
  PhaseFunction(FrequencyProfile profile, double theta0, TimeDomain domain)
      : profile_(std::move(profile)), theta0_(theta0), dom_(domain) {
    if (!(dom_.t_max > dom_.t_min)) raise(ErrorKind::DomainExceeded, "empty time domain");
    if (!profile_.defined_at(dom_.t_min) || !profile_.defined_at(dom_.t_max))
      raise(ErrorKind::DomainExceeded, "profile undefined on part of the domain");
    auto [lo, hi] = profile_.range(dom_.t_min, dom_.t_max);
    if (!(lo > 0.0)) raise(ErrorKind::NonPositiveFrequency, "min omega over domain is " + std::to_string(lo));
    w_min_ = lo;
    w_max_ = hi;
    origin_ = (dom_.t_min <= 0.0 && 0.0 <= dom_.t_max) ? 0.0 : dom_.t_min;
    prim_origin_ = profile_.primitive(origin_);
  }

  const FrequencyProfile& profile() const { return profile_; }
  double theta0() const { return theta0_; }
  TimeDomain domain() const { return dom_; }
  double t_min() const { return dom_.t_min; }
  double t_max() const { return dom_.t_max; }
  double origin() const { return origin_; }
  double omega_min() const { return w_min_; }
  double omega_max() const { return w_max_; }

  bool contains(double t) const {
    const double slack = 1e-12 * (1.0 + std::abs(t));
    return t >= dom_.t_min - slack && t <= dom_.t_max + slack;
  }

  double theta(double t) const {
    check(t);
    return theta0_ + profile_.primitive(t) - prim_origin_;
  }
  double omega(double t) const {
    check(t);
    return profile_.omega(t);
  }
  double omega_dot(double t) const {
    check(t);
    return profile_.omega_dot(t);
  }

  // p(φ): safeguarded Newton with bisection fallback on the whole domain.
  double time_of(double phi, double phase_tol = 1e-10, double time_rtol = 1e-12) const {
    double lo = dom_.t_min, hi = dom_.t_max;
    const double f_lo = theta(lo) - phi, f_hi = theta(hi) - phi;
    const double ftol = phase_tol * (1.0 + std::abs(phi));
    if (f_lo > ftol || f_hi < -ftol) raise(ErrorKind::DomainExceeded, "phase outside theta(domain)");
    if (std::abs(f_lo) <= ftol) return lo;
    if (std::abs(f_hi) <= ftol) return hi;
    double t = std::clamp(origin_ + (phi - theta0_) / profile_.omega(origin_), lo, hi);
    for (int it = 0; it < 200; ++it) {
      const double f = theta(t) - phi;
      if (std::abs(f) <= ftol * 1e-2) return t;
      if (f < 0.0) lo = t; else hi = t;
      double next = t - f / profile_.omega(t);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - t) <= time_rtol * (1.0 + std::abs(t))) return next;
      if (hi - lo <= time_rtol * (1.0 + std::abs(t))) return 0.5 * (lo + hi);
      t = next;
    }
    return t;
  }

 private:
  void check(double t) const {
    if (!contains(t)) raise(ErrorKind::DomainExceeded, "t=" + std::to_string(t) + " outside phase domain");
  }

  FrequencyProfile profile_;
  double theta0_;
  TimeDomain dom_;
  double origin_ = 0.0;
  double prim_origin_ = 0.0;
  double w_min_ = 0.0, w_max_ = 0.0;
};

inline PhaseFunction build_phase_function(const FrequencyProfile& profile, double theta0, TimeDomain domain) {
  return PhaseFunction(profile, theta0, domain);
}

inline double phase_to_time(const PhaseFunction& phase, double phi) { return phase.time_of(phi); }

struct PseudoPeriodEvaluator {
  PhaseFunction phase;
  double rel_tol = 1e-12;
};

struct PseudoPeriod {
  double T;
  double T_dot;  // 1 − ω(t)/ω(t−T)
};

// Solves θ(t) − θ(t−T) = 2π for T > 0.
inline PseudoPeriod pseudo_period(const PseudoPeriodEvaluator& ev, double t) {
  const auto& ph = ev.phase;
  const double th = ph.theta(t);
  const double span = t - ph.t_min();
  if (span <= 0.0 || th - ph.theta(ph.t_min()) < two_pi * (1.0 - 1e-14))
    raise(ErrorKind::InsufficientHistory, "no full pseudo-period before t=" + std::to_string(t));
  auto [wlo, whi] = ph.profile().range(ph.t_min(), t);
  double lo = std::min(two_pi / whi, span), hi = std::min(two_pi / wlo, span);
  auto g = [&](double T) { return th - ph.theta(t - T) - two_pi; };
  const double gtol = ev.rel_tol * (two_pi + std::abs(th));
  double T = std::clamp(two_pi / ph.omega(t), lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double gv = g(T);
    if (std::abs(gv) <= gtol) break;
    if (gv < 0.0) lo = T; else hi = T;
    double next = T - gv / ph.omega(t - T);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo <= ev.rel_tol * T) {
      T = next;
      break;
    }
    T = next;
  }
  return {T, 1.0 - ph.omega(t) / ph.omega(t - T)};
}

// sup over τ ∈ [t−T, t] of |ω(t) − ω(τ)| / ω(τ): dense scan, then Brent refinement around the best point.
inline double epsilon_criterion(const PseudoPeriodEvaluator& ev, double t, int samples = 256) {
  samples = std::max(samples, 64);
  const auto& ph = ev.phase;
  const double T = pseudo_period(ev, t).T;
  const double wt = ph.omega(t);
  auto delta = [&](double tau) {
    const double w = ph.omega(tau);
    return std::abs(wt - w) / w;
  };
  const double a = t - T;
  const double h = T / (samples - 1);
  int best = 0;
  double best_v = -1.0;
  for (int i = 0; i < samples; ++i) {
    const double v = delta(a + h * i);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  const double l = a + h * std::max(best - 1, 0), r = a + h * std::min(best + 1, samples - 1);
  if (r > l) {
    auto res = boost::math::tools::brent_find_minima([&](double tau) { return -delta(tau); }, l, r, 50);
    best_v = std::max(best_v, -res.second);
  }
  return best_v;
}

// (1 − 4πa/ω(t)²)^{-1/2} − 1, taken in absolute value so decreasing ramps are covered too.
inline double closed_form_ramp_epsilon(double omega0, double a, double t) {
  const double w = omega0 + a * t;
  const double x = 4.0 * std::numbers::pi * a / (w * w);
  if (!(w > 0.0) || x >= 1.0) raise(ErrorKind::InvalidRegime, "ramp window not admissible (omega^2 <= 4 pi a)");
  return std::abs(1.0 / std::sqrt(1.0 - x) - 1.0);
}

inline double max_frequency_rate(double omega, double eps_bar) {
  if (!(eps_bar > 0.0)) raise(ErrorKind::InvalidRegime, "eps_bar must be positive");
  return omega * omega / (4.0 * std::numbers::pi) * (1.0 - 1.0 / ((1.0 + eps_bar) * (1.0 + eps_bar)));
}

inline double blowup_constant(double eps_bar) {
  return (1.0 - 1.0 / ((1.0 + eps_bar) * (1.0 + eps_bar))) / (4.0 * std::numbers::pi);
}

// Frequency that saturates the ramp bound at every instant: ω̇ = Kω².
inline FrequencyProfile blowup_profile(double omega0, double eps_bar) {
  if (!(eps_bar > 0.0)) raise(ErrorKind::InvalidRegime, "eps_bar must be positive");
  return FrequencyProfile::blowup(omega0, blowup_constant(eps_bar));
}

// Exact ε(t) along the blow-up profile; constant in t.
inline double blowup_exact_epsilon(double K) { return std::expm1(two_pi * K); }

}  // namespace vfharm
