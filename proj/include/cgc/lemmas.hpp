#pragma once

// Standalone oracle battery for the quaternion/matrix identities and the
// scalar comparison lemmas used by the convergence proofs. Each entry
// integrates or samples independently of the closed forms it checks.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "cgc/analysis.hpp"
#include "cgc/so3.hpp"

namespace cgc {

struct LemmaResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // worst measured deviation / margin
  double tolerance = 0.0;
  std::string detail;
};

inline UnitQuaternion random_unit_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 c;
  do {
    c = Vec4{n(rng), n(rng), n(rng), n(rng)};
  } while (c.norm() < 1e-6);
  return UnitQuaternion::from_coeffs(c);
}

/// |‖R - I‖_F - 2 sqrt(2) |q.vec|| over random quaternions.
inline LemmaResult check_frobenius_identity(std::size_t n = 1000, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const UnitQuaternion q = random_unit_quaternion(rng);
    worst = std::max(worst, std::abs(frobenius_distance(to_rotation(q)) -
                                     2.0 * std::sqrt(2.0) * q.vec().norm()));
  }
  return {"frobenius_identity", worst < 1e-10, worst, 1e-10, std::to_string(n) + " samples"};
}

/// Same identity after conjugating R by an arbitrary rotation.
inline LemmaResult check_frobenius_conjugated(std::size_t n = 1000, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const UnitQuaternion q = random_unit_quaternion(rng);
    const Mat3 other = to_rotation(random_unit_quaternion(rng));
    const Mat3 r = other * to_rotation(q) * other.transpose();
    worst = std::max(worst, std::abs(frobenius_distance(r) - 2.0 * std::sqrt(2.0) * q.vec().norm()));
  }
  return {"frobenius_conjugated", worst < 1e-10, worst, 1e-10, std::to_string(n) + " samples"};
}

/// Closed form of x' = -sigma x sqrt(1 - x) against RK4 on [0, 10], plus the
/// loose envelope 4 c e^{-sigma t}.
inline std::vector<LemmaResult> check_lemma3(double h = 1e-3) {
  std::vector<LemmaResult> out;
  const std::size_t n = static_cast<std::size_t>(std::llround(10.0 / h));
  for (double x0 : {0.1, 0.5, 0.9}) {
    for (double sigma : {0.5, 1.0, 2.0}) {
      const auto xs = rk4_scalar(
          [sigma](double, double x) { return -sigma * x * std::sqrt(std::max(0.0, 1.0 - x)); }, x0,
          0.0, h, n);
      double dev = 0.0, envelope_ratio = 0.0;
      for (std::size_t i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) * h;
        dev = std::max(dev, std::abs(xs[i] - lemma3_closed_form(x0, sigma, t)));
        envelope_ratio = std::max(envelope_ratio, xs[i] / lemma3_loose_bound(x0, sigma, t));
      }
      char name[64];
      std::snprintf(name, sizeof name, "lemma3 x0=%g sigma=%g", x0, sigma);
      char detail[96];
      std::snprintf(detail, sizeof detail, "max_x_over_loose_bound=%.6g", envelope_ratio);
      out.push_back({name, dev < 1e-8 && envelope_ratio <= 1.0, dev, 1e-8, detail});
    }
  }
  return out;
}

/// v' = -lambda v + C e^{-p t} against its closed form, and
/// v' = (-lambda + C e^{-p t}) v against the tight overshoot envelope.
inline std::vector<LemmaResult> check_lemma5_6(double h = 1e-3) {
  std::vector<LemmaResult> out;
  const std::size_t n = static_cast<std::size_t>(std::llround(10.0 / h));
  const double v0 = 1.0;
  for (double lambda : {1.0, 2.0, 3.0}) {
    for (double p : {0.5, 1.0, 2.0}) {
      for (double c : {0.5, 2.0}) {
        char tag[64];
        std::snprintf(tag, sizeof tag, " lambda=%g p=%g C=%g", lambda, p, c);
        if (lambda != p) {
          const auto vs = rk4_scalar(
              [=](double t, double v) { return -lambda * v + c * std::exp(-p * t); }, v0, 0.0, h, n);
          double dev = 0.0;
          for (std::size_t i = 0; i <= n; ++i) {
            dev = std::max(dev, std::abs(vs[i] - lemma6_solution(v0, lambda, c, p, static_cast<double>(i) * h)));
          }
          out.push_back({std::string("lemma6_solution") + tag, dev < 1e-8, dev, 1e-8, ""});
        }
        const auto env = overshoot_bound(v0, lambda, c, p);
        const auto ws = rk4_scalar(
            [=](double t, double v) { return (-lambda + c * std::exp(-p * t)) * v; }, v0, 0.0, h, n);
        double excess = -1.0, loose_gap = -1.0;
        for (std::size_t i = 0; i <= n; ++i) {
          const double t = static_cast<double>(i) * h;
          excess = std::max(excess, ws[i] - env.tight(t));
          loose_gap = std::max(loose_gap, env.tight(t) - env.loose(t));
        }
        char detail[96];
        std::snprintf(detail, sizeof detail, "overshoot=%.6g tight_minus_loose_max=%.3g",
                      env.overshoot(), loose_gap);
        out.push_back({std::string("overshoot_envelope") + tag, excess <= 1e-9 && loose_gap <= 0.0,
                       excess, 1e-9, detail});
      }
    }
  }
  return out;
}

/// Tail decay rate of the forced solution equals min(lambda, p).
inline std::vector<LemmaResult> check_lemma6_rate(double horizon = 10.0, double h = 1e-3) {
  std::vector<LemmaResult> out;
  const std::size_t n = static_cast<std::size_t>(std::llround(horizon / h));
  for (auto [lambda, p] : {std::pair{2.0, 1.0}, std::pair{1.0, 2.0}}) {
    std::vector<double> t(n + 1), v(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      t[i] = static_cast<double>(i) * h;
      v[i] = lemma6_solution(1.0, lambda, 1.0, p, t[i]);
    }
    const DecayFit fit = fit_exponential(t, v);
    const double expected = std::min(lambda, p);
    const double rel = std::abs(fit.rate - expected) / expected;
    char name[64];
    std::snprintf(name, sizeof name, "lemma6_rate lambda=%g p=%g", lambda, p);
    char detail[64];
    std::snprintf(detail, sizeof detail, "fitted_rate=%.6g expected=%g", fit.rate, expected);
    out.push_back({name, rel <= 0.02, rel, 0.02, detail});
  }
  return out;
}

inline std::vector<LemmaResult> run_lemma_battery() {
  std::vector<LemmaResult> all;
  all.push_back(check_frobenius_identity());
  all.push_back(check_frobenius_conjugated());
  for (auto&& group : {check_lemma3(), check_lemma5_6(), check_lemma6_rate()}) {
    all.insert(all.end(), group.begin(), group.end());
  }
  return all;
}

}  // namespace cgc
