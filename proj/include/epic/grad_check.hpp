// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "epic/autodiff.hpp"

namespace epic {

/// Why a coordinate missed the tolerance, found by re-probing it.
enum class FailureCause {
  /// Passes at h/10 or h/100: the probe interval straddles a kink (ReLU) or
  /// the step is otherwise too coarse.
  StepLimited,
  /// |analytic - numeric| is within the rounding noise of the central
  /// difference, so no f64 probe at this step can resolve it.
  RoundoffLimited,
  Unexplained,
};

inline const char* cause_name(FailureCause c) {
  switch (c) {
    case FailureCause::StepLimited: return "step-limited";
    case FailureCause::RoundoffLimited: return "roundoff-limited";
    case FailureCause::Unexplained: return "unexplained";
  }
  return "?";
}

struct GradFailure {
  std::string leaf;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  FailureCause cause = FailureCause::Unexplained;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t coordinates = 0;
  std::string worst_leaf;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Every coordinate above tol, with its diagnosed cause.
  std::vector<GradFailure> failures;
  /// Estimated absolute rounding noise of a central difference at step h.
  double noise_floor = 0.0;

  [[nodiscard]] std::size_t count(FailureCause c) const {
    return static_cast<std::size_t>(
        std::count_if(failures.begin(), failures.end(), [c](const GradFailure& f) { return f.cause == c; }));
  }
};

/// Scalar objective built on the supplied tape. On a non-recording tape the
/// leaves come back as constants, which is how the finite-difference probes
/// evaluate it.
using TapeObjective = std::function<Var(Tape&)>;

/// Compares analytic gradients against central differences
/// (f(x+h) - f(x-h)) / 2h for every coordinate of every leaf. The relative
/// error of a coordinate is |a - n| / max(|a|, |n|, floor). Coordinates
/// above tol are re-probed to diagnose the miss; the verdict ignores that.
inline GradCheckReport grad_check(const TapeObjective& f, const std::vector<Parameter*>& leaves,
                                  double h, double tol, double floor = 1e-8) {
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("grad_check: step must lie in (0, 1e-3]");
  for (Parameter* p : leaves) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  GradCheckReport report;
  struct Miss {
    Parameter* p;
    std::size_t i;
    double analytic, numeric, rel;
  };
  std::vector<Miss> failures;
  for (Parameter* p : leaves) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + h;
      double up;
      {
        Tape probe(false);
        up = f(probe).value().item();
      }
      p->value[i] = original - h;
      double down;
      {
        Tape probe(false);
        down = f(probe).value().item();
      }
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->has_grad() ? p->grad[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.coordinates;
      if (rel > tol) failures.push_back({p, i, analytic, numeric, rel});
      if (report.worst_leaf.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_leaf = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error <= tol;

  auto eval = [&] {
    Tape probe(false);
    return f(probe).value().item();
  };
  const double f0 = eval();
  // A few dozen ulps of |f| per evaluation, divided by 2h.
  report.noise_floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(f0), 1.0) / h;
  for (const Miss& m : failures) {
    GradFailure gf{m.p->name, m.i, m.analytic, m.numeric, m.rel, FailureCause::Unexplained};
    const double original = m.p->value[m.i];
    for (double step : {h / 10.0, h / 100.0}) {
      m.p->value[m.i] = original + step;
      const double up = eval();
      m.p->value[m.i] = original - step;
      const double down = eval();
      m.p->value[m.i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(m.analytic), std::abs(numeric), floor});
      if (std::abs(m.analytic - numeric) / denom <= tol) {
        gf.cause = FailureCause::StepLimited;
        break;
      }
    }
    if (gf.cause == FailureCause::Unexplained && std::abs(m.analytic - m.numeric) <= report.noise_floor)
      gf.cause = FailureCause::RoundoffLimited;
    report.failures.push_back(std::move(gf));
  }
  return report;
}

}  // namespace epic
