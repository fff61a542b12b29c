// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "gnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gnet {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

double finite_diff_check(const std::function<double()>& loss, std::span<const GradProbe> probes, double eps) {
  double worst = 0.0;
  for (const GradProbe& probe : probes) {
    const double saved = *probe.value;
    *probe.value = saved + eps;
    const double plus = loss();
    *probe.value = saved - eps;
    const double minus = loss();
    *probe.value = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    worst = std::max(worst, relative_error(numeric, probe.analytic));
  }
  return worst;
}

double finite_diff_check(const std::function<double()>& loss, TensorD& input, const TensorD& analytic, double eps) {
  input.require_same_shape(analytic, "finite_diff_check");
  std::vector<GradProbe> probes(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) probes[i] = {input.data() + i, analytic[i]};
  return finite_diff_check(loss, probes, eps);
}

std::vector<ProbeOutcome> finite_diff_ladder(const std::function<double()>& loss, std::span<const GradProbe> probes,
                                             std::span<const double> steps, double good_enough) {
  if (steps.empty()) throw std::invalid_argument("finite_diff_ladder needs at least one step");
  std::vector<ProbeOutcome> out;
  out.reserve(probes.size());
  for (const GradProbe& probe : probes) {
    ProbeOutcome best{probe.analytic, 0.0, std::numeric_limits<double>::infinity(), 0.0};
    const double saved = *probe.value;
    for (double eps : steps) {
      *probe.value = saved + eps;
      const double plus = loss();
      *probe.value = saved - eps;
      const double minus = loss();
      *probe.value = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = relative_error(numeric, probe.analytic);
      if (err < best.error) best = {probe.analytic, numeric, err, eps};
      if (err < good_enough) break;
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace gnet
