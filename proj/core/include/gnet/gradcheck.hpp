// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gnet/tensor.hpp"

namespace gnet {

// One scalar input of a loss closure together with the analytic derivative
// claimed for it.
struct GradProbe {
  double* value = nullptr;
  double analytic = 0.0;
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

// Central differences (f(x+eps) - f(x-eps)) / 2eps at every probe, compared
// against the analytic value. Each probed input is restored before
// returning. Returns the worst relative error.
double finite_diff_check(const std::function<double()>& loss, std::span<const GradProbe> probes, double eps = 1e-5);

// Probes every entry of `input` against the matching entry of `analytic`.
double finite_diff_check(const std::function<double()>& loss, TensorD& input, const TensorD& analytic,
                         double eps = 1e-5);

struct ProbeOutcome {
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;
  double step = 0.0;  // the step that produced `numeric`
};

// Per-probe central differences over a ladder of step sizes, tried in
// order. A probe stops at the first step whose relative error is below
// `good_enough`; otherwise it keeps the best step seen. Large steps lose to
// curvature and kinks, small ones to rounding, so no single step suits every
// entry of a deep network.
std::vector<ProbeOutcome> finite_diff_ladder(const std::function<double()>& loss, std::span<const GradProbe> probes,
                                             std::span<const double> steps, double good_enough);

}  // namespace gnet
