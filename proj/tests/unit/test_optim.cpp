// SPDX-FileCopyrightText: © 2026 The GraftedNet Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <array>
#include <stdexcept>

#include "gnet/optim.hpp"

using namespace gnet;

namespace {

Parameter<double> scalar_param(double w, LrGroup group = LrGroup::Fresh, bool decay = true) {
  Parameter<double> p("p", {1}, group, decay);
  p.value[0] = w;
  return p;
}

void step(Parameter<double>& p, double lr, const SgdConfig& cfg) {
  std::array<Parameter<double>*, 1> ps{&p};
  sgd_step<double>(ps, LearningRates{lr, lr}, cfg);
}

}  // namespace

TEST_CASE("weight decay alone shrinks by (1 - lr·wd)") {
  SgdConfig cfg;
  auto p = scalar_param(2.0);
  step(p, 0.1, cfg);
  CHECK(p.value[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.0005)));
}

TEST_CASE("one step from a zero buffer") {
  SgdConfig cfg;
  auto p = scalar_param(1.5);
  p.grad[0] = 0.4;
  step(p, 0.01, cfg);
  CHECK(p.value[0] == doctest::Approx(1.5 - 0.01 * (0.4 + 0.0005 * 1.5)));
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("two steps with a constant gradient follow the momentum recurrence") {
  SgdConfig cfg;
  const double lr = 0.05, g = 0.3, m = cfg.momentum, wd = cfg.weight_decay;
  auto p = scalar_param(1.0);
  double w = 1.0, v = 0.0;
  for (int i = 0; i < 2; ++i) {
    v = m * v + (g + wd * w);
    w -= lr * v;
    p.grad[0] = g;
    step(p, lr, cfg);
  }
  CHECK(p.value[0] == doctest::Approx(w).epsilon(1e-14));
  CHECK(p.momentum[0] == doctest::Approx(v).epsilon(1e-14));
}

TEST_CASE("zero learning rate leaves weights unchanged") {
  SgdConfig cfg;
  auto p = scalar_param(-0.7);
  p.grad[0] = 12.0;
  step(p, 0.0, cfg);
  CHECK(p.value[0] == -0.7);
}

TEST_CASE("without decay and momentum sgd is gradient descent") {
  SgdConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  auto p = scalar_param(3.0);
  for (int i = 0; i < 3; ++i) {
    p.grad[0] = 2.0;
    step(p, 0.25, cfg);
  }
  CHECK(p.value[0] == doctest::Approx(3.0 - 3 * 0.5));
}

TEST_CASE("batch-norm affine parameters are exempt from weight decay") {
  SgdConfig cfg;
  auto p = scalar_param(2.0, LrGroup::Fresh, false);
  step(p, 0.1, cfg);
  CHECK(p.value[0] == 2.0);
}

TEST_CASE("learning-rate groups pick their own rate") {
  SgdConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  auto a = scalar_param(1.0, LrGroup::Pretrained);
  auto b = scalar_param(1.0, LrGroup::Fresh);
  a.grad[0] = b.grad[0] = 1.0;
  std::array<Parameter<double>*, 2> ps{&a, &b};
  sgd_step<double>(ps, LearningRates{0.01, 0.1}, cfg);
  CHECK(a.value[0] == doctest::Approx(0.99));
  CHECK(b.value[0] == doctest::Approx(0.9));
}

TEST_CASE("step schedule") {
  const SgdConfig cfg;
  auto r = lr_at_epoch(0, cfg);
  CHECK(r.pretrained == doctest::Approx(0.01));
  CHECK(r.fresh == doctest::Approx(0.1));
  r = lr_at_epoch(39, cfg);
  CHECK(r.fresh == doctest::Approx(0.1));
  r = lr_at_epoch(40, cfg);
  CHECK(r.pretrained == doctest::Approx(0.001));
  CHECK(r.fresh == doctest::Approx(0.01));
  r = lr_at_epoch(79, cfg);
  CHECK(r.pretrained == doctest::Approx(0.0001));
  CHECK(r.fresh == doctest::Approx(0.001));
  CHECK_THROWS_AS(lr_at_epoch(80, cfg), std::out_of_range);
  CHECK_THROWS_AS(lr_at_epoch(-1, cfg), std::out_of_range);
}

TEST_CASE("config validation") {
  SgdConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.decay_epochs = {60, 40};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.decay_epochs = {40, 80};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.base_lr_fresh = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
