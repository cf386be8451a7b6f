#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "protoicl/errors.hpp"
#include "protoicl/gradcheck.hpp"
#include "protoicl/importance.hpp"

using namespace protoicl;
using protoicl::testing::random_batch;

namespace {

ParamVector scalar(double v) { return ParamVector::Constant(1, v); }

}  // namespace

TEST_CASE("si_accumulate_step") {
  SIState s(scalar(0.0));
  si_accumulate_step(s, scalar(0.0), scalar(-0.5));
  CHECK(s.omega_accum[0] == 0.0);
  si_accumulate_step(s, scalar(2.0), scalar(-0.1));
  CHECK(s.omega_accum[0] == doctest::Approx(0.2));
  CHECK(s.steps_since_consolidation == 2);
  CHECK_THROWS_AS(si_accumulate_step(s, ParamVector::Zero(2), scalar(0.0)), InputError);
}

TEST_CASE("si path integral equals the loss decrease on a quadratic") {
  // L = 0.5 theta^2, plain gradient descent from theta = 2
  ParamVector theta = scalar(2.0);
  SIState s(theta);
  const double lr = 1e-3;
  for (int step = 0; step < 10000; ++step) {
    const ParamVector grad = theta;
    const ParamVector delta = -lr * grad;
    theta += delta;
    si_accumulate_step(s, grad, delta);
  }
  const double decrease = 0.5 * 4.0 - 0.5 * theta[0] * theta[0];
  CHECK(std::abs(s.omega_accum[0] - decrease) / decrease < 1e-3);
  CHECK(std::abs(s.omega_accum[0] - 2.0) / 2.0 < 1e-3);
}

TEST_CASE("si_consolidate") {
  SUBCASE("hand example") {
    SIState s(scalar(0.0), 1e-3);
    s.omega_accum[0] = 2.0;
    s.steps_since_consolidation = 1;
    CHECK(si_consolidate(s, scalar(2.0)));
    CHECK(s.omega[0] == doctest::Approx(2.0 / 4.001).epsilon(1e-14));
    CHECK(s.omega[0] == doctest::Approx(0.49988).epsilon(1e-5));
    CHECK(s.omega_accum[0] == 0.0);
    CHECK(s.theta_ref[0] == 2.0);
    CHECK(s.theta_task_start[0] == 2.0);
  }
  SUBCASE("zero and negative path integrals add nothing") {
    SIState s(ParamVector::Zero(2));
    s.omega_accum << 0.0, -3.0;
    s.steps_since_consolidation = 5;
    si_consolidate(s, ParamVector::Ones(2));
    CHECK(s.omega.isZero());
  }
  SUBCASE("second consolidation without steps is a no-op") {
    SIState s(scalar(0.0));
    s.omega_accum[0] = 1.0;
    s.steps_since_consolidation = 1;
    CHECK(si_consolidate(s, scalar(1.0)));
    const double omega = s.omega[0];
    s.omega_accum[0] = 5.0;  // would change omega if it were applied
    CHECK_FALSE(si_consolidate(s, scalar(3.0)));
    CHECK(s.omega[0] == omega);
    CHECK(s.theta_ref[0] == 1.0);
  }
  SUBCASE("omega is nonnegative and non-decreasing across tasks") {
    auto rng = make_rng(1, RngStream::Check);
    std::normal_distribution<double> g(0.0, 1.0);
    ParamVector theta = random_batch(2, 1, 20).transpose();
    SIState s(theta);
    ParamVector previous = s.omega;
    for (int task = 0; task < 5; ++task) {
      for (int step = 0; step < 30; ++step) {
        ParamVector grad(20), delta(20);
        for (Eigen::Index k = 0; k < 20; ++k) {
          grad[k] = g(rng);
          delta[k] = 0.01 * g(rng);
        }
        theta += delta;
        si_accumulate_step(s, grad, delta);
      }
      si_consolidate(s, theta);
      CHECK((s.omega.array() >= 0.0).all());
      CHECK((s.omega.array() >= previous.array()).all());
      previous = s.omega;
    }
  }
}

TEST_CASE("mas accumulation and consolidation") {
  SUBCASE("F = theta * x over inputs {1, -2, 3}") {
    MASState s(scalar(0.5));
    Matrix grads(3, 1);
    grads << 1.0, -2.0, 3.0;  // dF/dtheta = x
    mas_accumulate_batch(s, grads);
    mas_consolidate(s, scalar(0.5));
    CHECK(s.omega[0] == 2.0);
  }
  SUBCASE("zero gradients change nothing, identical batches double the sum") {
    MASState s(ParamVector::Zero(3));
    mas_accumulate_batch(s, Matrix::Zero(4, 3));
    CHECK(s.grad_norm_sum.isZero());
    const Matrix g = random_batch(3, 5, 3);
    MASState once(ParamVector::Zero(3));
    mas_accumulate_batch(once, g);
    MASState twice(ParamVector::Zero(3));
    mas_accumulate_batch(twice, g);
    mas_accumulate_batch(twice, g);
    CHECK(twice.grad_norm_sum == 2.0 * once.grad_norm_sum);
    CHECK(twice.sample_count == 10);
  }
  SUBCASE("empty task is an error; sums reset after consolidation") {
    MASState s(scalar(0.0));
    CHECK_THROWS_AS(mas_consolidate(s, scalar(0.0)), UsageError);
    Matrix g(1, 1);
    g << 4.0;
    mas_accumulate_batch(s, g);
    mas_consolidate(s, scalar(1.0));
    CHECK(s.omega[0] == 4.0);
    CHECK(s.sample_count == 0);
    CHECK(s.grad_norm_sum[0] == 0.0);
    CHECK_THROWS_AS(mas_consolidate(s, scalar(1.0)), UsageError);
    mas_accumulate_batch(s, g);
    mas_consolidate(s, scalar(2.0));
    CHECK(s.omega[0] == 8.0);  // cumulative over tasks
    CHECK(s.theta_ref[0] == 2.0);
  }
  SUBCASE("importance does not depend on sample order") {
    const Matrix g = random_batch(4, 30, 6);
    Matrix reversed = g.colwise().reverse();
    MASState a(ParamVector::Zero(6));
    MASState b(ParamVector::Zero(6));
    mas_accumulate_batch(a, g);
    mas_accumulate_batch(b, reversed);
    mas_consolidate(a, ParamVector::Zero(6));
    mas_consolidate(b, ParamVector::Zero(6));
    CHECK((a.omega - b.omega).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.omega.array() >= 0.0).all());
  }
}

TEST_CASE("reg_penalty") {
  SUBCASE("zero at the reference") {
    const ParamVector theta = random_batch(5, 1, 7).transpose();
    const auto p = reg_penalty(ParamVector::Ones(7), theta, theta);
    CHECK(p.value == 0.0);
    CHECK(p.grad.isZero());
  }
  SUBCASE("hand example") {
    const auto p = reg_penalty(scalar(1.0), scalar(0.0), scalar(2.0));
    CHECK(p.value == 4.0);
    CHECK(p.grad[0] == 4.0);
  }
  SUBCASE("zero iff no drift where omega > 0") {
    ParamVector omega(3);
    omega << 0.0, 1.0, 2.0;
    ParamVector ref = ParamVector::Zero(3);
    ParamVector theta(3);
    theta << 5.0, 0.0, 0.0;
    CHECK(reg_penalty(omega, ref, theta).value == 0.0);
    theta[2] = 1e-3;
    CHECK(reg_penalty(omega, ref, theta).value > 0.0);
  }
  SUBCASE("gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Network net = protoicl::testing::random_net(seed);
      const ParamVector omega = random_batch(seed + 10, 1, net.param_count()).transpose().cwiseAbs();
      const ParamVector ref = random_batch(seed + 20, 1, net.param_count()).transpose();
      auto value = [&](const Network& n) { return reg_penalty(omega, ref, n.params()).value; };
      const auto p = reg_penalty(omega, ref, net.params());
      auto rng = make_rng(seed, RngStream::Check);
      // central differences are exact on a quadratic, so a wide step only trims roundoff
      GradCheckOptions opts;
      opts.step = 1e-2;
      const auto report = finite_diff_check(net, value, p.grad, rng, opts);
      CHECK(report.max_relative_error < 1e-8);
    }
  }
  SUBCASE("state dispatch") {
    const ParamVector theta = scalar(1.0);
    CHECK(reg_penalty(ImportanceState{}, theta).value == 0.0);
    SIState si(scalar(0.0));
    si.omega[0] = 3.0;
    CHECK(reg_penalty(ImportanceState{si}, theta).value == 3.0);
    CHECK(importance_omega(ImportanceState{}) == nullptr);
  }
}

TEST_CASE("regularizer names") {
  CHECK(parse_regularizer("si") == RegularizerKind::SI);
  CHECK(parse_regularizer("MAS") == RegularizerKind::MAS);
  CHECK(parse_regularizer("none") == RegularizerKind::None);
  CHECK_THROWS_AS((void)parse_regularizer("ewc"), ConfigError);
  CHECK(to_string(RegularizerKind::MAS) == "mas");
  CHECK_THROWS_AS(SIState(scalar(0.0), 0.0), ConfigError);
}
