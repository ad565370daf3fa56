#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qlink/polarization.hpp"

using namespace qlink;
using namespace qlink::pol;

namespace {

constexpr double pi = std::numbers::pi;

std::array<double, 3> rodrigues(const std::array<double, 3>& v, const std::array<double, 3>& th) {
  const double a = std::sqrt(th[0] * th[0] + th[1] * th[1] + th[2] * th[2]);
  if (a == 0.0) return v;
  const std::array<double, 3> k{th[0] / a, th[1] / a, th[2] / a};
  const std::array<double, 3> kxv{k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2],
                                  k[0] * v[1] - k[1] * v[0]};
  const double kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i)
    out[i] = v[i] * std::cos(a) + kxv[i] * std::sin(a) + k[i] * kv * (1 - std::cos(a));
  return out;
}

Matrix2c random_unitary(Rng& rng) {
  return rotation({rng.normal() * 3, rng.normal() * 3, rng.normal() * 3});
}

}  // namespace

TEST_CASE("Stokes vectors of the basis states") {
  auto close = [](std::array<double, 3> a, std::array<double, 3> b) {
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]));
  };
  close(StokesState::horizontal().stokes(), {1, 0, 0});
  close(StokesState::diagonal().stokes(), {0, 1, 0});
  close(StokesState::right_circular().stokes(), {0, 0, 1});
  close(StokesState::from_stokes(0, 0, -2).stokes(), {0, 0, -1});
  CHECK(StokesState::horizontal().angle_to(StokesState::from_stokes(-1, 0, 0)) == doctest::Approx(pi));
  CHECK_THROWS_AS(StokesState::from_jones(Jones(0.0, 0.0)), PolarizationError);
}

TEST_CASE("SU(2) rotation acts as the sphere rotation of its vector") {
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const std::array<double, 3> th{rng.normal(), rng.normal(), rng.normal()};
    const auto s = StokesState::from_stokes(rng.normal(), rng.normal(), rng.normal());
    const auto got = StokesState::from_jones(rotation(th) * s.jones()).stokes();
    const auto want = rodrigues(s.stokes(), th);
    for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("paddle set: unitary, -I at zero, every target reachable") {
  CHECK((paddle_transform({}) + Matrix2c::Identity()).norm() < 1e-15);
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    const PaddleSettings p{{rng.uniform(0, 2 * pi), rng.uniform(0, 2 * pi), rng.uniform(0, 2 * pi)}};
    const auto U = paddle_transform(p);
    CHECK((U.adjoint() * U - Matrix2c::Identity()).norm() < 1e-13);
  }
  // Coarse grid search: any SOP can be mapped onto H.
  for (int k = 0; k < 10; ++k) {
    const auto s = StokesState::from_stokes(rng.normal(), rng.normal(), rng.normal());
    double best = 0.0;
    const int n = 24;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c) {
          const PaddleSettings p{{pi * a / n, pi * b / n, pi * c / n}};
          best = std::max(best, compensation_score(StokesState::from_jones(paddle_transform(p) * s.jones()),
                                                   StokesState::horizontal()));
        }
    CHECK(best > 0.98);
  }
}

TEST_CASE("drift is isotropic diffusion with D = rate^2 / 4") {
  // <cos angle> = exp(-2 D t) on the unit sphere.
  const DriftProcess d{1.0};
  Rng rng(17);
  const double t = 0.5, dt = 0.005;
  double c = 0.0;
  const int trials = 4000;
  for (int k = 0; k < trials; ++k) {
    auto s = StokesState::horizontal();
    for (double u = 0.0; u < t - 1e-12; u += dt) s = drift_step(s, dt, d, rng);
    c += s.stokes()[0];
  }
  CHECK(c / trials == doctest::Approx(std::exp(-0.5 * t)).epsilon(0.02));
}

TEST_CASE("Monte Carlo crossing-time fit agrees with the first-passage formula") {
  Rng rng(3);
  const double rate = fit_drift_rate(0.7744, 180.0, 600, 2.5e-4, rng);
  const double want = std::sqrt(-4.0 * std::log(0.7744) / 180.0);
  CHECK(rate == doctest::Approx(want).epsilon(0.05));
  CHECK(mean_crossing_time(want, 0.7744) == doctest::Approx(180.0));
  CHECK(mean_crossing_time(2 * want, 0.7744) == doctest::Approx(45.0));
}

TEST_CASE("compensation converges from random fiber states") {
  ControllerConfig cfg;
  cfg.freeze_drift = true;
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    PolarizationChannel ch;
    ch.input = StokesState::horizontal();
    ch.fiber = random_unitary(rng);
    const auto rep = run_compensation_cycle(ch, StokesState::horizontal(), cfg, rng);
    CHECK(rep.iterations <= cfg.max_evaluations);
    CHECK(rep.events.size() == 3);
    CHECK(rep.final_score == doctest::Approx(compensation_score(ch.output(), StokesState::horizontal())));
    if (rep.final_score >= cfg.target_score) ++ok;
  }
  CHECK(ok >= 38);
}

TEST_CASE("a cycle that starts on target ends at once") {
  ControllerConfig cfg;
  Rng rng(1);
  PolarizationChannel ch;
  const auto rep = run_compensation_cycle(ch, StokesState::horizontal(), cfg, rng, 10.0);
  CHECK(rep.success);
  CHECK(rep.iterations == 0);
  CHECK(rep.events.front().time_s == 10.0);
  // Only the initial read and the handshake.
  CHECK(rep.downtime_s == doctest::Approx(cfg.evaluation_time_s + cfg.handshake_s));
}

TEST_CASE("scheduler keeps the operating score at or above threshold") {
  ControllerConfig cfg;
  PolarizationChannel ch;
  ch.drift.rate = 0.1;
  Rng rng(4);
  const auto rep = schedule_recalibration(ch, StokesState::horizontal(), cfg, 300.0, 1800.0, 0.5, rng);
  CHECK(!rep.cycles.empty());
  CHECK(rep.min_operating_score >= cfg.threshold);
  CHECK(rep.uptime_fraction > 0.8);
  CHECK(rep.uptime_fraction < 1.0);
  for (const auto& w : rep.drift_windows_s) CHECK(w <= 300.0 + 1e-9);
}
