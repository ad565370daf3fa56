#include "qlink/polarization.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qlink::pol {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGolden = 0.6180339887498949;  // (sqrt(5) - 1) / 2

double wrap_angle(double a) {
  double w = std::fmod(a, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  if (w >= 2.0 * kPi) w = 0.0;
  return w;
}

}  // namespace

StokesState::StokesState() : jones_(1.0, 0.0) {}

StokesState StokesState::from_jones(const Jones& j) {
  const double n = j.norm();
  if (!std::isfinite(n) || n == 0.0)
    throw PolarizationError("StokesState: Jones vector must be finite and nonzero");
  return StokesState(j / n);
}

StokesState StokesState::from_stokes(double s1, double s2, double s3) {
  const double n = std::sqrt(s1 * s1 + s2 * s2 + s3 * s3);
  if (!std::isfinite(n) || n == 0.0) throw PolarizationError("StokesState: zero Stokes vector");
  s1 /= n;
  s2 /= n;
  s3 /= n;
  // x = cos(a/2), y = sin(a/2) e^{i b} with cos a = S1, (S2, S3) = sin a (cos b, sin b).
  const double a = std::acos(std::clamp(s1, -1.0, 1.0));
  const double b = std::atan2(s3, s2);
  return StokesState(Jones(std::cos(0.5 * a), std::polar(std::sin(0.5 * a), b)));
}

StokesState StokesState::diagonal() { return from_jones(Jones(1.0, 1.0)); }
StokesState StokesState::right_circular() { return from_jones(Jones(1.0, Complex(0.0, 1.0))); }

std::array<double, 3> StokesState::stokes() const {
  const Complex x = jones_(0);
  const Complex y = jones_(1);
  const Complex c = std::conj(x) * y;
  return {std::norm(x) - std::norm(y), 2.0 * c.real(), 2.0 * c.imag()};
}

double StokesState::angle_to(const StokesState& other) const {
  const auto a = stokes();
  const auto b = other.stokes();
  const double d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::acos(std::clamp(d, -1.0, 1.0));
}

void DriftProcess::validate() const {
  if (!std::isfinite(rate) || rate < 0.0)
    throw PolarizationError("DriftProcess: rate must be finite and >= 0");
}

Matrix2c rotation(const std::array<double, 3>& theta) {
  const double angle = std::sqrt(theta[0] * theta[0] + theta[1] * theta[1] + theta[2] * theta[2]);
  if (angle == 0.0) return Matrix2c::Identity();
  const double nx = theta[0] / angle, ny = theta[1] / angle, nz = theta[2] / angle;
  // Generators for S1, S2, S3 are sigma_z, sigma_x, sigma_y in this convention.
  Matrix2c gen;
  gen << Complex(nx, 0.0), Complex(ny, -nz), Complex(ny, nz), Complex(-nx, 0.0);
  const Complex mi(0.0, -1.0);
  return std::cos(0.5 * angle) * Matrix2c::Identity() + mi * std::sin(0.5 * angle) * gen;
}

Matrix2c random_drift_rotation(double dt, const DriftProcess& process, Rng& rng) {
  if (process.rate == 0.0) return Matrix2c::Identity();
  const double sd = process.rate * std::sqrt(0.5 * dt);
  return rotation({sd * rng.normal(), sd * rng.normal(), sd * rng.normal()});
}

StokesState drift_step(const StokesState& state, double dt, const DriftProcess& process, Rng& rng) {
  process.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PolarizationError("drift_step: dt must be > 0");
  if (process.rate == 0.0) return state;
  return StokesState::from_jones(random_drift_rotation(dt, process, rng) * state.jones());
}

PaddleSettings PaddleSettings::wrapped() const {
  PaddleSettings p;
  for (int i = 0; i < 3; ++i) p.angles[i] = wrap_angle(angles[i]);
  return p;
}

Matrix2c waveplate(double retardance, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Matrix2c R;
  R << c, s, -s, c;
  Matrix2c D = Matrix2c::Zero();
  D(0, 0) = std::polar(1.0, -0.5 * retardance);
  D(1, 1) = std::polar(1.0, 0.5 * retardance);
  return R.transpose() * D * R;
}

Matrix2c paddle_transform(const PaddleSettings& settings) {
  const auto& a = settings.angles;
  return waveplate(0.5 * kPi, a[0]) * waveplate(kPi, a[1]) * waveplate(0.5 * kPi, a[2]);
}

double compensation_score(const StokesState& current, const StokesState& target) {
  return std::min(1.0, std::norm(target.jones().dot(current.jones())));
}

StokesState PolarizationChannel::output() const { return output_with(paddles); }

StokesState PolarizationChannel::output_with(const PaddleSettings& p) const {
  return StokesState::from_jones(paddle_transform(p) * fiber * input.jones());
}

void PolarizationChannel::advance(double dt, Rng& rng) {
  if (dt <= 0.0 || drift.rate == 0.0) return;
  fiber = random_drift_rotation(dt, drift, rng) * fiber;
}

void ControllerConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw PolarizationError("ControllerConfig: threshold must be in (0, 1)");
  if (!(target_score >= threshold && target_score <= 1.0))
    throw PolarizationError("ControllerConfig: target_score must be in [threshold, 1]");
  if (max_evaluations == 0) throw PolarizationError("ControllerConfig: max_evaluations must be > 0");
  if (!(evaluation_time_s >= 0.0) || !(handshake_s >= 0.0))
    throw PolarizationError("ControllerConfig: times must be >= 0");
  if (!(initial_bracket > 0.0)) throw PolarizationError("ControllerConfig: initial_bracket must be > 0");
  if (!(shrink > 0.0 && shrink < 1.0)) throw PolarizationError("ControllerConfig: shrink must be in (0, 1)");
  if (golden_steps < 2) throw PolarizationError("ControllerConfig: golden_steps must be >= 2");
}

const char* event_name(CalibrationEventKind k) {
  switch (k) {
    case CalibrationEventKind::start: return "calibration start";
    case CalibrationEventKind::termination: return "calibration termination";
    case CalibrationEventKind::stop: return "calibration stop";
  }
  return "?";
}

CalibrationReport run_compensation_cycle(PolarizationChannel& channel, const StokesState& target,
                                         const ControllerConfig& config, Rng& rng,
                                         double t_start) {
  config.validate();
  channel.drift.validate();
  CalibrationReport report;
  report.events.push_back({CalibrationEventKind::start, t_start});
  double t = t_start;

  // Each measurement costs evaluation_time_s, during which the fiber drifts.
  auto measure = [&](const PaddleSettings& p) {
    if (!config.freeze_drift) channel.advance(config.evaluation_time_s, rng);
    t += config.evaluation_time_s;
    return compensation_score(channel.output_with(p), target);
  };

  PaddleSettings best = channel.paddles;
  double best_score = measure(best);
  report.initial_score = best_score;
  std::size_t evals = 0;
  double width = config.initial_bracket;

  auto done = [&] { return best_score >= config.target_score || evals >= config.max_evaluations; };

  while (!done()) {
    const double sweep_start = best_score;
    const PaddleSettings sweep_origin = best;
    for (int k = 0; k < 3 && !done(); ++k) {
      // Golden section on paddle k over [x - width, x + width].
      const double x0 = best.angles[k];
      double a = x0 - width, b = x0 + width;
      PaddleSettings trial = best;
      auto f = [&](double x) {
        trial.angles[k] = x;
        ++evals;
        const double s = measure(trial);
        if (s > best_score) {
          best_score = s;
          best = trial;
        }
        return s;
      };
      double c = b - kGolden * (b - a), d = a + kGolden * (b - a);
      double fc = f(c);
      if (done()) break;
      double fd = f(d);
      for (std::size_t step = 2; step < config.golden_steps && !done(); ++step) {
        if (fc > fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - kGolden * (b - a);
          fc = f(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + kGolden * (b - a);
          fd = f(d);
        }
      }
    }
    if (!done() && best_score > sweep_start) {
      // Pattern move along the net displacement of the sweep.
      PaddleSettings jump = best;
      for (int k = 0; k < 3; ++k) jump.angles[k] += best.angles[k] - sweep_origin.angles[k];
      ++evals;
      const double s = measure(jump);
      if (s > best_score) {
        best_score = s;
        best = jump;
      }
    }
    width *= config.shrink;
  }

  channel.paddles = best.wrapped();
  report.iterations = evals;
  report.final_score = best_score;
  report.success = best_score >= config.threshold;
  report.events.push_back({CalibrationEventKind::termination, t});
  const double t_stop = t + config.handshake_s;
  if (!config.freeze_drift) channel.advance(config.handshake_s, rng);
  report.events.push_back({CalibrationEventKind::stop, t_stop});
  report.downtime_s = t_stop - t_start;
  return report;
}

ScheduleReport schedule_recalibration(PolarizationChannel channel, const StokesState& target,
                                      const ControllerConfig& config, double cadence_s,
                                      double duration_s, double sample_dt_s, Rng& rng) {
  config.validate();
  if (!(cadence_s > 0.0)) throw PolarizationError("schedule_recalibration: cadence must be > 0");
  if (!(duration_s > 0.0) || !(sample_dt_s > 0.0))
    throw PolarizationError("schedule_recalibration: duration and sample step must be > 0");

  ScheduleReport out;
  double t = 0.0;
  double uptime = 0.0;
  auto sample = [&](TracePhase phase) {
    const StokesState s = channel.output();
    out.trace.push_back({t, s.stokes(), compensation_score(s, target), phase});
  };

  while (t < duration_s) {
    sample(TracePhase::calibrating);
    const double cycle_start = t;
    CalibrationReport rep = run_compensation_cycle(channel, target, config, rng, t);
    if (!rep.success) ++out.failed_cycles;
    t = rep.events.back().time_s;
    out.cycles.push_back(std::move(rep));
    sample(TracePhase::calibrating);

    const double drift_start = t;
    bool triggered = false;
    while (t < duration_s) {
      channel.advance(sample_dt_s, rng);
      t += sample_dt_s;
      sample(TracePhase::drift);
      const double score = out.trace.back().score;
      if (score < config.threshold) {
        triggered = true;
        break;
      }
      out.min_operating_score = std::min(out.min_operating_score, score);
      if (t - cycle_start >= cadence_s) {
        triggered = true;
        break;
      }
    }
    uptime += std::min(t, duration_s) - drift_start;
    if (triggered) out.drift_windows_s.push_back(t - drift_start);
  }
  out.uptime_fraction = uptime / duration_s;
  if (!out.drift_windows_s.empty()) {
    double s = 0.0;
    for (double w : out.drift_windows_s) s += w;
    out.mean_drift_window_s = s / static_cast<double>(out.drift_windows_s.size());
  }
  return out;
}

double mean_crossing_time(double rate, double threshold) {
  if (!(rate > 0.0)) throw PolarizationError("mean_crossing_time: rate must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw PolarizationError("mean_crossing_time: threshold must be in (0, 1)");
  // Diffusion constant on the unit sphere is rate^2 / 4; the cap edge sits at
  // cos(d/2) = sqrt(threshold). T = -(2/D) ln cos(d/2).
  return -4.0 * std::log(threshold) / (rate * rate);
}

double fit_drift_rate(double threshold, double window_s, std::size_t trials, double step_s,
                      Rng& rng) {
  if (!(window_s > 0.0) || trials == 0 || !(step_s > 0.0))
    throw PolarizationError("fit_drift_rate: window, trials and step must be > 0");
  const DriftProcess unit{1.0};
  const StokesState start = StokesState::horizontal();
  double total = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    Jones j = start.jones();
    double t = 0.0;
    while (std::norm(start.jones().dot(j)) >= threshold) {
      j = random_drift_rotation(step_s, unit, rng) * j;
      t += step_s;
    }
    total += t;
  }
  const double t_unit = total / static_cast<double>(trials);
  return std::sqrt(t_unit / window_s);
}

}  // namespace qlink::pol
