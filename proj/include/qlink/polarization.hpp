#pragma once

// Polarization drift on the Poincare sphere and the three-paddle
// compensation loop.
//
// Stokes convention for a Jones vector (x, y):
//   S1 = |x|^2 - |y|^2, S2 = 2 Re(conj(x) y), S3 = 2 Im(conj(x) y).

#include <array>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qlink/rng.hpp"

namespace qlink::pol {

using Complex = std::complex<double>;
using Jones = Eigen::Vector2cd;
using Matrix2c = Eigen::Matrix2cd;

class PolarizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StokesState {
 public:
  StokesState();  // horizontal
  static StokesState from_jones(const Jones& j);  // normalizes; throws on zero vector
  /// (S1, S2, S3) need not be exactly unit; it is projected onto the sphere.
  static StokesState from_stokes(double s1, double s2, double s3);
  static StokesState horizontal() { return from_jones(Jones(1.0, 0.0)); }
  static StokesState diagonal();
  static StokesState right_circular();

  const Jones& jones() const { return jones_; }
  std::array<double, 3> stokes() const;
  /// Great-circle angle between two states on the sphere, in [0, pi].
  double angle_to(const StokesState& other) const;

 private:
  explicit StokesState(const Jones& j) : jones_(j) {}
  Jones jones_;
};

struct DriftProcess {
  double rate = 0.0;  // rad / sqrt(s)
  void validate() const;
};

/// SU(2) rotation exp(-i theta.sigma / 2) for a Poincare-sphere rotation vector.
Matrix2c rotation(const std::array<double, 3>& theta);

/// Isotropic random rotation for one drift step: each component of the
/// rotation vector is normal with variance rate^2 dt / 2, so that the mean
/// squared great-circle displacement is rate^2 dt.
Matrix2c random_drift_rotation(double dt, const DriftProcess& process, Rng& rng);

StokesState drift_step(const StokesState& state, double dt, const DriftProcess& process, Rng& rng);

struct PaddleSettings {
  std::array<double, 3> angles{};  // rad, wrapped to [0, 2 pi)

  PaddleSettings wrapped() const;
};

/// Linear retarder with retardance delta and fast axis at angle theta.
Matrix2c waveplate(double retardance, double theta);

/// QWP(theta1) HWP(theta2) QWP(theta3). At all angles zero this is -identity.
Matrix2c paddle_transform(const PaddleSettings& settings);

/// |<current|target>|^2.
double compensation_score(const StokesState& current, const StokesState& target);

/// One fiber branch: fixed input SOP, accumulated fiber rotation and the
/// paddle controller behind it.
struct PolarizationChannel {
  StokesState input;
  Matrix2c fiber = Matrix2c::Identity();
  PaddleSettings paddles;
  DriftProcess drift;

  StokesState output() const;
  StokesState output_with(const PaddleSettings& p) const;
  void advance(double dt, Rng& rng);
};

struct ControllerConfig {
  /// Operating floor: a cycle succeeds when it ends at or above this score,
  /// and the scheduler recalibrates when the score falls below it.
  double threshold = 0.7744;
  /// The search keeps going until this score (or the evaluation budget).
  double target_score = 0.999;
  std::size_t max_evaluations = 200;
  double evaluation_time_s = 0.2;  // polarimeter read + paddle move
  double handshake_s = 1.0;        // termination -> stop latency
  double initial_bracket = 1.5707963267948966;  // half-width, rad
  double shrink = 0.75;
  std::size_t golden_steps = 4;    // evaluations per paddle per sweep
  bool freeze_drift = false;

  void validate() const;
};

enum class CalibrationEventKind { start, termination, stop };
const char* event_name(CalibrationEventKind k);

struct CalibrationEvent {
  CalibrationEventKind kind;
  double time_s;
};

struct CalibrationReport {
  bool success = false;
  std::size_t iterations = 0;  // objective evaluations after the initial measurement
  double initial_score = 0.0;
  double final_score = 0.0;
  double downtime_s = 0.0;
  std::vector<CalibrationEvent> events;
};

/// Coordinate ascent over the paddle angles: golden section per paddle with
/// a bracket that shrinks every sweep, then one pattern move along the
/// sweep's net displacement. Each
/// evaluation costs evaluation_time_s of channel time; the channel keeps
/// drifting unless freeze_drift is set. Updates channel.paddles.
CalibrationReport run_compensation_cycle(PolarizationChannel& channel, const StokesState& target,
                                         const ControllerConfig& config, Rng& rng,
                                         double t_start = 0.0);

enum class TracePhase { drift, calibrating };

struct TraceSample {
  double time_s;
  std::array<double, 3> stokes;
  double score;
  TracePhase phase;
};

struct ScheduleReport {
  std::vector<TraceSample> trace;
  std::vector<CalibrationReport> cycles;
  std::vector<double> drift_windows_s;  // free-drift durations ended by a recalibration
  double uptime_fraction = 0.0;
  double mean_drift_window_s = 0.0;
  double min_operating_score = 1.0;     // lowest drift-phase score still at or above threshold
  std::size_t failed_cycles = 0;
};

/// Alternate free drift and compensation over `duration_s`. A recalibration
/// starts when the score drops below the threshold or `cadence_s` after the
/// previous one, whichever comes first. Samples every `sample_dt_s`.
ScheduleReport schedule_recalibration(PolarizationChannel channel, const StokesState& target,
                                      const ControllerConfig& config, double cadence_s,
                                      double duration_s, double sample_dt_s, Rng& rng);

/// Mean time for a state starting on the target to first fall below the
/// score threshold, for isotropic drift at the given rate (first-passage
/// time of Brownian motion out of a polar cap).
double mean_crossing_time(double rate, double threshold);

/// Drift rate whose mean threshold crossing time is `window_s`, estimated
/// by Monte Carlo first-passage runs at unit rate (time scales as 1/rate^2).
double fit_drift_rate(double threshold, double window_s, std::size_t trials, double step_s,
                      Rng& rng);

}  // namespace qlink::pol
