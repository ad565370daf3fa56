#pragma once

// Monte Carlo photodetection, coincidence counting and G2 estimation.
//
// Timestamps are integer picoseconds; a 63-bit count covers ~106 days.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qlink/rng.hpp"

namespace qlink::detect {

class DetectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kPsPerSecond = 1e12;

inline std::int64_t to_ps(double t_s) {
  return static_cast<std::int64_t>(std::llround(t_s * kPsPerSecond));
}
inline double to_s(std::int64_t ps) { return static_cast<double>(ps) / kPsPerSecond; }

struct DetectorModel {
  double efficiency = 0.8;
  double dark_rate = 100.0;    // 1/s
  double jitter_s = 50e-12;    // Gaussian sigma
  double dead_time_s = 0.0;

  void validate() const;
};

struct DetectionEventStream {
  std::uint8_t channel = 0;
  double duration_s = 0.0;
  std::vector<std::int64_t> t_ps;  // strictly increasing

  std::size_t size() const { return t_ps.size(); }
  bool empty() const { return t_ps.empty(); }
  /// Throws unless strictly increasing, within [0, duration] and spaced by
  /// at least the dead time.
  void validate(double dead_time_s = 0.0) const;
};

using RateFunction = std::function<double(double)>;

/// Inhomogeneous Poisson detections by thinning against `rate_bound`
/// (an upper bound of rate_fn, which is queried at nondecreasing times),
/// then dark counts, jitter, and dead-time pruning. Detections jittered
/// outside [0, duration) are dropped.
DetectionEventStream sample_events(const RateFunction& rate_fn, double rate_bound,
                                   const DetectorModel& detector, double duration_s,
                                   std::uint8_t channel, Rng& rng);

struct CoincidenceResult {
  std::size_t count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // indices into a and b
};

/// One-to-one matching: each event of `a`, in time order, takes the nearest
/// unused event of `b` with |t_a - t_b| <= window / 2.
CoincidenceResult count_coincidences(const DetectionEventStream& a, const DetectionEventStream& b,
                                     double window_s);

/// Pairs with t_b - t_a in [offset - window/2, offset + window/2], all pairs counted.
std::size_t count_pairs_in(const DetectionEventStream& a, const DetectionEventStream& b,
                           double offset_s, double window_s);

struct G2Histogram {
  std::vector<double> edges_s;    // n + 1 edges
  std::vector<double> centers_s;
  std::vector<std::uint64_t> counts;
  std::vector<double> g2;
  std::vector<double> sigma;
  std::vector<std::size_t> baseline_bins;
  double baseline_counts = 0.0;   // mean corrected counts of the baseline bins
  std::size_t total_pairs = 0;

  std::size_t size() const { return g2.size(); }
  double baseline_mean() const;   // mean g2 over the baseline bins
  double baseline_sem() const;    // standard error of that mean
};

/// All-pairs t_b - t_a histogram with bins centred on zero delay. Partial
/// results for disjoint slices of `a` can be merged in any order.
class G2Accumulator {
 public:
  G2Accumulator(double bin_width_s, double max_dt_s);

  void add(const DetectionEventStream& a, const DetectionEventStream& b);
  /// Only events a[begin, end).
  void add_range(const DetectionEventStream& a, const DetectionEventStream& b, std::size_t begin,
                 std::size_t end);
  void merge(const G2Accumulator& other);

  /// Counts at delay d are corrected by T / (T - |d|) for the finite
  /// overlap of the two records, then normalized by the mean over the bins
  /// with |d| >= (1 - baseline_fraction) max_dt.
  G2Histogram finish(double duration_s, double baseline_fraction = 0.2) const;

  std::size_t half_bins() const { return half_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  std::int64_t width_ps_;
  std::size_t half_;
  std::vector<std::uint64_t> counts_;
  std::size_t pairs_ = 0;
};

G2Histogram estimate_g2(const DetectionEventStream& a, const DetectionEventStream& b,
                        double bin_width_s, double max_dt_s, double baseline_fraction = 0.2);

enum class DipModel { exponential, gaussian };
enum class VisibilityMode { mz, hom };

struct DipFit {
  double visibility = 0.0, visibility_sigma = 0.0;
  double depth = 0.0, depth_sigma = 0.0;  // d in g = b (1 - d shape(dt / w))
  double width_s = 0.0, width_sigma = 0.0;
  double baseline = 0.0, baseline_sigma = 0.0;
  double g2_zero = 0.0;                   // b (1 - d)
  double chi2_per_dof = 0.0;
  bool converged = false;
};

/// Weighted least squares of the bin-averaged dip model. MZ mode: V = sqrt(2 d);
/// HOM mode: V = d. sigma_V is half the image of [d - sigma_d, d + sigma_d].
DipFit fit_dip(const G2Histogram& hist, DipModel model, VisibilityMode mode);

}  // namespace qlink::detect
