#include "qlink/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

namespace qlink::detect {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DetectionError(what);
}

// floor(num / den) for den > 0.
std::int64_t floor_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && (num < 0)) --q;
  return q;
}

}  // namespace

void DetectorModel::validate() const {
  require(std::isfinite(efficiency) && efficiency >= 0.0 && efficiency <= 1.0,
          "DetectorModel: efficiency must be in [0, 1]");
  require(std::isfinite(dark_rate) && dark_rate >= 0.0, "DetectorModel: dark rate must be >= 0");
  require(std::isfinite(jitter_s) && jitter_s >= 0.0, "DetectorModel: jitter must be >= 0");
  require(std::isfinite(dead_time_s) && dead_time_s >= 0.0,
          "DetectorModel: dead time must be >= 0");
}

void DetectionEventStream::validate(double dead_time_s) const {
  const std::int64_t dead = to_ps(dead_time_s);
  const std::int64_t end = to_ps(duration_s);
  for (std::size_t i = 0; i < t_ps.size(); ++i) {
    require(t_ps[i] >= 0 && t_ps[i] <= end, "DetectionEventStream: timestamp outside record");
    if (i == 0) continue;
    require(t_ps[i] > t_ps[i - 1], "DetectionEventStream: timestamps not strictly increasing");
    if (dead > 0)
      require(t_ps[i] - t_ps[i - 1] >= dead, "DetectionEventStream: events closer than dead time");
  }
}

DetectionEventStream sample_events(const RateFunction& rate_fn, double rate_bound,
                                   const DetectorModel& detector, double duration_s,
                                   std::uint8_t channel, Rng& rng) {
  detector.validate();
  require(std::isfinite(duration_s) && duration_s > 0.0, "sample_events: duration must be > 0");
  require(std::isfinite(rate_bound) && rate_bound >= 0.0, "sample_events: rate bound must be >= 0");

  std::vector<double> hits;
  if (rate_bound > 0.0 && detector.efficiency > 0.0) {
    double t = 0.0;
    for (;;) {
      t += rng.exponential(rate_bound);
      if (t >= duration_s) break;
      const double r = rate_fn(t);
      if (!(r >= 0.0) || r > rate_bound * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "sample_events: rate " << r << " at t = " << t << " s outside [0, bound " << rate_bound
           << "]";
        throw DetectionError(os.str());
      }
      if (rng.uniform() * rate_bound < detector.efficiency * r) hits.push_back(t);
    }
  }
  if (detector.dark_rate > 0.0) {
    double t = 0.0;
    for (;;) {
      t += rng.exponential(detector.dark_rate);
      if (t >= duration_s) break;
      hits.push_back(t);
    }
  }

  const std::int64_t end = to_ps(duration_s);
  std::vector<std::int64_t> ps;
  ps.reserve(hits.size());
  for (double t : hits) {
    if (detector.jitter_s > 0.0) t += detector.jitter_s * rng.normal();
    const std::int64_t k = to_ps(t);
    if (k >= 0 && k < end) ps.push_back(k);
  }
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());

  DetectionEventStream out;
  out.channel = channel;
  out.duration_s = duration_s;
  const std::int64_t dead = to_ps(detector.dead_time_s);
  if (dead > 0) {
    out.t_ps.reserve(ps.size());
    for (std::int64_t k : ps)
      if (out.t_ps.empty() || k - out.t_ps.back() >= dead) out.t_ps.push_back(k);
  } else {
    out.t_ps = std::move(ps);
  }
  return out;
}

CoincidenceResult count_coincidences(const DetectionEventStream& a, const DetectionEventStream& b,
                                     double window_s) {
  require(std::isfinite(window_s) && window_s > 0.0, "count_coincidences: window must be > 0");
  // |t_a - t_b| <= window/2 in integer form: 2 |dt| <= window.
  const std::int64_t w = to_ps(window_s);
  CoincidenceResult out;
  std::vector<char> used(b.size(), 0);
  std::size_t lo = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::int64_t ta = a.t_ps[i];
    while (lo < b.size() && 2 * (ta - b.t_ps[lo]) > w) ++lo;
    std::size_t best = b.size();
    std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
    for (std::size_t j = lo; j < b.size() && 2 * (b.t_ps[j] - ta) <= w; ++j) {
      if (used[j]) continue;
      const std::int64_t d = std::abs(b.t_ps[j] - ta);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (best < b.size()) {
      used[best] = 1;
      out.pairs.emplace_back(i, best);
    }
  }
  out.count = out.pairs.size();
  return out;
}

std::size_t count_pairs_in(const DetectionEventStream& a, const DetectionEventStream& b,
                           double offset_s, double window_s) {
  require(window_s > 0.0, "count_pairs_in: window must be > 0");
  const std::int64_t lo_off = to_ps(offset_s - 0.5 * window_s);
  const std::int64_t hi_off = to_ps(offset_s + 0.5 * window_s);
  std::size_t n = 0;
  for (std::int64_t ta : a.t_ps) {
    const auto lo = std::lower_bound(b.t_ps.begin(), b.t_ps.end(), ta + lo_off);
    const auto hi = std::upper_bound(lo, b.t_ps.end(), ta + hi_off);
    n += static_cast<std::size_t>(hi - lo);
  }
  return n;
}

double G2Histogram::baseline_mean() const {
  if (baseline_bins.empty()) return 0.0;
  double s = 0.0;
  for (auto k : baseline_bins) s += g2[k];
  return s / static_cast<double>(baseline_bins.size());
}

double G2Histogram::baseline_sem() const {
  const std::size_t n = baseline_bins.size();
  if (n < 2) return 0.0;
  const double m = baseline_mean();
  double s = 0.0;
  for (auto k : baseline_bins) s += (g2[k] - m) * (g2[k] - m);
  return std::sqrt(s / static_cast<double>(n - 1) / static_cast<double>(n));
}

G2Accumulator::G2Accumulator(double bin_width_s, double max_dt_s) {
  require(std::isfinite(bin_width_s) && bin_width_s > 0.0, "G2Accumulator: bin width must be > 0");
  require(std::isfinite(max_dt_s) && max_dt_s >= bin_width_s,
          "G2Accumulator: max dt must be >= bin width");
  width_ps_ = to_ps(bin_width_s);
  require(width_ps_ > 0, "G2Accumulator: bin width below 1 ps");
  half_ = static_cast<std::size_t>(std::floor(max_dt_s / bin_width_s + 1e-9));
  counts_.assign(2 * half_ + 1, 0);
}

void G2Accumulator::add(const DetectionEventStream& a, const DetectionEventStream& b) {
  add_range(a, b, 0, a.size());
}

void G2Accumulator::add_range(const DetectionEventStream& a, const DetectionEventStream& b,
                              std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.size(), "G2Accumulator: bad range");
  const std::int64_t w = width_ps_;
  const auto h = static_cast<std::int64_t>(half_);
  // Bin k holds 2 dt in [(2k - 1) w, (2k + 1) w).
  const std::int64_t lim2 = (2 * h + 1) * w;
  std::size_t lo = 0;
  if (begin < end) {
    lo = static_cast<std::size_t>(
        std::lower_bound(b.t_ps.begin(), b.t_ps.end(), a.t_ps[begin] - lim2 / 2 - 1) -
        b.t_ps.begin());
  }
  for (std::size_t i = begin; i < end; ++i) {
    const std::int64_t ta = a.t_ps[i];
    while (lo < b.size() && 2 * (b.t_ps[lo] - ta) < -lim2) ++lo;
    for (std::size_t j = lo; j < b.size(); ++j) {
      const std::int64_t d2 = 2 * (b.t_ps[j] - ta);
      if (d2 >= lim2) break;
      const std::int64_t k = floor_div(d2 + w, 2 * w);
      ++counts_[static_cast<std::size_t>(k + h)];
      ++pairs_;
    }
  }
}

void G2Accumulator::merge(const G2Accumulator& other) {
  require(other.width_ps_ == width_ps_ && other.half_ == half_,
          "G2Accumulator: merging incompatible histograms");
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  pairs_ += other.pairs_;
}

G2Histogram G2Accumulator::finish(double duration_s, double baseline_fraction) const {
  require(baseline_fraction > 0.0 && baseline_fraction <= 1.0,
          "G2Accumulator: baseline fraction must be in (0, 1]");
  const double w = to_s(width_ps_);
  const double max_dt = static_cast<double>(half_) * w;
  require(duration_s > max_dt + 0.5 * w, "G2Accumulator: record shorter than the delay range");
  const std::size_t n = counts_.size();
  G2Histogram hist;
  hist.counts = counts_;
  hist.total_pairs = pairs_;
  hist.edges_s.resize(n + 1);
  hist.centers_s.resize(n);
  std::vector<double> corrected(n), corr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = (static_cast<double>(i) - static_cast<double>(half_)) * w;
    hist.centers_s[i] = c;
    hist.edges_s[i] = c - 0.5 * w;
    corr[i] = duration_s / (duration_s - std::abs(c));
    corrected[i] = static_cast<double>(counts_[i]) * corr[i];
  }
  hist.edges_s[n] = hist.centers_s[n - 1] + 0.5 * w;

  const double cut = (1.0 - baseline_fraction) * max_dt;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(hist.centers_s[i]) >= cut - 1e-9 * w) {
      hist.baseline_bins.push_back(i);
      sum += corrected[i];
    }
  }
  require(!hist.baseline_bins.empty(), "estimate_g2: no baseline bins");
  hist.baseline_counts = sum / static_cast<double>(hist.baseline_bins.size());
  require(hist.baseline_counts > 0.0, "estimate_g2: no pairs in the baseline bins");
  hist.g2.resize(n);
  hist.sigma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    hist.g2[i] = corrected[i] / hist.baseline_counts;
    const double cnt = std::max<double>(1.0, static_cast<double>(counts_[i]));
    hist.sigma[i] = std::sqrt(cnt) * corr[i] / hist.baseline_counts;
  }
  return hist;
}

G2Histogram estimate_g2(const DetectionEventStream& a, const DetectionEventStream& b,
                        double bin_width_s, double max_dt_s, double baseline_fraction) {
  require(!a.empty() && !b.empty(), "estimate_g2: streams must be non-empty");
  G2Accumulator acc(bin_width_s, max_dt_s);
  acc.add(a, b);
  return acc.finish(std::min(a.duration_s, b.duration_s), baseline_fraction);
}

namespace {

constexpr int kSubsamples = 16;

double shape(DipModel m, double x, double w) {
  return m == DipModel::exponential ? std::exp(-std::abs(x) / w) : std::exp(-0.5 * x * x / (w * w));
}

double bin_average(DipModel m, double lo, double hi, double w) {
  double s = 0.0;
  const double h = (hi - lo) / kSubsamples;
  for (int k = 0; k < kSubsamples; ++k) s += shape(m, lo + (k + 0.5) * h, w);
  return s / kSubsamples;
}

// Parameters: baseline b, depth d, log width u.
struct DipResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  const G2Histogram* hist;
  DipModel model;
  std::vector<double> weight;

  int inputs() const { return 3; }
  int values() const { return static_cast<int>(hist->size()); }

  double predict(const Eigen::VectorXd& p, std::size_t i) const {
    const double w = std::exp(p(2));
    return p(0) * (1.0 - p(1) * bin_average(model, hist->edges_s[i], hist->edges_s[i + 1], w));
  }

  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& f) const {
    for (std::size_t i = 0; i < hist->size(); ++i)
      f(static_cast<Eigen::Index>(i)) = (predict(p, i) - hist->g2[i]) * weight[i];
    return 0;
  }
};

}  // namespace

DipFit fit_dip(const G2Histogram& hist, DipModel model, VisibilityMode mode) {
  require(hist.size() >= 4, "fit_dip: histogram too short");
  require(hist.baseline_bins.size() >= 5, "fit_dip: need at least 5 baseline bins");
  require(hist.edges_s.size() == hist.size() + 1, "fit_dip: malformed histogram");

  DipResidual fn{&hist, model, {}};
  bool have_sigma = true;
  for (double s : hist.sigma) have_sigma = have_sigma && s > 0.0;
  have_sigma = have_sigma && hist.sigma.size() == hist.size();
  fn.weight.resize(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) fn.weight[i] = have_sigma ? 1.0 / hist.sigma[i] : 1.0;

  // Starting point from the data.
  double b0 = 0.0;
  for (auto k : hist.baseline_bins) b0 += hist.g2[k];
  b0 /= static_cast<double>(hist.baseline_bins.size());
  std::size_t imin = 0;
  for (std::size_t i = 1; i < hist.size(); ++i)
    if (hist.g2[i] < hist.g2[imin]) imin = i;
  const double d0 = std::max(1e-3, 1.0 - hist.g2[imin] / b0);
  const double bin_w = hist.edges_s[1] - hist.edges_s[0];
  double w0 = 0.0;
  const double level = b0 * (1.0 - d0 * std::exp(-1.0));
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double x = std::abs(hist.centers_s[i]);
    if (x > 0.0 && hist.g2[i] >= level && (w0 == 0.0 || x < w0)) w0 = x;
  }
  if (w0 == 0.0) w0 = 0.1 * (hist.edges_s.back() - hist.edges_s.front());
  w0 = std::max(w0, 0.5 * bin_w);

  Eigen::VectorXd p(3);
  p << b0, d0, std::log(w0);
  Eigen::NumericalDiff<DipResidual> nd(fn);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<DipResidual>> lm(nd);
  lm.parameters.maxfev = 2000;
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-14;
  const auto status = lm.minimize(p);

  DipFit out;
  out.converged = status > 0 && status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;

  // Covariance from the Jacobian at the optimum (central differences).
  const auto m = static_cast<Eigen::Index>(hist.size());
  Eigen::VectorXd f0(m), fp(m), fm(m);
  fn(p, f0);
  Eigen::MatrixXd J(m, 3);
  for (int k = 0; k < 3; ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(p(k)));
    Eigen::VectorXd q = p;
    q(k) += h;
    fn(q, fp);
    q(k) -= 2.0 * h;
    fn(q, fm);
    J.col(k) = (fp - fm) / (2.0 * h);
  }
  const double dof = std::max<double>(1.0, static_cast<double>(m) - 3.0);
  out.chi2_per_dof = f0.squaredNorm() / dof;
  Eigen::Matrix3d cov = (J.transpose() * J).inverse();
  // Without real uncertainties the residual scatter sets the scale.
  cov *= have_sigma ? std::max(1.0, out.chi2_per_dof) : out.chi2_per_dof;

  out.baseline = p(0);
  out.depth = p(1);
  out.width_s = std::exp(p(2));
  out.baseline_sigma = std::sqrt(std::max(0.0, cov(0, 0)));
  out.depth_sigma = std::sqrt(std::max(0.0, cov(1, 1)));
  out.width_sigma = out.width_s * std::sqrt(std::max(0.0, cov(2, 2)));
  out.g2_zero = out.baseline * (1.0 - out.depth);

  auto to_v = [mode](double d) {
    const double dd = std::max(0.0, d);
    return std::min(1.0, mode == VisibilityMode::mz ? std::sqrt(2.0 * dd) : dd);
  };
  out.visibility = to_v(out.depth);
  out.visibility_sigma =
      0.5 * (to_v(out.depth + out.depth_sigma) - to_v(out.depth - out.depth_sigma));
  return out;
}

}  // namespace qlink::detect
