#ifndef ZZGIBBS_CORE_TYPES_HPP
#define ZZGIBBS_CORE_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace zzgibbs {

enum class EventKind : std::uint8_t { initial, flip, refresh, rejected };

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::initial: return "initial";
    case EventKind::flip: return "flip";
    case EventKind::refresh: return "refresh";
    case EventKind::rejected: return "rejected";
  }
  return "unknown";
}

inline EventKind parse_event_kind(std::string_view s) {
  if (s == "initial") return EventKind::initial;
  if (s == "flip") return EventKind::flip;
  if (s == "refresh") return EventKind::refresh;
  if (s == "rejected") return EventKind::rejected;
  throw std::invalid_argument("unknown event kind '" + std::string(s) + "'");
}

// Read-only view of one stored skeleton point.
struct SkeletonPoint {
  std::size_t index;
  double time;
  std::span<const double> position;
  std::span<const std::int8_t> velocity;
  EventKind kind;
};

struct TrajectoryDiagnostics {
  std::uint64_t proposals = 0;
  std::uint64_t flips = 0;
  std::uint64_t refreshes = 0;
  std::uint64_t bound_violations = 0;
  // One call produces one full pseudo-observation set.
  std::uint64_t simulator_calls = 0;
  std::uint64_t pseudo_observations = 0;
  double max_thinning_ratio = 0.0;
};

// Piecewise-linear zig-zag path stored as a flat skeleton. The path after the
// last stored point continues with the last velocity up to total_time().
class Trajectory {
 public:
  explicit Trajectory(std::size_t dimension = 0) : dim_(dimension) {}

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }

  void reserve(std::size_t points) {
    times_.reserve(points);
    kinds_.reserve(points);
    sims_.reserve(points);
    positions_.reserve(points * dim_);
    velocities_.reserve(points * dim_);
  }

  template <class Position, class Velocity>
  void append(double t, const Position& theta, const Velocity& nu, EventKind kind,
              std::uint64_t simulator_calls = 0) {
    times_.push_back(t);
    kinds_.push_back(kind);
    sims_.push_back(simulator_calls);
    for (std::size_t j = 0; j < dim_; ++j) positions_.push_back(static_cast<double>(theta[j]));
    for (std::size_t j = 0; j < dim_; ++j) velocities_.push_back(static_cast<std::int8_t>(nu[j]));
  }

  SkeletonPoint point(std::size_t k) const {
    return {k, times_[k], {positions_.data() + k * dim_, dim_}, {velocities_.data() + k * dim_, dim_},
            kinds_[k]};
  }
  double time(std::size_t k) const { return times_[k]; }
  double position(std::size_t k, std::size_t j) const { return positions_[k * dim_ + j]; }
  int velocity(std::size_t k, std::size_t j) const { return velocities_[k * dim_ + j]; }
  EventKind kind(std::size_t k) const { return kinds_[k]; }
  // Cumulative simulator calls when point k was recorded.
  std::uint64_t simulator_calls_at(std::size_t k) const { return sims_[k]; }

  double total_time() const { return total_time_; }
  void set_total_time(double t) { total_time_ = t; }

  TrajectoryDiagnostics& diagnostics() { return diag_; }
  const TrajectoryDiagnostics& diagnostics() const { return diag_; }

 private:
  std::size_t dim_;
  double total_time_ = 0.0;
  std::vector<double> times_;
  std::vector<EventKind> kinds_;
  std::vector<std::uint64_t> sims_;
  std::vector<double> positions_;
  std::vector<std::int8_t> velocities_;
  TrajectoryDiagnostics diag_;
};

// Piecewise-affine bound on the switching rates over [0, horizon]:
// rate_j(t) <= intercept_j + slope_j * t.
struct RateEnvelope {
  std::vector<double> intercept;
  std::vector<double> slope;
  double horizon = 1.0;

  std::size_t dimension() const { return intercept.size(); }
  double rate(std::size_t j, double t) const { return intercept[j] + slope[j] * t; }

  void check() const {
    if (slope.size() != intercept.size()) throw std::invalid_argument("invalid envelope: size mismatch");
    if (!(horizon > 0.0)) throw std::invalid_argument("invalid envelope: horizon must be positive");
    for (std::size_t j = 0; j < intercept.size(); ++j) {
      if (!(intercept[j] >= 0.0) || !(slope[j] >= 0.0))
        throw std::invalid_argument("invalid envelope");
      if (!std::isfinite(intercept[j]) || !std::isfinite(slope[j]))
        throw std::overflow_error("envelope overflow; reduce t_h");
    }
  }
};

// Responses y (n x q) and covariates X (n x p, possibly p = 0).
struct Dataset {
  Eigen::MatrixXd y;
  Eigen::MatrixXd X;

  std::size_t n() const { return static_cast<std::size_t>(y.rows()); }
};

}  // namespace zzgibbs

#endif
