#pragma once

// Ensemble-averaged (unconditioned) qubit evolution
//
//   d r/dt = Lambda (r - r_st)
//
// with piecewise-constant (Lambda, r_st). The solution over [t', t] is affine,
// r(t) = P(t|t') r(t') + p_st(t|t'); both pieces are obtained from a single
// exponential of the augmented 4x4 generator [[Lambda, -Lambda r_st], [0, 0]],
// which stays valid when Lambda is singular.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cqm/core.hpp"

namespace cqm {

/// Matrix exponential by scaling and squaring with the degree-13 Pade
/// approximant (Higham 2005). Intended for tiny fixed-size matrices.
template <int N>
Eigen::Matrix<double, N, N> expm(const Eigen::Matrix<double, N, N>& a) {
  using Mat = Eigen::Matrix<double, N, N>;
  // Pade coefficients divided by b_0, so rows of a that vanish map to exact unit rows.
  static constexpr double b0 = 64764752532480000.0;
  static constexpr double b[] = {1.0,                        32382376266240000.0 / b0, 7771770303897600.0 / b0,
                                 1187353796428800.0 / b0,    129060195264000.0 / b0,   10559470521600.0 / b0,
                                 670442572800.0 / b0,        33522128640.0 / b0,       1323241920.0 / b0,
                                 40840800.0 / b0,            960960.0 / b0,            16380.0 / b0,
                                 182.0 / b0,                 1.0 / b0};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  if (!std::isfinite(norm1)) throw NumericalError("matrix exponential of non-finite matrix", 0, 0);
  int s = 0;
  if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Mat x = a * std::ldexp(1.0, -s);

  const Mat id = Mat::Identity();
  const Mat x2 = x * x;
  const Mat x4 = x2 * x2;
  const Mat x6 = x4 * x2;
  const Mat u_inner = x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 +
                      b[3] * x2 + b[1] * id;
  const Mat u = x * u_inner;
  const Mat v = x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 +
                b[2] * x2 + b[0] * id;
  Mat r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

/// Constant ensemble generator valid on [t_begin, t_end).
struct EnsembleGenerator {
  Mat3 lambda = Mat3::Zero();
  Vec3 r_st = Vec3::Zero();
  double t_begin = -std::numeric_limits<double>::infinity();
  double t_end = std::numeric_limits<double>::infinity();

  bool contains(double t) const noexcept { return t >= t_begin && t < t_end; }
  bool is_unital() const noexcept { return r_st.isZero(0.0); }
};

/// Affine map r -> P r + p_st between two times.
struct Propagator {
  Mat3 matrix = Mat3::Identity();
  Vec3 drift = Vec3::Zero();
  double from_time = 0.0;
  double to_time = 0.0;

  Vec3 apply(const Vec3& r) const { return matrix * r + drift; }

  /// Composition: (*this) followed by `later`.
  Propagator then(const Propagator& later) const {
    return Propagator{later.matrix * matrix, later.matrix * drift + later.drift, from_time,
                      later.to_time};
  }
};

/// Propagator of a single constant generator over a duration h >= 0.
inline Propagator constant_propagator(const Mat3& lambda, const Vec3& r_st, double h) {
  Eigen::Matrix4d aug = Eigen::Matrix4d::Zero();
  aug.topLeftCorner<3, 3>() = lambda * h;
  aug.topRightCorner<3, 1>() = -(lambda * r_st) * h;
  const Eigen::Matrix4d e = expm<4>(aug);
  Propagator p;
  p.matrix = e.topLeftCorner<3, 3>();
  p.drift = e.topRightCorner<3, 1>();
  p.to_time = h;
  return p;
}

/// Ordered, gap-free list of constant generators.
class EnsembleSchedule {
 public:
  EnsembleSchedule() : EnsembleSchedule(EnsembleGenerator{}) {}

  explicit EnsembleSchedule(EnsembleGenerator single)
      : EnsembleSchedule(std::vector<EnsembleGenerator>{std::move(single)}) {}

  explicit EnsembleSchedule(std::vector<EnsembleGenerator> segments)
      : segments_(std::move(segments)) {
    if (segments_.empty()) throw ConfigError("ensemble schedule needs at least one segment");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& s = segments_[i];
      if (!(s.t_end > s.t_begin))
        throw ConfigError("segment " + std::to_string(i) + " has an empty validity interval");
      if (!s.lambda.allFinite() || !is_finite(s.r_st))
        throw ConfigError("segment " + std::to_string(i) + " has non-finite entries");
      if (i > 0 && segments_[i - 1].t_end != s.t_begin)
        throw ConfigError("segments " + std::to_string(i - 1) + " and " + std::to_string(i) +
                          " overlap or leave a gap");
    }
  }

  const std::vector<EnsembleGenerator>& segments() const noexcept { return segments_; }

  double t_begin() const noexcept { return segments_.front().t_begin; }
  double t_end() const noexcept { return segments_.back().t_end; }

  bool covers(double a, double b) const noexcept { return a >= t_begin() && b <= t_end(); }

  /// Index of the segment containing t; throws if t is not covered.
  std::size_t segment_index(double t) const {
    const auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                                     [](double v, const EnsembleGenerator& s) { return v < s.t_begin; });
    if (it == segments_.begin() || !std::prev(it)->contains(t))
      throw ConfigError("ensemble schedule does not cover t = " + std::to_string(t) + " us");
    return static_cast<std::size_t>(std::distance(segments_.begin(), it) - 1);
  }

  bool all_unital() const noexcept {
    return std::all_of(segments_.begin(), segments_.end(),
                       [](const EnsembleGenerator& s) { return s.is_unital(); });
  }

  /// P(t_to | t_from), p_st(t_to | t_from). Splits segments at query endpoints.
  Propagator propagator(double t_from, double t_to) const {
    if (!(t_to >= t_from)) throw ConfigError("propagator requires t_to >= t_from");
    Propagator total;
    total.from_time = t_from;
    total.to_time = t_from;
    if (t_to == t_from) return total;
    if (!covers(t_from, t_to))
      throw ConfigError("ensemble schedule does not cover [" + std::to_string(t_from) + ", " +
                        std::to_string(t_to) + "] us");
    double t = t_from;
    std::size_t idx = segment_index(t);
    while (t < t_to) {
      const auto& seg = segments_[idx];
      const double end = std::min(t_to, seg.t_end);
      Propagator piece = constant_propagator(seg.lambda, seg.r_st, end - t);
      piece.from_time = t;
      piece.to_time = end;
      total = total.then(piece);
      t = end;
      ++idx;
    }
    total.to_time = t_to;
    return total;
  }

  Vec3 evolve(const Vec3& r_in, double t_in, double t_out) const {
    return propagator(t_in, t_out).apply(r_in);
  }

 private:
  std::vector<EnsembleGenerator> segments_;
};

inline Propagator propagator(double t_from, double t_to, const EnsembleSchedule& schedule) {
  return schedule.propagator(t_from, t_to);
}

/// r_ens(t_out | state_in, t_in). Accepts states outside the Bloch ball.
inline BlochVector evolve(const BlochVector& state_in, double t_in, double t_out,
                          const EnsembleSchedule& schedule) {
  return schedule.evolve(state_in, t_in, t_out);
}

// ---------------------------------------------------------------------------
// Generator builders

/// Rabi rotation about x at omega_r [rad/us] plus dephasing gamma [1/us] of the
/// x and y components; unital.
inline EnsembleGenerator rabi_dephasing_generator(double gamma, double omega_r) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be non-negative");
  if (!std::isfinite(omega_r)) throw ConfigError("Rabi frequency must be finite");
  EnsembleGenerator g;
  g.lambda << -gamma, 0.0, 0.0,
               0.0, -gamma, -omega_r,
               0.0, omega_r, 0.0;
  return g;
}

/// Rotation r -> omega * axis x r.
inline EnsembleGenerator rotation_generator(const Vec3& axis, double omega) {
  EnsembleGenerator g;
  const Vec3 w = omega * axis;
  g.lambda << 0.0, -w.z(), w.y(),
              w.z(), 0.0, -w.x(),
              -w.y(), w.x(), 0.0;
  return g;
}

/// Decay of the components perpendicular to `axis` at `rate`.
inline EnsembleGenerator dephasing_generator(const Vec3& axis, double rate) {
  EnsembleGenerator g;
  g.lambda = -rate * (Mat3::Identity() - axis * axis.transpose());
  return g;
}

/// Energy relaxation towards z = z_eq: transverse rate gamma1/2, longitudinal gamma1.
inline EnsembleGenerator relaxation_generator(double gamma1, double z_eq) {
  EnsembleGenerator g;
  g.lambda = Vec3(-gamma1 / 2, -gamma1 / 2, -gamma1).asDiagonal();
  g.r_st = Vec3(0.0, 0.0, z_eq);
  return g;
}

/// Measurement-induced dephasing of every detector, Gamma_m,l (1 - n_l n_l^T).
template <class Detectors>
EnsembleGenerator measurement_dephasing_generator(const Detectors& detectors) {
  EnsembleGenerator g;
  for (const auto& d : detectors)
    g.lambda += dephasing_generator(d.axis(), d.measurement_dephasing_rate()).lambda;
  return g;
}

/// Sum of two generators on the intersection of their validity intervals.
/// The combined stationary state solves Lambda r_st = Lambda_a r_a + Lambda_b r_b.
inline EnsembleGenerator sum_generators(const EnsembleGenerator& a, const EnsembleGenerator& b) {
  EnsembleGenerator g;
  g.lambda = a.lambda + b.lambda;
  g.t_begin = std::max(a.t_begin, b.t_begin);
  g.t_end = std::min(a.t_end, b.t_end);
  const Vec3 rhs = a.lambda * a.r_st + b.lambda * b.r_st;
  if (rhs.isZero(0.0)) return g;
  const auto lu = g.lambda.fullPivLu();
  if (!lu.isInvertible())
    throw ConfigError("combined generator is singular with a non-zero stationary drive");
  g.r_st = lu.solve(rhs);
  return g;
}

}  // namespace cqm
