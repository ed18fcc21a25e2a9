#pragma once

// Small numerical helpers: pairwise summation, straight-line least squares,
// delete-one-block jackknife and Gauss-Legendre nodes.

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "cqm/core.hpp"

namespace cqm {

/// Pairwise (cascade) summation; result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_std_error = 0.0;  // from residual scatter, assumes iid residuals
};

/// Ordinary least squares y = intercept + slope x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_line: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw ConfigError("line fit needs at least 3 samples");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("line fit needs distinct abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  f.slope_std_error = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  return f;
}

struct JackknifeEstimate {
  std::vector<double> mean;
  std::vector<double> error;
};

/// Delete-one-block jackknife over per-block estimates `blocks[b][i]` with
/// block weights (e.g. trajectory counts). The central value is the weighted
/// mean over all blocks.
inline JackknifeEstimate jackknife(const std::vector<std::vector<double>>& blocks,
                                   const std::vector<double>& weights) {
  if (blocks.empty()) throw ConfigError("jackknife needs at least one block");
  if (blocks.size() != weights.size()) throw std::invalid_argument("jackknife: weight count");
  const std::size_t nb = blocks.size();
  const std::size_t np = blocks.front().size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;

  JackknifeEstimate out;
  out.mean.assign(np, 0.0);
  out.error.assign(np, 0.0);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < np; ++i) out.mean[i] += weights[b] * blocks[b][i];
  for (double& m : out.mean) m /= wsum;
  if (nb < 2) {
    out.error.assign(np, std::numeric_limits<double>::quiet_NaN());
    return out;
  }

  std::vector<double> loo_mean(np, 0.0);
  std::vector<std::vector<double>> loo(nb, std::vector<double>(np));
  for (std::size_t b = 0; b < nb; ++b) {
    const double w = wsum - weights[b];
    for (std::size_t i = 0; i < np; ++i) {
      loo[b][i] = (out.mean[i] * wsum - weights[b] * blocks[b][i]) / w;
      loo_mean[i] += loo[b][i];
    }
  }
  for (double& m : loo_mean) m /= static_cast<double>(nb);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < np; ++i) {
      const double d = loo[b][i] - loo_mean[i];
      out.error[i] += d * d;
    }
  const double f = static_cast<double>(nb - 1) / static_cast<double>(nb);
  for (double& e : out.error) e = std::sqrt(f * e);
  return out;
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule mapped to [a, b].
inline QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
  QuadratureRule q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.nodes[i] = 0.5 * (b - a) * x + 0.5 * (b + a);
    q.weights[i] = (b - a) / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

}  // namespace cqm
