#pragma once

// Small dense numerics shared by every module: Gaussians, KL divergences,
// moment fitting, SPD solves and reproducible random streams.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace exlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Gaussian1 {
  double mean = 0.0;
  double var = 1.0;  // variance, not standard deviation
};

struct GaussianN {
  Vec mean;
  Mat cov;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Throws DomainError unless var is finite and > 0 and mean is finite.
void validate(const Gaussian1& g);

/// Deterministic random stream keyed by (seed, stream id).
///
/// Two streams with equal keys produce identical draws on one build. Child
/// streams are derived from the key alone, never from how many draws the
/// parent has made, so per-trajectory streams can be handed out in any order.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  RngStream split(std::uint64_t child) const;

  double normal();
  double uniform();  // [0, 1)
  Vec normal_vec(std::size_t n);
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

/// KL(p || q) for univariate normals in variance form.
double kl_gaussian1(const Gaussian1& p, const Gaussian1& q);

/// KL(p || q) for multivariate normals. Throws DimensionError on mismatch,
/// FactorizationError when either covariance is not positive definite.
double kl_gaussian_n(const GaussianN& p, const GaussianN& q);

struct FitOptions {
  // Absolute lower bound on the diagonal jitter; 0 keeps the pure relative rule.
  double abs_floor = 0.0;
};

/// Sample mean and unbiased covariance. When the covariance is not positive
/// definite, eps * I is added with eps = 1e-9 * mean(diag) (or abs_floor if
/// larger); if that still fails the sample set is degenerate.
GaussianN fit_gaussian(std::span<const Vec> samples, FitOptions opts = {});

Vec spd_solve(const Mat& a, const Vec& b);
Mat spd_solve(const Mat& a, const Mat& b);

/// Lower Cholesky factor; throws FactorizationError when a is not SPD.
Mat cholesky_lower(const Mat& a);

/// Monte Carlo estimate with its standard error.
struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

McEstimate summarize(std::span<const double> samples);

}  // namespace exlab
