#include "exlab/mathkit.hpp"

#include <cmath>
#include <numeric>

#include "exlab/errors.hpp"

namespace exlab {

void validate(const Gaussian1& g) {
  if (!std::isfinite(g.mean)) throw DomainError("gaussian mean is not finite");
  if (!(g.var > 0.0) || !std::isfinite(g.var)) throw DomainError("gaussian variance must be finite and > 0");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(seeded_engine(seed, stream)) {}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, splitmix64(stream_ ^ splitmix64(child + 0x632be59bd9b4e019ULL)));
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::uniform() { return uniform_(engine_); }

Vec RngStream::normal_vec(std::size_t n) {
  Vec v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal_(engine_);
  return v;
}

double kl_gaussian1(const Gaussian1& p, const Gaussian1& q) {
  validate(p);
  validate(q);
  const double diff = p.mean - q.mean;
  return 0.5 * std::log(q.var / p.var) + (p.var + diff * diff) / (2.0 * q.var) - 0.5;
}

Mat cholesky_lower(const Mat& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is not square");
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw FactorizationError("cholesky: matrix is not positive definite");
  Mat l = llt.matrixL();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) throw FactorizationError("cholesky: non-positive pivot");
  }
  return l;
}

double kl_gaussian_n(const GaussianN& p, const GaussianN& q) {
  const auto d = p.mean.size();
  if (q.mean.size() != d || p.cov.rows() != d || p.cov.cols() != d || q.cov.rows() != d || q.cov.cols() != d) {
    throw DimensionError("kl_gaussian_n: dimension mismatch");
  }
  const Mat lp = cholesky_lower(p.cov);
  const Mat lq = cholesky_lower(q.cov);
  // tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
  const Mat m = lq.triangularView<Eigen::Lower>().solve(lp);
  const Vec diff = q.mean - p.mean;
  const Vec z = lq.triangularView<Eigen::Lower>().solve(diff);
  const double logdet_q = 2.0 * lq.diagonal().array().log().sum();
  const double logdet_p = 2.0 * lp.diagonal().array().log().sum();
  return 0.5 * (m.squaredNorm() + z.squaredNorm() - static_cast<double>(d) + logdet_q - logdet_p);
}

GaussianN fit_gaussian(std::span<const Vec> samples, FitOptions opts) {
  if (samples.empty()) throw ContractError("fit_gaussian: no samples");
  const auto d = samples.front().size();
  if (samples.size() < static_cast<std::size_t>(d) + 1) throw ContractError("fit_gaussian: need at least d+1 samples");
  Vec mean = Vec::Zero(d);
  for (const auto& s : samples) {
    if (s.size() != d) throw DimensionError("fit_gaussian: ragged samples");
    mean += s;
  }
  mean /= static_cast<double>(samples.size());
  Mat cov = Mat::Zero(d, d);
  for (const auto& s : samples) {
    const Vec c = s - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= static_cast<double>(samples.size() - 1);

  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success || cov.diagonal().minCoeff() <= 0.0) {
    const double eps = std::max(1e-9 * cov.diagonal().mean(), opts.abs_floor);
    cov += eps * Mat::Identity(d, d);
    Eigen::LLT<Mat> retry(cov);
    if (!(eps > 0.0) || retry.info() != Eigen::Success) {
      throw FactorizationError("fit_gaussian: degenerate sample set");
    }
  }
  return {std::move(mean), std::move(cov)};
}

namespace {

void check_symmetric(const Mat& a) {
  if (a.rows() != a.cols()) throw DimensionError("spd_solve: matrix is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw FactorizationError("spd_solve: matrix is not symmetric");
  }
}

}  // namespace

Vec spd_solve(const Mat& a, const Vec& b) {
  check_symmetric(a);
  if (b.size() != a.rows()) throw DimensionError("spd_solve: rhs length mismatch");
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw FactorizationError("spd_solve: matrix is not positive definite");
  return llt.solve(b);
}

Mat spd_solve(const Mat& a, const Mat& b) {
  check_symmetric(a);
  if (b.rows() != a.rows()) throw DimensionError("spd_solve: rhs rows mismatch");
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw FactorizationError("spd_solve: matrix is not positive definite");
  return llt.solve(b);
}

McEstimate summarize(std::span<const double> samples) {
  McEstimate est;
  est.n = samples.size();
  if (samples.empty()) return est;
  const double n = static_cast<double>(samples.size());
  est.value = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  if (samples.size() > 1) {
    double ss = 0.0;
    for (double s : samples) ss += (s - est.value) * (s - est.value);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return est;
}

}  // namespace exlab
