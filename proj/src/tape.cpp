#include "exlab/tape.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "exlab/errors.hpp"

namespace exlab::neural {

namespace {

void same_shape(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError(std::string("tape: shape mismatch in ") + what);
}

}  // namespace

Var Tape::push(Mat value, Backward back) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) { return push(std::move(value), nullptr); }

void Tape::backward(Var root) {
  const Mat& r = value(root);
  if (r.rows() != 1 || r.cols() != 1) throw DimensionError("tape: backward root must be 1 x 1");
  for (auto& n : nodes_) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  nodes_[static_cast<std::size_t>(root.id)].grad(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this, n.grad);
  }
}

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw DimensionError("tape: matmul inner dimension");
  return push(value(a) * value(b), [a, b](Tape& t, const Mat& g) {
    t.acc_expr(a, g * t.value(b).transpose());
    t.acc_expr(b, t.value(a).transpose() * g);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) throw DimensionError("tape: matmul_nt inner dimension");
  return push(value(a) * value(b).transpose(), [a, b](Tape& t, const Mat& g) {
    t.acc_expr(a, g * t.value(b));
    t.acc_expr(b, g.transpose() * t.value(a));
  });
}

Var Tape::add(Var a, Var b) {
  same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), [a, b](Tape& t, const Mat& g) {
    t.acc(a, g);
    t.acc(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), [a, b](Tape& t, const Mat& g) {
    t.acc(a, g);
    t.acc_expr(b, -g);
  });
}

Var Tape::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) throw DimensionError("tape: add_row shape");
  Mat out = value(a);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), [a, row](Tape& t, const Mat& g) {
    t.acc(a, g);
    t.acc_expr(row, g.colwise().sum());
  });
}

Var Tape::add_const(Var a, const Mat& c) {
  same_shape(value(a), c, "add_const");
  return push(value(a) + c, [a](Tape& t, const Mat& g) { t.acc(a, g); });
}

Var Tape::mul(Var a, Var b) {
  same_shape(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, const Mat& g) {
    t.acc_expr(a, g.cwiseProduct(t.value(b)));
    t.acc_expr(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::div(Var a, Var b) {
  same_shape(value(a), value(b), "div");
  return push(value(a).cwiseQuotient(value(b)), [a, b](Tape& t, const Mat& g) {
    const Mat& bv = t.value(b);
    t.acc_expr(a, g.cwiseQuotient(bv));
    t.acc_expr(b, -(g.cwiseProduct(t.value(a)).cwiseQuotient(bv.cwiseProduct(bv))));
  });
}

Var Tape::scale(Var a, double c) {
  return push(value(a) * c, [a, c](Tape& t, const Mat& g) { t.acc_expr(a, g * c); });
}

Var Tape::add_scalar(Var a, double c) {
  return push(value(a).array() + c, [a](Tape& t, const Mat& g) { t.acc(a, g); });
}

Var Tape::exp(Var a) {
  Mat out = value(a).array().exp().matrix();
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [a, self](Tape& t, const Mat& g) {
    t.acc_expr(a, g.cwiseProduct(t.value(Var{self})));
  });
}

Var Tape::log(Var a) {
  return push(value(a).array().log().matrix(), [a](Tape& t, const Mat& g) {
    t.acc_expr(a, g.cwiseQuotient(t.value(a)));
  });
}

Var Tape::square(Var a) {
  return push(value(a).cwiseProduct(value(a)), [a](Tape& t, const Mat& g) {
    t.acc_expr(a, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var Tape::gelu(Var a) {
  const Mat& x = value(a);
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Mat out = x.unaryExpr([inv_sqrt2](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); });
  return push(std::move(out), [a, inv_sqrt2](Tape& t, const Mat& g) {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const Mat d = t.value(a).unaryExpr([inv_sqrt2, inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    t.acc_expr(a, g.cwiseProduct(d));
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  Mat out = value(a).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(out), [a, lo, hi](Tape& t, const Mat& g) {
    const Mat& x = t.value(a);
    const Mat pass = x.unaryExpr([lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
    t.acc_expr(a, g.cwiseProduct(pass));
  });
}

Var Tape::softmax_masked(Var a, const BoolMat& permitted) {
  const Mat& x = value(a);
  if (permitted.rows() != x.rows() || permitted.cols() != x.cols()) throw DimensionError("tape: softmax mask shape");
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (permitted(i, j)) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) throw ContractError("tape: softmax row with no permitted entries");
    double total = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (permitted(i, j)) {
        out(i, j) = std::exp(x(i, j) - mx);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  const int self = static_cast<int>(nodes_.size());
  return push(std::move(out), [a, self](Tape& t, const Mat& g) {
    const Mat& y = t.value(Var{self});
    const Vec dots = (g.cwiseProduct(y)).rowwise().sum();
    Mat ga = y.cwiseProduct(g);
    ga -= (y.array().colwise() * dots.array()).matrix();
    t.acc(a, ga);
  });
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Mat& x = value(a);
  const auto n = x.cols();
  if (value(gain).rows() != 1 || value(gain).cols() != n || value(bias).rows() != 1 || value(bias).cols() != n) {
    throw DimensionError("tape: layer_norm parameter shape");
  }
  const Vec mu = x.rowwise().mean();
  Mat xc = x.colwise() - mu;
  const Vec inv_sd = ((xc.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  Mat xhat = (xc.array().colwise() * inv_sd.array()).matrix();
  Mat out = (xhat.array().rowwise() * value(gain).row(0).array()).matrix();
  out.rowwise() += value(bias).row(0);
  return push(std::move(out), [a, gain, bias, xhat = std::move(xhat), inv_sd](Tape& t, const Mat& g) {
    const auto cols = static_cast<double>(xhat.cols());
    t.acc_expr(bias, g.colwise().sum());
    t.acc_expr(gain, g.cwiseProduct(xhat).colwise().sum());
    const Mat gx = (g.array().rowwise() * t.value(gain).row(0).array()).matrix();
    const Vec m1 = gx.rowwise().sum() / cols;
    const Vec m2 = gx.cwiseProduct(xhat).rowwise().sum() / cols;
    Mat ga = gx;
    ga.colwise() -= m1;
    ga -= (xhat.array().colwise() * m2.array()).matrix();
    ga = (ga.array().colwise() * inv_sd.array()).matrix();
    t.acc(a, ga);
  });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("tape: concat of nothing");
  const auto rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw DimensionError("tape: concat row mismatch");
    cols += value(p).cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return push(std::move(out), [owned = std::move(owned)](Tape& t, const Mat& g) {
    Eigen::Index off = 0;
    for (Var p : owned) {
      const auto c = t.value(p).cols();
      t.acc_expr(p, g.middleCols(off, c));
      off += c;
    }
  });
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > value(a).cols()) throw DimensionError("tape: slice out of range");
  return push(value(a).middleCols(start, count), [a, start, count](Tape& t, const Mat& g) {
    t.nodes_[static_cast<std::size_t>(a.id)].grad.middleCols(start, count) += g;
  });
}

Var Tape::gather_rows(Var a, std::span<const Eigen::Index> rows) {
  const Mat& x = value(a);
  Mat out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw DimensionError("tape: gather row out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return push(std::move(out), [a, idx = std::move(idx)](Tape& t, const Mat& g) {
    Mat& ga = t.nodes_[static_cast<std::size_t>(a.id)].grad;
    for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::scatter_col(Var v, Eigen::Index rows, Eigen::Index cols, std::span<const Eigen::Index> at_rows,
                      Eigen::Index col) {
  const Mat& x = value(v);
  if (x.cols() != 1 || x.rows() != static_cast<Eigen::Index>(at_rows.size())) {
    throw DimensionError("tape: scatter_col expects a column with one entry per target row");
  }
  if (col < 0 || col >= cols) throw DimensionError("tape: scatter column out of range");
  Mat out = Mat::Zero(rows, cols);
  for (std::size_t i = 0; i < at_rows.size(); ++i) {
    if (at_rows[i] < 0 || at_rows[i] >= rows) throw DimensionError("tape: scatter row out of range");
    out(at_rows[i], col) = x(static_cast<Eigen::Index>(i), 0);
  }
  std::vector<Eigen::Index> idx(at_rows.begin(), at_rows.end());
  return push(std::move(out), [v, idx = std::move(idx), col](Tape& t, const Mat& g) {
    Mat& gv = t.nodes_[static_cast<std::size_t>(v.id)].grad;
    for (std::size_t i = 0; i < idx.size(); ++i) gv(static_cast<Eigen::Index>(i), 0) += g(idx[i], col);
  });
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), [a](Tape& t, const Mat& g) {
    t.nodes_[static_cast<std::size_t>(a.id)].grad.array() += g(0, 0);
  });
}

Var Tape::mean(Var a) {
  const double n = static_cast<double>(value(a).size());
  return scale(sum(a), 1.0 / n);
}

}  // namespace exlab::neural
