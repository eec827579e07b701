#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// Nodes are appended in evaluation order, so insertion order is a topological
// order; backward() walks it once in reverse. Nodes the root does not depend
// on keep a zero adjoint.

#include <functional>
#include <span>
#include <vector>

#include "exlab/mathkit.hpp"

namespace exlab::neural {

using BoolMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Var {
  int id = -1;
};

class Tape {
 public:
  Var leaf(Mat value);

  const Mat& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  /// Adjoint after backward(); zero for nodes the root does not reach.
  const Mat& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }
  double scalar(Var v) const { return value(v)(0, 0); }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1; root must be 1 x 1.
  void backward(Var root);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b'
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
  Var add_const(Var a, const Mat& c);
  Var mul(Var a, Var b);        // elementwise
  Var div(Var a, Var b);        // elementwise
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var gelu(Var a);
  Var clamp(Var a, double lo, double hi);
  /// Row softmax over permitted entries; forbidden entries are exactly 0.
  Var softmax_masked(Var a, const BoolMat& permitted);
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var gather_rows(Var a, std::span<const Eigen::Index> rows);
  /// rows x cols zero matrix with v(i, 0) written at (at_rows[i], col).
  Var scatter_col(Var v, Eigen::Index rows, Eigen::Index cols, std::span<const Eigen::Index> at_rows, Eigen::Index col);
  Var sum(Var a);
  Var mean(Var a);

 private:
  using Backward = std::function<void(Tape&, const Mat& g)>;

  struct Node {
    Mat value;
    Mat grad;
    Backward back;
  };

  Var push(Mat value, Backward back);
  void acc(Var v, const Mat& g) { nodes_[static_cast<std::size_t>(v.id)].grad += g; }
  template <class Expr>
  void acc_expr(Var v, const Expr& g) {
    nodes_[static_cast<std::size_t>(v.id)].grad += g;
  }

  std::vector<Node> nodes_;
};

}  // namespace exlab::neural
