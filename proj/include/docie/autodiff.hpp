#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records a DAG of matrix-valued nodes. Every op appends one node
// holding its forward value and a closure that pushes the node's gradient
// into its inputs. Parameters are bound into the tape as leaves that alias
// an external value/gradient pair, so one Tape lives for exactly one
// forward/backward pass.

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace docie {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant leaf; gradients reaching it are dropped.
  Var constant(Matrix value);
  // Leaf bound to an external parameter. On backward() the accumulated
  // gradient is added into *grad_sink.
  Var parameter(const Matrix& value, Matrix* grad_sink);

  // Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var push(Matrix value, bool needs_grad,
           std::function<void(Tape&, std::size_t)> backward_fn);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  Matrix& grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Matrix* sink = nullptr;
    std::function<void(Tape&, std::size_t)> backward;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise / linear algebra ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Matrix& c);
Var scale(const Var& a, double c);
// a * s where s is a 1x1 Var.
Var scale_by(const Var& a, const Var& s);
Var add_constant(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
// Adds a 1xC row to every row of a (RxC).
Var add_row(const Var& a, const Var& row);
// out(i, j) = a(i, j) + u(i) + v(j); u, v are column vectors.
Var add_outer(const Var& a, const Var& u, const Var& v);

Var tanh(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);

// ---- structural ----
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
Var concat_cols(const Var& a, const Var& b);
Var concat_cols(std::span<const Var> parts);
Var column(const Var& a, Eigen::Index j);
Var transpose(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
// Picks a(i, j) for each (i, j) into an Nx1 column.
Var gather_entries(const Var& a,
                   std::span<const std::pair<std::size_t, std::size_t>> idx);

// ---- reductions with masks ----
// Row-wise log-sum-exp restricted to entries where mask != 0. Every row
// must have at least one unmasked entry. Returns Rx1.
Var masked_row_logsumexp(const Var& a, const Matrix& mask);
// Row-wise softmax restricted to mask; masked-out entries are 0. Rows with
// an empty mask produce all zeros.
Var masked_row_softmax(const Var& a, const Matrix& mask);
// Element-wise log-sum-exp pooling over groups of rows: out.row(g) =
// log sum_{r in groups[g]} exp(a.row(r)). Groups must be non-empty.
Var logsumexp_pool(const Var& a,
                   std::span<const std::vector<std::size_t>> groups);
// Summed numerically stable binary cross-entropy on logits.
Var bce_with_logits(const Var& logits, const Matrix& targets);

}  // namespace ad
}  // namespace docie
