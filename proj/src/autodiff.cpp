#include "docie/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace docie::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
Matrix& Var::grad() const { return tape_->grad(id_); }

Var Tape::constant(Matrix value) {
  return push(std::move(value), false, nullptr);
}

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  Var v = push(value, true, nullptr);
  nodes_[v.id()].sink = grad_sink;
  return v;
}

Var Tape::push(Matrix value, bool needs_grad,
               std::function<void(Tape&, std::size_t)> backward_fn) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backward = std::move(backward_fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw std::invalid_argument("backward: foreign var");
  if (root.rows() != 1 || root.cols() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  grad(root.id())(0, 0) += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.sink != nullptr) *n.sink += n.grad;
  }
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw std::invalid_argument("autodiff: uninitialised Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape())
    throw std::invalid_argument("autodiff: vars belong to different tapes");
  return tape_of(a);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// Adds g into input id only if that input participates in differentiation.
template <typename Expr>
void accumulate(Tape& t, std::size_t id, const Expr& g) {
  if (t.needs_grad(id)) t.grad(id) += g;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, std::size_t self) {
                  accumulate(t, ia, t.grad(self));
                  accumulate(t, ib, t.grad(self));
                });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, std::size_t self) {
                  accumulate(t, ia, t.grad(self));
                  accumulate(t, ib, -t.grad(self));
                });
}

Var cwise_mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "cwise_mul");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()),
                t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  accumulate(t, ia, g.cwiseProduct(t.value(ib)));
                  accumulate(t, ib, g.cwiseProduct(t.value(ia)));
                });
}

Var cwise_mul(const Var& a, const Matrix& c) {
  Tape& t = tape_of(a);
  if (a.rows() != c.rows() || a.cols() != c.cols())
    throw std::invalid_argument("cwise_mul: shape mismatch");
  const auto ia = a.id();
  return t.push(a.value().cwiseProduct(c), t.needs_grad(ia),
                [ia, c](Tape& t, std::size_t self) {
                  accumulate(t, ia, t.grad(self).cwiseProduct(c));
                });
}

Var scale(const Var& a, double c) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push(a.value() * c, t.needs_grad(ia),
                [ia, c](Tape& t, std::size_t self) {
                  accumulate(t, ia, t.grad(self) * c);
                });
}

Var scale_by(const Var& a, const Var& s) {
  Tape& t = tape_of(a, s);
  if (s.rows() != 1 || s.cols() != 1)
    throw std::invalid_argument("scale_by: scalar expected");
  const auto ia = a.id(), is = s.id();
  return t.push(a.value() * s.scalar(), t.needs_grad(ia) || t.needs_grad(is),
                [ia, is](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  accumulate(t, ia, g * t.value(is)(0, 0));
                  if (t.needs_grad(is))
                    t.grad(is)(0, 0) += g.cwiseProduct(t.value(ia)).sum();
                });
}

Var add_constant(const Var& a, double c) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push((a.value().array() + c).matrix(), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  accumulate(t, ia, t.grad(self));
                });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dim");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(ia))
                    t.grad(ia).noalias() += g * t.value(ib).transpose();
                  if (t.needs_grad(ib))
                    t.grad(ib).noalias() += t.value(ia).transpose() * g;
                });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dim");
  const auto ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value().transpose(),
                t.needs_grad(ia) || t.needs_grad(ib),
                [ia, ib](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  if (t.needs_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
                  if (t.needs_grad(ib))
                    t.grad(ib).noalias() += g.transpose() * t.value(ia);
                });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_row: shape mismatch");
  const auto ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), t.needs_grad(ia) || t.needs_grad(ir),
                [ia, ir](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  accumulate(t, ia, g);
                  accumulate(t, ir, g.colwise().sum());
                });
}

Var add_outer(const Var& a, const Var& u, const Var& v) {
  Tape& t = tape_of(a, u);
  tape_of(a, v);
  if (u.cols() != 1 || v.cols() != 1 || u.rows() != a.rows() ||
      v.rows() != a.cols())
    throw std::invalid_argument("add_outer: shape mismatch");
  const auto ia = a.id(), iu = u.id(), iv = v.id();
  Matrix out = a.value();
  out.colwise() += u.value().col(0);
  out.rowwise() += v.value().col(0).transpose();
  return t.push(std::move(out),
                t.needs_grad(ia) || t.needs_grad(iu) || t.needs_grad(iv),
                [ia, iu, iv](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  accumulate(t, ia, g);
                  accumulate(t, iu, g.rowwise().sum());
                  accumulate(t, iv, g.colwise().sum().transpose());
                });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out = a.value().array().tanh().matrix();
  return t.push(std::move(out), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  const Matrix& y = t.value(self);
                  accumulate(t, ia,
                             (t.grad(self).array() * (1.0 - y.array().square()))
                                 .matrix());
                });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push(a.value().cwiseMax(0.0), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  const Matrix& x = t.value(ia);
                  accumulate(t, ia,
                             (x.array() > 0.0)
                                 .select(t.grad(self).array(), 0.0)
                                 .matrix());
                });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(std::move(out), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  const Matrix& y = t.value(self);
                  accumulate(t, ia,
                             (t.grad(self).array() * y.array() * (1.0 - y.array()))
                                 .matrix());
                });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push(a.value().array().square().matrix(), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  accumulate(t, ia,
                             (2.0 * t.grad(self).array() * t.value(ia).array())
                                 .matrix());
                });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= static_cast<std::size_t>(a.rows()))
      throw std::out_of_range("gather_rows: row index");
    out.row(static_cast<Eigen::Index>(r)) =
        a.value().row(static_cast<Eigen::Index>(rows[r]));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.push(std::move(out), t.needs_grad(ia),
                [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
                  if (!t.needs_grad(ia)) return;
                  Matrix& ga = t.grad(ia);
                  const Matrix& g = t.grad(self);
                  for (std::size_t r = 0; r < idx.size(); ++r)
                    ga.row(static_cast<Eigen::Index>(idx[r])) +=
                        g.row(static_cast<Eigen::Index>(r));
                });
}

Var concat_cols(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat_cols(std::span<const Var>(parts));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool needs = false;
  std::vector<std::size_t> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: rows");
    cols += p.cols();
    needs = needs || t.needs_grad(p.id());
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t.push(std::move(out), needs,
                [ids = std::move(ids), widths = std::move(widths)](
                    Tape& t, std::size_t self) {
                  Eigen::Index off = 0;
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    accumulate(t, ids[k], t.grad(self).middleCols(off, widths[k]));
                    off += widths[k];
                  }
                });
}

Var column(const Var& a, Eigen::Index j) {
  Tape& t = tape_of(a);
  if (j < 0 || j >= a.cols()) throw std::out_of_range("column: index");
  const auto ia = a.id();
  return t.push(a.value().col(j), t.needs_grad(ia),
                [ia, j](Tape& t, std::size_t self) {
                  if (t.needs_grad(ia)) t.grad(ia).col(j) += t.grad(self).col(0);
                });
}

Var transpose(const Var& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  return t.push(a.value().transpose(), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  accumulate(t, ia, t.grad(self).transpose());
                });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  if (t.needs_grad(ia)) t.grad(ia).array() += t.grad(self)(0, 0);
                });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty");
  return scale(sum(a), 1.0 / n);
}

Var gather_entries(const Var& a,
                   std::span<const std::pair<std::size_t, std::size_t>> idx) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  Matrix out(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t k = 0; k < idx.size(); ++k)
    out(static_cast<Eigen::Index>(k), 0) =
        a.value()(static_cast<Eigen::Index>(idx[k].first),
                  static_cast<Eigen::Index>(idx[k].second));
  std::vector<std::pair<std::size_t, std::size_t>> copy(idx.begin(), idx.end());
  return t.push(std::move(out), t.needs_grad(ia),
                [ia, copy = std::move(copy)](Tape& t, std::size_t self) {
                  if (!t.needs_grad(ia)) return;
                  Matrix& ga = t.grad(ia);
                  const Matrix& g = t.grad(self);
                  for (std::size_t k = 0; k < copy.size(); ++k)
                    ga(static_cast<Eigen::Index>(copy[k].first),
                       static_cast<Eigen::Index>(copy[k].second)) +=
                        g(static_cast<Eigen::Index>(k), 0);
                });
}

Var masked_row_logsumexp(const Var& a, const Matrix& mask) {
  Tape& t = tape_of(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols())
    throw std::invalid_argument("masked_row_logsumexp: mask shape");
  const auto ia = a.id();
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  Matrix weights = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx))
      throw std::invalid_argument("masked_row_logsumexp: empty row");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) {
        weights(i, j) = std::exp(x(i, j) - mx);
        z += weights(i, j);
      }
    weights.row(i) /= z;
    out(i, 0) = mx + std::log(z);
  }
  return t.push(std::move(out), t.needs_grad(ia),
                [ia, weights = std::move(weights)](Tape& t, std::size_t self) {
                  if (!t.needs_grad(ia)) return;
                  t.grad(ia) += (weights.array().colwise() *
                                 t.grad(self).col(0).array())
                                    .matrix();
                });
}

Var masked_row_softmax(const Var& a, const Matrix& mask) {
  Tape& t = tape_of(a);
  if (mask.rows() != a.rows() || mask.cols() != a.cols())
    throw std::invalid_argument("masked_row_softmax: mask shape");
  const auto ia = a.id();
  const Matrix& x = a.value();
  Matrix p = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j) != 0.0) {
        p(i, j) = std::exp(x(i, j) - mx);
        z += p(i, j);
      }
    p.row(i) /= z;
  }
  return t.push(std::move(p), t.needs_grad(ia),
                [ia](Tape& t, std::size_t self) {
                  if (!t.needs_grad(ia)) return;
                  const Matrix& y = t.value(self);
                  const Matrix& g = t.grad(self);
                  const Vector dot = g.cwiseProduct(y).rowwise().sum();
                  t.grad(ia) +=
                      (y.array() * (g.colwise() - dot).array()).matrix();
                });
}

Var logsumexp_pool(const Var& a,
                   std::span<const std::vector<std::size_t>> groups) {
  Tape& t = tape_of(a);
  const auto ia = a.id();
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(groups.size()), x.cols());
  // Per group, per member: softmax weights along the group for each column.
  std::vector<Matrix> weights;
  weights.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g];
    if (members.empty())
      throw std::invalid_argument("logsumexp_pool: empty group");
    Matrix rows(static_cast<Eigen::Index>(members.size()), x.cols());
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k] >= static_cast<std::size_t>(x.rows()))
        throw std::out_of_range("logsumexp_pool: row index");
      rows.row(static_cast<Eigen::Index>(k)) =
          x.row(static_cast<Eigen::Index>(members[k]));
    }
    const Eigen::RowVectorXd mx = rows.colwise().maxCoeff();
    Matrix e = (rows.rowwise() - mx).array().exp().matrix();
    const Eigen::RowVectorXd z = e.colwise().sum();
    out.row(static_cast<Eigen::Index>(g)) =
        mx.array() + z.array().log();
    e.array().rowwise() /= z.array();
    weights.push_back(std::move(e));
  }
  std::vector<std::vector<std::size_t>> copy(groups.begin(), groups.end());
  return t.push(std::move(out), t.needs_grad(ia),
                [ia, copy = std::move(copy), weights = std::move(weights)](
                    Tape& t, std::size_t self) {
                  if (!t.needs_grad(ia)) return;
                  Matrix& ga = t.grad(ia);
                  const Matrix& g = t.grad(self);
                  for (std::size_t gi = 0; gi < copy.size(); ++gi)
                    for (std::size_t k = 0; k < copy[gi].size(); ++k)
                      ga.row(static_cast<Eigen::Index>(copy[gi][k])) +=
                          weights[gi]
                              .row(static_cast<Eigen::Index>(k))
                              .cwiseProduct(g.row(static_cast<Eigen::Index>(gi)));
                });
}

Var bce_with_logits(const Var& logits, const Matrix& targets) {
  Tape& t = tape_of(logits);
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw std::invalid_argument("bce_with_logits: target shape");
  const auto ia = logits.id();
  const Matrix& x = logits.value();
  // max(x, 0) - x*y + log(1 + exp(-|x|))
  const double loss = (x.cwiseMax(0.0) - x.cwiseProduct(targets) +
                       (1.0 + (-x.cwiseAbs()).array().exp()).log().matrix())
                          .sum();
  Matrix out(1, 1);
  out(0, 0) = loss;
  return t.push(std::move(out), t.needs_grad(ia),
                [ia, targets](Tape& t, std::size_t self) {
                  if (!t.needs_grad(ia)) return;
                  const Matrix& x = t.value(ia);
                  const Matrix p = (1.0 / (1.0 + (-x.array()).exp())).matrix();
                  t.grad(ia) += (p - targets) * t.grad(self)(0, 0);
                });
}

}  // namespace docie::ad
