#include "sbnn/tape.hpp"

#include <string>

#include "sbnn/errors.hpp"

namespace sbnn::ad {

const Tape::Node& Tape::node(int id) const {
  if (id < 0 || id >= size()) {
    throw InvalidArgument("tape: invalid node handle " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_same_shape(const char* who, Var a, Var b) const {
  const Mat& x = value(a);
  const Mat& y = value(b);
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw InvalidArgument(std::string(who) + ": shape mismatch (" +
                          std::to_string(x.rows()) + "x" +
                          std::to_string(x.cols()) + " vs " +
                          std::to_string(y.rows()) + "x" +
                          std::to_string(y.cols()) + ")");
  }
}

void Tape::check_scalar(const char* who, Var s) const {
  const Mat& v = value(s);
  if (v.rows() != 1 || v.cols() != 1) {
    throw InvalidArgument(std::string(who) + ": expected a 1x1 node");
  }
}

Var Tape::leaf(Mat value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(Mat value) {
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::emit(Op op, int a0, int a1, double xaux, long r_aux, long c_aux) {
  Node n;
  n.op = op;
  n.arg = {a0, a1};
  n.xaux = xaux;
  n.r_aux = r_aux;
  n.c_aux = c_aux;

  const Mat& a = nodes_[static_cast<std::size_t>(a0)].value;
  switch (op) {
    case Op::kAdd:
      n.value = a + nodes_[a1].value;
      break;
    case Op::kSub:
      n.value = a - nodes_[a1].value;
      break;
    case Op::kNeg:
      n.value = -a;
      break;
    case Op::kMul:
      n.value = a.cwiseProduct(nodes_[a1].value);
      break;
    case Op::kSMul:
      n.value = a(0, 0) * nodes_[a1].value;
      break;
    case Op::kSAdd:
      n.value = nodes_[a1].value.array() + a(0, 0);
      break;
    case Op::kScale:
      n.value = a * xaux;
      break;
    case Op::kAddConst:
      n.value = a.array() + xaux;
      break;
    case Op::kPow:
      if (xaux == 2.0) {
        n.value = a.array().square();
      } else if (xaux == 1.0) {
        n.value = a;
      } else if (xaux == 0.5) {
        n.value = a.array().sqrt();
      } else if (xaux == -1.0) {
        n.value = a.array().inverse();
      } else {
        n.value = a.array().pow(xaux);
      }
      break;
    case Op::kTanh:
      n.value = mat_tanh(a);
      break;
    case Op::kSoftplus:
      n.value = mat_softplus(a);
      break;
    case Op::kSigmoid:
      n.value = mat_sigmoid(a);
      break;
    case Op::kMatMul:
      n.value.noalias() = a * nodes_[a1].value;
      break;
    case Op::kTranspose:
      n.value = a.transpose();
      break;
    case Op::kSum:
      n.value = Mat::Constant(1, 1, a.sum());
      break;
    case Op::kDotall:
      n.value = Mat::Constant(1, 1, a.cwiseProduct(nodes_[a1].value).sum());
      break;
    case Op::kColSum:
      n.value = a.colwise().sum();
      break;
    case Op::kRowSum:
      n.value = a.rowwise().sum();
      break;
    case Op::kBcast:
      n.value = Mat::Constant(r_aux, c_aux, a(0, 0));
      break;
    case Op::kBcastRows:
      n.value = a.replicate(r_aux, 1);
      break;
    case Op::kBcastCols:
      n.value = a.replicate(1, c_aux);
      break;
    case Op::kAddRowVec:
      n.value = a.rowwise() + nodes_[a1].value.row(0);
      break;
    case Op::kMulRowVec:
      n.value = a.array().rowwise() * nodes_[a1].value.row(0).array();
      break;
    case Op::kColMul:
      n.value = nodes_[a1].value.array().colwise() * a.col(0).array();
      break;
    case Op::kRowsNorm:
      n.value = a.rowwise().norm();
      break;
    case Op::kRowsMatVec:
      n.value = rows_matvec_value(a, nodes_[a1].value, r_aux, c_aux);
      break;
    case Op::kRowsMatVecT:
      n.value = rows_matvec_t_value(a, nodes_[a1].value, r_aux, c_aux);
      break;
    case Op::kRowsOuter:
      n.value = rows_outer_value(a, nodes_[a1].value, r_aux, c_aux);
      break;
    case Op::kLeaf:
    case Op::kConst:
      throw InvalidArgument("tape: emit called with a leaf op");
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape("add", a, b);
  return emit(Op::kAdd, a.id, b.id, 0, 0, 0);
}

Var Tape::sub(Var a, Var b) {
  check_same_shape("sub", a, b);
  return emit(Op::kSub, a.id, b.id, 0, 0, 0);
}

Var Tape::neg(Var a) { return emit(Op::kNeg, a.id, -1, 0, 0, 0); }

Var Tape::mul(Var a, Var b) {
  check_same_shape("mul", a, b);
  return emit(Op::kMul, a.id, b.id, 0, 0, 0);
}

Var Tape::smul(Var s, Var a) {
  check_scalar("smul", s);
  return emit(Op::kSMul, s.id, a.id, 0, 0, 0);
}

Var Tape::sadd(Var s, Var a) {
  check_scalar("sadd", s);
  return emit(Op::kSAdd, s.id, a.id, 0, 0, 0);
}

Var Tape::scale(Var a, double k) { return emit(Op::kScale, a.id, -1, k, 0, 0); }

Var Tape::add_const(Var a, double k) {
  return emit(Op::kAddConst, a.id, -1, k, 0, 0);
}

Var Tape::pow(Var a, double p) { return emit(Op::kPow, a.id, -1, p, 0, 0); }

Var Tape::tanh(Var a) { return emit(Op::kTanh, a.id, -1, 0, 0, 0); }

Var Tape::softplus(Var a) { return emit(Op::kSoftplus, a.id, -1, 0, 0, 0); }

Var Tape::sigmoid(Var a) { return emit(Op::kSigmoid, a.id, -1, 0, 0, 0); }

Var Tape::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) {
    throw InvalidArgument("matmul: inner dimensions differ");
  }
  return emit(Op::kMatMul, a.id, b.id, 0, 0, 0);
}

Var Tape::transpose(Var a) { return emit(Op::kTranspose, a.id, -1, 0, 0, 0); }

Var Tape::sum(Var a) { return emit(Op::kSum, a.id, -1, 0, 0, 0); }

Var Tape::dotall(Var a, Var b) {
  check_same_shape("dotall", a, b);
  return emit(Op::kDotall, a.id, b.id, 0, 0, 0);
}

Var Tape::col_sum(Var a) { return emit(Op::kColSum, a.id, -1, 0, 0, 0); }

Var Tape::row_sum(Var a) { return emit(Op::kRowSum, a.id, -1, 0, 0, 0); }

Var Tape::bcast(Var s, long rows, long cols) {
  check_scalar("bcast", s);
  return emit(Op::kBcast, s.id, -1, 0, rows, cols);
}

Var Tape::bcast_rows(Var row, long n) {
  if (value(row).rows() != 1) {
    throw InvalidArgument("bcast_rows: expected a row vector");
  }
  return emit(Op::kBcastRows, row.id, -1, 0, n, 0);
}

Var Tape::bcast_cols(Var col, long m) {
  if (value(col).cols() != 1) {
    throw InvalidArgument("bcast_cols: expected a column vector");
  }
  return emit(Op::kBcastCols, col.id, -1, 0, 0, m);
}

Var Tape::add_row_vec(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw InvalidArgument("add_row_vec: row shape mismatch");
  }
  return emit(Op::kAddRowVec, a.id, row.id, 0, 0, 0);
}

Var Tape::mul_row_vec(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols()) {
    throw InvalidArgument("mul_row_vec: row shape mismatch");
  }
  return emit(Op::kMulRowVec, a.id, row.id, 0, 0, 0);
}

Var Tape::col_mul(Var col, Var a) {
  if (value(col).cols() != 1 || value(col).rows() != value(a).rows()) {
    throw InvalidArgument("col_mul: column shape mismatch");
  }
  return emit(Op::kColMul, col.id, a.id, 0, 0, 0);
}

Var Tape::rows_norm(Var a) { return emit(Op::kRowsNorm, a.id, -1, 0, 0, 0); }

Var Tape::rows_matvec(Var t, Var a, long r, long c) {
  if (value(t).cols() != r * c || value(a).cols() != c ||
      value(t).rows() != value(a).rows()) {
    throw InvalidArgument("rows_matvec: shape mismatch");
  }
  return emit(Op::kRowsMatVec, t.id, a.id, 0, r, c);
}

Var Tape::rows_matvec_t(Var t, Var g, long r, long c) {
  if (value(t).cols() != r * c || value(g).cols() != r ||
      value(t).rows() != value(g).rows()) {
    throw InvalidArgument("rows_matvec_t: shape mismatch");
  }
  return emit(Op::kRowsMatVecT, t.id, g.id, 0, r, c);
}

Var Tape::rows_outer(Var u, Var v, long r, long c) {
  if (value(u).cols() != r || value(v).cols() != c ||
      value(u).rows() != value(v).rows()) {
    throw InvalidArgument("rows_outer: shape mismatch");
  }
  return emit(Op::kRowsOuter, u.id, v.id, 0, r, c);
}

std::vector<Var> Tape::gradient(Var objective, const std::vector<Var>& wrt) {
  check_scalar("gradient", objective);
  const int top = objective.id;

  // reaches[i]: node i depends (directly or transitively) on a
  // requested node.  Contributions into anything else are skipped, so
  // untouched inputs cost nothing and come back as exact zeros.
  std::vector<char> reaches(static_cast<std::size_t>(top) + 1, 0);
  for (Var w : wrt) {
    node(w.id);  // validate
    if (w.id <= top) reaches[w.id] = 1;
  }
  for (int i = 0; i <= top; ++i) {
    if (reaches[i]) continue;
    for (int a : nodes_[i].arg) {
      if (a >= 0 && reaches[a]) {
        reaches[i] = 1;
        break;
      }
    }
  }

  std::vector<int> adj(static_cast<std::size_t>(top) + 1, -1);
  auto acc = [&](int target, Var contrib) {
    if (target < 0 || !reaches[target]) return;
    adj[target] =
        adj[target] < 0 ? contrib.id : add(Var{adj[target]}, contrib).id;
  };

  if (reaches[top]) {
    adj[top] = constant(Mat::Ones(1, 1)).id;
  }

  for (int i = top; i >= 0; --i) {
    if (adj[i] < 0) continue;
    // Copied out of the node: acc() appends to nodes_, which can
    // reallocate and would invalidate a reference held across calls.
    const Op op = nodes_[i].op;
    const double xaux = nodes_[i].xaux;
    const long r_aux = nodes_[i].r_aux;
    const long c_aux = nodes_[i].c_aux;
    const int a0 = nodes_[i].arg[0];
    const int a1 = nodes_[i].arg[1];
    const Var self{i};
    const Var ci{adj[i]};
    switch (op) {
      case Op::kAdd:
        acc(a0, ci);
        acc(a1, ci);
        break;
      case Op::kSub:
        acc(a0, ci);
        acc(a1, neg(ci));
        break;
      case Op::kNeg:
        acc(a0, neg(ci));
        break;
      case Op::kMul:
        acc(a0, mul(ci, Var{a1}));
        acc(a1, mul(ci, Var{a0}));
        break;
      case Op::kSMul:
        acc(a0, dotall(ci, Var{a1}));
        acc(a1, smul(Var{a0}, ci));
        break;
      case Op::kSAdd:
        acc(a0, sum(ci));
        acc(a1, ci);
        break;
      case Op::kScale:
        acc(a0, scale(ci, xaux));
        break;
      case Op::kAddConst:
        acc(a0, ci);
        break;
      case Op::kPow:
        acc(a0, mul(ci, scale(pow(Var{a0}, xaux - 1.0), xaux)));
        break;
      case Op::kTanh:
        acc(a0, mul(ci, add_const(neg(mul(self, self)), 1.0)));
        break;
      case Op::kSoftplus:
        acc(a0, mul(ci, sigmoid(Var{a0})));
        break;
      case Op::kSigmoid:
        acc(a0, mul(ci, mul(self, add_const(neg(self), 1.0))));
        break;
      case Op::kMatMul:
        acc(a0, matmul(ci, transpose(Var{a1})));
        acc(a1, matmul(transpose(Var{a0}), ci));
        break;
      case Op::kTranspose:
        acc(a0, transpose(ci));
        break;
      case Op::kSum:
        acc(a0, bcast(ci, value(Var{a0}).rows(), value(Var{a0}).cols()));
        break;
      case Op::kDotall:
        acc(a0, smul(ci, Var{a1}));
        acc(a1, smul(ci, Var{a0}));
        break;
      case Op::kColSum:
        acc(a0, bcast_rows(ci, value(Var{a0}).rows()));
        break;
      case Op::kRowSum:
        acc(a0, bcast_cols(ci, value(Var{a0}).cols()));
        break;
      case Op::kBcast:
        acc(a0, sum(ci));
        break;
      case Op::kBcastRows:
        acc(a0, col_sum(ci));
        break;
      case Op::kBcastCols:
        acc(a0, row_sum(ci));
        break;
      case Op::kAddRowVec:
        acc(a0, ci);
        acc(a1, col_sum(ci));
        break;
      case Op::kMulRowVec:
        acc(a0, mul_row_vec(ci, Var{a1}));
        acc(a1, col_sum(mul(ci, Var{a0})));
        break;
      case Op::kColMul:
        acc(a0, row_sum(mul(ci, Var{a1})));
        acc(a1, col_mul(Var{a0}, ci));
        break;
      case Op::kRowsNorm:
        // d||row||/drow = row / ||row||; guarded by the caller against
        // exactly-zero rows, which have no defined direction.
        acc(a0, col_mul(mul(ci, pow(self, -1.0)), Var{a0}));
        break;
      case Op::kRowsMatVec:
        acc(a0, rows_outer(ci, Var{a1}, r_aux, c_aux));
        acc(a1, rows_matvec_t(Var{a0}, ci, r_aux, c_aux));
        break;
      case Op::kRowsMatVecT:
        acc(a0, rows_outer(Var{a1}, ci, r_aux, c_aux));
        acc(a1, rows_matvec(Var{a0}, ci, r_aux, c_aux));
        break;
      case Op::kRowsOuter:
        acc(a0, rows_matvec(ci, Var{a1}, r_aux, c_aux));
        acc(a1, rows_matvec_t(ci, Var{a0}, r_aux, c_aux));
        break;
      case Op::kLeaf:
      case Op::kConst:
        break;
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id <= top && adj[w.id] >= 0) {
      out.push_back(Var{adj[w.id]});
    } else {
      const Mat& v = value(w);
      out.push_back(constant(Mat::Zero(v.rows(), v.cols())));
    }
  }
  return out;
}

}  // namespace sbnn::ad
