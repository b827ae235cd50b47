#pragma once

#include <array>
#include <vector>

#include "sbnn/math.hpp"

namespace sbnn::ad {

/// Handle to a node on a Tape.  Cheap to copy; only meaningful
/// together with the tape that produced it.
struct Var {
  int id = -1;
};

/// Reverse-mode tape over matrix-valued nodes (scalars are 1x1).
///
/// Values are computed eagerly as nodes are appended.  gradient()
/// performs a reverse sweep that *emits new tape nodes* for every
/// adjoint, so the result of one gradient call can be fed into further
/// tape operations and differentiated again.  That single level of
/// nesting is what the gradient-penalty objective needs: the norm of
/// an input gradient is itself differentiated with respect to the
/// critic parameters.
///
/// Nodes whose value cannot influence the objective are skipped during
/// the sweep, and requested leaves that were never touched come back
/// as exact zero matrices.
class Tape {
 public:
  Tape() = default;

  /// Differentiable input.
  Var leaf(Mat value);
  /// Non-differentiable input; never accumulates an adjoint.
  Var constant(Mat value);

  const Mat& value(Var v) const { return node(v.id).value; }
  long size() const { return static_cast<long>(nodes_.size()); }

  /// Drops every node.  Handles from before the reset are invalid.
  void reset() { nodes_.clear(); }

  // Elementwise and scalar algebra.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var mul(Var a, Var b);             ///< elementwise product, equal shapes
  Var smul(Var s, Var a);            ///< 1x1 node s times every entry of a
  Var sadd(Var s, Var a);            ///< 1x1 node s added to every entry of a
  Var scale(Var a, double k);        ///< constant multiple
  Var add_const(Var a, double k);    ///< constant shift
  Var pow(Var a, double p);          ///< elementwise power
  Var tanh(Var a);
  Var softplus(Var a);
  Var sigmoid(Var a);

  // Linear algebra and reductions.
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var sum(Var a);                    ///< 1x1 sum of all entries
  Var dotall(Var a, Var b);          ///< 1x1 sum of the elementwise product
  Var col_sum(Var a);                ///< 1 x m row of column sums
  Var row_sum(Var a);                ///< n x 1 column of row sums
  Var bcast(Var s, long rows, long cols);  ///< fill from a 1x1 node
  Var bcast_rows(Var row, long n);   ///< replicate a 1 x m row n times
  Var bcast_cols(Var col, long m);   ///< replicate an n x 1 column m times
  Var add_row_vec(Var a, Var row);   ///< add a 1 x m row to every row of a
  Var mul_row_vec(Var a, Var row);   ///< scale the columns of a by a 1 x m row
  Var col_mul(Var col, Var a);       ///< scale the rows of a by an n x 1 column
  Var rows_norm(Var a);              ///< n x 1 Euclidean norms of the rows

  // Batched per-row matrix products.  Row i of `t` is read as an
  // r x c matrix in column-major vec order.
  Var rows_matvec(Var t, Var a, long r, long c);    ///< out[i,:] = M_i a_i
  Var rows_matvec_t(Var t, Var g, long r, long c);  ///< out[i,:] = M_i' g_i
  Var rows_outer(Var u, Var v, long r, long c);     ///< out[i,:] = vec(u_i v_i')

  /// Adjoints of `objective` (a 1x1 node) with respect to each entry
  /// of `wrt`.  The sweep appends adjoint nodes to this tape; the
  /// returned handles can be used in further taped computation.
  std::vector<Var> gradient(Var objective, const std::vector<Var>& wrt);

 private:
  enum class Op : unsigned char {
    kLeaf, kConst,
    kAdd, kSub, kNeg, kMul, kSMul, kSAdd, kScale, kAddConst, kPow,
    kTanh, kSoftplus, kSigmoid,
    kMatMul, kTranspose, kSum, kDotall, kColSum, kRowSum,
    kBcast, kBcastRows, kBcastCols,
    kAddRowVec, kMulRowVec, kColMul, kRowsNorm,
    kRowsMatVec, kRowsMatVecT, kRowsOuter,
  };

  struct Node {
    Op op;
    std::array<int, 2> arg{{-1, -1}};
    double xaux = 0.0;  // scale factor or exponent
    long r_aux = 0;     // per-row matrix rows, or broadcast extent
    long c_aux = 0;     // per-row matrix cols
    Mat value;
  };

  const Node& node(int id) const;
  Var push(Node n);
  Var emit(Op op, int a0, int a1, double xaux, long r_aux, long c_aux);
  void check_same_shape(const char* who, Var a, Var b) const;
  void check_scalar(const char* who, Var s) const;

  std::vector<Node> nodes_;
};

}  // namespace sbnn::ad
