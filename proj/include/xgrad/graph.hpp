#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xgrad/tensor.hpp"

namespace xgrad {

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  AddConst,
  MatMul,
  MatMulTA,
  MatMulBT,
  Transpose,
  Reshape,
  Sum,
  Broadcast,
  Relu,
  PosMask,
  Abs,
  SignMask,
  Log,
  Exp,
  Recip,
  Gather,
  Scatter,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add-const";
    case Op::MatMul: return "matmul";
    case Op::MatMulTA: return "matmul-ta";
    case Op::MatMulBT: return "matmul-bt";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::Sum: return "sum";
    case Op::Broadcast: return "broadcast";
    case Op::Relu: return "relu";
    case Op::PosMask: return "pos-mask";
    case Op::Abs: return "abs";
    case Op::SignMask: return "sign-mask";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Recip: return "recip";
    case Op::Gather: return "gather";
    case Op::Scatter: return "scatter";
  }
  return "?";
}

/// Handle to a node in a Graph.
struct Value {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

struct GradientRequest {
  Value output;
  std::vector<Value> wrt;
  int order = 1;  // 1 or 2: whether the returned gradients must stay differentiable
};

/// Reverse-mode tape over dense tensors. Construction is eager: every op
/// computes its value immediately and records itself; node order is therefore
/// topological. gradient() emits the backward pass as ordinary nodes built
/// from the same primitive set, so a gradient can be differentiated again
/// (the route to second-order support).
///
/// A Graph is single-threaded; independent graphs may run on separate threads.
class Graph {
 public:
  struct Node {
    Op op = Op::Leaf;
    int32_t a = -1, b = -1;
    double c = 0.0;                 // scale factor / additive constant
    std::vector<int64_t> indices;   // gather/scatter payload
    Tensor value;
  };

  Value leaf(Tensor v) {
    if (!v.all_finite()) throw ValueError("leaf tensor contains non-finite entries");
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    return push(std::move(n));
  }

  Value constant(Tensor v) { return leaf(std::move(v)); }
  Value constant(double v) { return leaf(Tensor::scalar(v)); }

  Value add(Value x, Value y) { return binary_same_shape(Op::Add, x, y); }
  Value sub(Value x, Value y) { return binary_same_shape(Op::Sub, x, y); }
  Value mul(Value x, Value y) { return binary_same_shape(Op::Mul, x, y); }

  Value scale(Value x, double c) {
    Node n = unary(Op::Scale, x);
    n.c = c;
    for (double& v : n.value.data) v *= c;
    return push(std::move(n));
  }

  Value add_const(Value x, double c) {
    Node n = unary(Op::AddConst, x);
    n.c = c;
    for (double& v : n.value.data) v += c;
    return push(std::move(n));
  }

  Value neg(Value x) { return scale(x, -1.0); }

  /// [m,k] x [k,n] -> [m,n], or [m,k] x [k] -> [m].
  Value matmul(Value x, Value y) {
    const Tensor& A = value(x);
    const Tensor& B = value(y);
    if (A.ndim() != 2 || B.ndim() < 1 || B.ndim() > 2 || A.shape[1] != B.shape[0])
      throw ShapeError(node_msg("matmul", {x, y}) + ": incompatible shapes " +
                       shape_str(A.shape) + " x " + shape_str(B.shape));
    Node n;
    n.op = Op::MatMul;
    n.a = x.id;
    n.b = y.id;
    n.value = B.ndim() == 2 ? Tensor::zeros({A.shape[0], B.shape[1]}) : Tensor::zeros({A.shape[0]});
    matmul_into(n.value, A, B);
    return push(std::move(n));
  }

  /// A^T * B without materializing the transpose: [k,m] x [k,n] -> [m,n],
  /// or [k,m] x [k] -> [m].
  Value matmul_ta(Value x, Value y) {
    const Tensor& A = value(x);
    const Tensor& B = value(y);
    if (A.ndim() != 2 || B.ndim() < 1 || B.ndim() > 2 || A.shape[0] != B.shape[0])
      throw ShapeError(node_msg("matmul-ta", {x, y}) + ": incompatible shapes " +
                       shape_str(A.shape) + " x " + shape_str(B.shape));
    Node n;
    n.op = Op::MatMulTA;
    n.a = x.id;
    n.b = y.id;
    n.value = B.ndim() == 2 ? Tensor::zeros({A.shape[1], B.shape[1]}) : Tensor::zeros({A.shape[1]});
    matmul_ta_into(n.value, A, B);
    return push(std::move(n));
  }

  /// A * B^T without materializing the transpose: [m,k] x [n,k] -> [m,n].
  Value matmul_bt(Value x, Value y) {
    const Tensor& A = value(x);
    const Tensor& B = value(y);
    if (A.ndim() != 2 || B.ndim() != 2 || A.shape[1] != B.shape[1])
      throw ShapeError(node_msg("matmul-bt", {x, y}) + ": incompatible shapes " +
                       shape_str(A.shape) + " x " + shape_str(B.shape));
    Node n;
    n.op = Op::MatMulBT;
    n.a = x.id;
    n.b = y.id;
    n.value = Tensor::zeros({A.shape[0], B.shape[0]});
    matmul_bt_into(n.value, A, B);
    return push(std::move(n));
  }

  Value transpose(Value x) {
    const Tensor& A = value(x);
    if (A.ndim() != 2) throw ShapeError(node_msg("transpose", {x}) + ": needs 2-d input");
    Node n = unary(Op::Transpose, x);
    n.value = Tensor::zeros({A.shape[1], A.shape[0]});
    transpose_into(n.value, A);
    return push(std::move(n));
  }

  Value reshape(Value x, Shape shp) {
    const Tensor& A = value(x);
    if (shape_numel(shp) != A.size())
      throw ShapeError(node_msg("reshape", {x}) + ": cannot reshape " + shape_str(A.shape) +
                       " to " + shape_str(shp));
    Node n = unary(Op::Reshape, x);
    n.value.shape = std::move(shp);
    return push(std::move(n));
  }

  /// Sum of all entries -> scalar [1].
  Value sum(Value x) {
    Node n;
    n.op = Op::Sum;
    n.a = x.id;
    n.value = Tensor::zeros({1});
    sum_into(n.value, value(x));
    return push(std::move(n));
  }

  Value mean(Value x) {
    int64_t n = value(x).size();
    return scale(sum(x), 1.0 / static_cast<double>(n));
  }

  Value dot(Value x, Value y) { return sum(mul(x, y)); }

  /// Scalar [1] -> given shape.
  Value broadcast(Value x, Shape shp) {
    const Tensor& A = value(x);
    if (A.size() != 1) throw ShapeError(node_msg("broadcast", {x}) + ": input must be scalar");
    Node n = unary(Op::Broadcast, x);
    n.value = Tensor::full(std::move(shp), A.data[0]);
    return push(std::move(n));
  }

  Value relu(Value x) {
    Node n = unary(Op::Relu, x);
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
  }

  /// 1 where input > 0, else 0. Derivative defined as zero everywhere.
  Value pos_mask(Value x) {
    Node n = unary(Op::PosMask, x);
    for (double& v : n.value.data) v = v > 0.0 ? 1.0 : 0.0;
    return push(std::move(n));
  }

  Value abs(Value x) {
    Node n = unary(Op::Abs, x);
    for (double& v : n.value.data) v = std::abs(v);
    return push(std::move(n));
  }

  /// sign with sign(0) = 0; derivative defined as zero everywhere.
  Value sign_mask(Value x) {
    Node n = unary(Op::SignMask, x);
    for (double& v : n.value.data) v = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return push(std::move(n));
  }

  Value log(Value x) {
    Node n = unary(Op::Log, x);
    for (double& v : n.value.data) v = std::log(v);
    return push(std::move(n));
  }

  Value exp(Value x) {
    Node n = unary(Op::Exp, x);
    for (double& v : n.value.data) v = std::exp(v);
    return push(std::move(n));
  }

  Value recip(Value x) {
    Node n = unary(Op::Recip, x);
    for (double& v : n.value.data) v = 1.0 / v;
    return push(std::move(n));
  }

  /// out[i] = in_flat[indices[i]]; linear selection (max-pool, im2col, row
  /// extraction are all built on this).
  Value gather(Value x, std::vector<int64_t> indices, Shape out_shape) {
    const Tensor& A = value(x);
    if (static_cast<int64_t>(indices.size()) != shape_numel(out_shape))
      throw ShapeError(node_msg("gather", {x}) + ": index count does not match output shape");
    for (int64_t i : indices)
      if (i < 0 || i >= A.size())
        throw ShapeError(node_msg("gather", {x}) + ": index " + std::to_string(i) +
                         " out of range for " + shape_str(A.shape));
    Node n;
    n.op = Op::Gather;
    n.a = x.id;
    n.indices = std::move(indices);
    n.value = Tensor::zeros(std::move(out_shape));
    gather_into(n.value, A, n.indices);
    return push(std::move(n));
  }

  /// out_flat[indices[i]] += in[i]; adjoint of gather.
  Value scatter(Value x, std::vector<int64_t> indices, Shape out_shape) {
    const Tensor& A = value(x);
    if (static_cast<int64_t>(indices.size()) != A.size())
      throw ShapeError(node_msg("scatter", {x}) + ": index count does not match input size");
    int64_t out_n = shape_numel(out_shape);
    for (int64_t i : indices)
      if (i < 0 || i >= out_n)
        throw ShapeError(node_msg("scatter", {x}) + ": index " + std::to_string(i) +
                         " out of range for " + shape_str(out_shape));
    Node n;
    n.op = Op::Scatter;
    n.a = x.id;
    n.indices = std::move(indices);
    n.value = Tensor::zeros(std::move(out_shape));
    scatter_into(n.value, A, n.indices);
    return push(std::move(n));
  }

  const Tensor& value(Value v) const { return nodes_[check(v)].value; }

  void set_leaf(Value v, const Tensor& t) {
    Node& n = nodes_[check(v)];
    if (n.op != Op::Leaf) throw ValueError("set_leaf: node " + std::to_string(v.id) + " is not a leaf");
    if (!n.value.same_shape(t))
      throw ShapeError("set_leaf: shape " + shape_str(t.shape) + " != " + shape_str(n.value.shape));
    n.value.data = t.data;
  }

  double& leaf_element(Value v, int64_t i) {
    Node& n = nodes_[check(v)];
    if (n.op != Op::Leaf) throw ValueError("leaf_element: node is not a leaf");
    return n.value.data[static_cast<size_t>(i)];
  }

  size_t size() const { return nodes_.size(); }

  /// Re-evaluates every non-leaf node in construction (= topological) order.
  /// Data-dependent selections (gather/scatter indices) stay frozen, so the
  /// graph re-evaluates the same piecewise region it was recorded in.
  void recompute() {
    for (Node& n : nodes_) recompute_node(n);
  }

  /// Reverse-mode gradient of a scalar output w.r.t. the given leaves.
  /// Returns one handle per requested leaf, aligned with `wrt`; leaves with no
  /// path to the output get an exactly-zero constant. The returned nodes are
  /// themselves differentiable graph nodes.
  std::vector<Value> gradient(Value output, std::span<const Value> wrt, int order = 1) {
    if (order < 1 || order > 2)
      throw ValueError("gradient: order " + std::to_string(order) + " unsupported (max 2)");
    const Node& out = nodes_[check(output)];
    if (out.value.size() != 1)
      throw ShapeError("gradient: output node " + std::to_string(output.id) +
                       " is not scalar (shape " + shape_str(out.value.shape) + ")");
    for (Value w : wrt)
      if (nodes_[check(w)].op != Op::Leaf)
        throw ValueError("gradient: wrt node " + std::to_string(w.id) + " is not a leaf");

    const int32_t n0 = static_cast<int32_t>(nodes_.size());
    // active[i]: some requested leaf lies in i's subgraph, so a VJP through i
    // is needed.
    std::vector<char> active(static_cast<size_t>(n0), 0);
    for (Value w : wrt) active[static_cast<size_t>(w.id)] = 1;
    for (int32_t i = 0; i < n0; ++i) {
      const Node& n = nodes_[static_cast<size_t>(i)];
      if (n.op == Op::PosMask || n.op == Op::SignMask) continue;  // zero derivative
      if (n.a >= 0 && active[static_cast<size_t>(n.a)]) active[static_cast<size_t>(i)] = 1;
      if (n.b >= 0 && active[static_cast<size_t>(n.b)]) active[static_cast<size_t>(i)] = 1;
    }

    std::vector<int32_t> adjoint(static_cast<size_t>(n0), -1);
    auto accumulate = [&](int32_t target, Value contribution) {
      int32_t& slot = adjoint[static_cast<size_t>(target)];
      slot = slot < 0 ? contribution.id : add(Value{slot}, contribution).id;
    };

    if (active[static_cast<size_t>(output.id)])
      adjoint[static_cast<size_t>(output.id)] = constant(Tensor::full(out.value.shape, 1.0)).id;

    for (int32_t i = output.id; i >= 0; --i) {
      if (adjoint[static_cast<size_t>(i)] < 0 || !active[static_cast<size_t>(i)]) continue;
      const Op op = nodes_[static_cast<size_t>(i)].op;
      const int32_t ia = nodes_[static_cast<size_t>(i)].a;
      const int32_t ib = nodes_[static_cast<size_t>(i)].b;
      const Value g{adjoint[static_cast<size_t>(i)]};
      const Value va{ia}, vb{ib};
      auto wants = [&](int32_t j) { return j >= 0 && active[static_cast<size_t>(j)]; };
      switch (op) {
        case Op::Leaf:
          break;
        case Op::Add:
          if (wants(ia)) accumulate(ia, g);
          if (wants(ib)) accumulate(ib, g);
          break;
        case Op::Sub:
          if (wants(ia)) accumulate(ia, g);
          if (wants(ib)) accumulate(ib, neg(g));
          break;
        case Op::Mul:
          if (wants(ia)) accumulate(ia, mul(g, vb));
          if (wants(ib)) accumulate(ib, mul(g, va));
          break;
        case Op::Scale:
          if (wants(ia)) accumulate(ia, scale(g, nodes_[static_cast<size_t>(i)].c));
          break;
        case Op::AddConst:
          if (wants(ia)) accumulate(ia, g);
          break;
        case Op::MatMul: {
          const Tensor& B = nodes_[static_cast<size_t>(ib)].value;
          if (B.ndim() == 2) {
            if (wants(ia)) accumulate(ia, matmul_bt(g, vb));
            if (wants(ib)) accumulate(ib, matmul_ta(va, g));
          } else {
            const int64_t m = nodes_[static_cast<size_t>(ia)].value.shape[0];
            const int64_t k = B.shape[0];
            if (wants(ia)) accumulate(ia, matmul(reshape(g, {m, 1}), reshape(vb, {1, k})));
            if (wants(ib)) accumulate(ib, matmul_ta(va, g));
          }
          break;
        }
        case Op::MatMulTA: {
          const Tensor& B = nodes_[static_cast<size_t>(ib)].value;
          if (B.ndim() == 2) {
            if (wants(ia)) accumulate(ia, matmul_bt(vb, g));
            if (wants(ib)) accumulate(ib, matmul(va, g));
          } else {
            const int64_t k = nodes_[static_cast<size_t>(ia)].value.shape[0];
            const int64_t m = nodes_[static_cast<size_t>(ia)].value.shape[1];
            if (wants(ia)) accumulate(ia, matmul(reshape(vb, {k, 1}), reshape(g, {1, m})));
            if (wants(ib)) accumulate(ib, matmul(va, g));
          }
          break;
        }
        case Op::MatMulBT:
          if (wants(ia)) accumulate(ia, matmul(g, vb));
          if (wants(ib)) accumulate(ib, matmul_ta(g, va));
          break;
        case Op::Transpose:
          if (wants(ia)) accumulate(ia, transpose(g));
          break;
        case Op::Reshape:
          if (wants(ia)) accumulate(ia, reshape(g, nodes_[static_cast<size_t>(ia)].value.shape));
          break;
        case Op::Sum:
          if (wants(ia)) accumulate(ia, broadcast(g, nodes_[static_cast<size_t>(ia)].value.shape));
          break;
        case Op::Broadcast:
          if (wants(ia)) accumulate(ia, sum(g));
          break;
        case Op::Relu:
          if (wants(ia)) accumulate(ia, mul(g, pos_mask(va)));
          break;
        case Op::PosMask:
        case Op::SignMask:
          break;
        case Op::Abs:
          if (wants(ia)) accumulate(ia, mul(g, sign_mask(va)));
          break;
        case Op::Log:
          if (wants(ia)) accumulate(ia, mul(g, recip(va)));
          break;
        case Op::Exp:
          if (wants(ia)) accumulate(ia, mul(g, Value{i}));
          break;
        case Op::Recip:
          if (wants(ia)) accumulate(ia, neg(mul(g, mul(Value{i}, Value{i}))));
          break;
        case Op::Gather:
          if (wants(ia))
            accumulate(ia, scatter(g, nodes_[static_cast<size_t>(i)].indices,
                                   nodes_[static_cast<size_t>(ia)].value.shape));
          break;
        case Op::Scatter:
          if (wants(ia))
            accumulate(ia, gather(g, nodes_[static_cast<size_t>(i)].indices,
                                  nodes_[static_cast<size_t>(ia)].value.shape));
          break;
      }
    }

    std::vector<Value> result;
    result.reserve(wrt.size());
    for (Value w : wrt) {
      int32_t adj = adjoint[static_cast<size_t>(w.id)];
      result.push_back(adj >= 0 ? Value{adj}
                                : constant(Tensor::zeros(nodes_[static_cast<size_t>(w.id)].value.shape)));
    }
    return result;
  }

  std::vector<Value> gradient(const GradientRequest& req) {
    return gradient(req.output, req.wrt, req.order);
  }

  /// Max absolute deviation between gradient() and central finite differences
  /// of the recorded graph, perturbing each element of `leaf` by +-step.
  double gradient_check(Value output, Value leaf, double step) {
    if (step <= 0.0) throw ValueError("gradient_check: step must be positive");
    Value g = gradient(output, std::span<const Value>(&leaf, 1))[0];
    recompute();  // restore values disturbed by nothing yet; also fills new grad nodes
    Tensor analytic = value(g);
    const int64_t n = value(leaf).size();
    double worst = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      double& cell = leaf_element(leaf, i);
      const double saved = cell;
      cell = saved + step;
      recompute();
      const double fp = value(output).scalar_value();
      cell = saved - step;
      recompute();
      const double fm = value(output).scalar_value();
      cell = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      worst = std::max(worst, std::abs(numeric - analytic[i]));
    }
    recompute();
    return worst;
  }

 private:
  std::vector<Node> nodes_;

  int32_t check(Value v) const {
    if (v.id < 0 || v.id >= static_cast<int32_t>(nodes_.size()))
      throw ValueError("invalid node handle " + std::to_string(v.id));
    return v.id;
  }

  std::string node_msg(const char* op, std::initializer_list<Value> ins) const {
    std::string s = op;
    s += "(";
    bool first = true;
    for (Value v : ins) {
      if (!first) s += ", ";
      s += "node " + std::to_string(v.id);
      first = false;
    }
    s += ")";
    return s;
  }

  Value push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{static_cast<int32_t>(nodes_.size()) - 1};
  }

  Node unary(Op op, Value x) {
    Node n;
    n.op = op;
    n.a = check(x);
    n.value = nodes_[x.id].value;  // copy; op body rewrites data in place
    return n;
  }

  Value binary_same_shape(Op op, Value x, Value y) {
    const Tensor& A = value(x);
    const Tensor& B = value(y);
    if (!A.same_shape(B))
      throw ShapeError(node_msg(op_name(op), {x, y}) + ": shape mismatch " + shape_str(A.shape) +
                       " vs " + shape_str(B.shape));
    Node n;
    n.op = op;
    n.a = x.id;
    n.b = y.id;
    n.value = Tensor::zeros(A.shape);
    elementwise_into(n.value, op, A, B);
    return push(std::move(n));
  }

  static void elementwise_into(Tensor& out, Op op, const Tensor& A, const Tensor& B) {
    const size_t n = A.data.size();
    const double* pa = A.data.data();
    const double* pb = B.data.data();
    double* po = out.data.data();
    switch (op) {
      case Op::Add:
        for (size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        break;
      case Op::Sub:
        for (size_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
        break;
      case Op::Mul:
        for (size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
        break;
      default:
        throw ValueError("elementwise_into: bad op");
    }
  }

  // C[i,s] += A[i,j] * B[j,s]; j ascending per output cell, so a column of a
  // batched product accumulates in the same order as the vector product.
  static void matmul_into(Tensor& out, const Tensor& A, const Tensor& B) {
    const int64_t m = A.shape[0], k = A.shape[1];
    const int64_t s = B.ndim() == 2 ? B.shape[1] : 1;
    const double* pa = A.data.data();
    const double* pb = B.data.data();
    double* po = out.data.data();
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (int64_t i = 0; i < m; ++i) {
      double* orow = po + i * s;
      const double* arow = pa + i * k;
      for (int64_t j = 0; j < k; ++j) {
        const double aij = arow[j];
        if (aij == 0.0) continue;
        const double* brow = pb + j * s;
        for (int64_t t = 0; t < s; ++t) orow[t] += aij * brow[t];
      }
    }
  }

  // C[i,j] += A[k,i] * B[k,j]; k-major sweep keeps both inputs streaming.
  static void matmul_ta_into(Tensor& out, const Tensor& A, const Tensor& B) {
    const int64_t k = A.shape[0], m = A.shape[1];
    const int64_t s = B.ndim() == 2 ? B.shape[1] : 1;
    const double* pa = A.data.data();
    const double* pb = B.data.data();
    double* po = out.data.data();
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (int64_t kk = 0; kk < k; ++kk) {
      const double* arow = pa + kk * m;
      const double* brow = pb + kk * s;
      for (int64_t i = 0; i < m; ++i) {
        const double aki = arow[i];
        if (aki == 0.0) continue;
        double* orow = po + i * s;
        for (int64_t t = 0; t < s; ++t) orow[t] += aki * brow[t];
      }
    }
  }

  // C[i,j] = dot(A row i, B row j); both rows contiguous.
  static void matmul_bt_into(Tensor& out, const Tensor& A, const Tensor& B) {
    const int64_t m = A.shape[0], k = A.shape[1], n = B.shape[0];
    const double* pa = A.data.data();
    const double* pb = B.data.data();
    double* po = out.data.data();
    for (int64_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      for (int64_t j = 0; j < n; ++j) {
        const double* brow = pb + j * k;
        double acc = 0.0;
        for (int64_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
        po[i * n + j] = acc;
      }
    }
  }

  static void transpose_into(Tensor& out, const Tensor& A) {
    const int64_t r = A.shape[0], c = A.shape[1];
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(j * r + i)] = A.data[static_cast<size_t>(i * c + j)];
  }

  static void sum_into(Tensor& out, const Tensor& A) {
    double acc = 0.0;
    for (double v : A.data) acc += v;
    out.data[0] = acc;
  }

  static void gather_into(Tensor& out, const Tensor& A, const std::vector<int64_t>& idx) {
    for (size_t i = 0; i < idx.size(); ++i) out.data[i] = A.data[static_cast<size_t>(idx[i])];
  }

  static void scatter_into(Tensor& out, const Tensor& A, const std::vector<int64_t>& idx) {
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (size_t i = 0; i < idx.size(); ++i) out.data[static_cast<size_t>(idx[i])] += A.data[i];
  }

  void recompute_node(Node& n) {
    switch (n.op) {
      case Op::Leaf:
        return;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
        elementwise_into(n.value, n.op, nodes_[static_cast<size_t>(n.a)].value,
                         nodes_[static_cast<size_t>(n.b)].value);
        return;
      case Op::Scale: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] * n.c;
        return;
      }
      case Op::AddConst: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] + n.c;
        return;
      }
      case Op::MatMul:
        matmul_into(n.value, nodes_[static_cast<size_t>(n.a)].value, nodes_[static_cast<size_t>(n.b)].value);
        return;
      case Op::MatMulTA:
        matmul_ta_into(n.value, nodes_[static_cast<size_t>(n.a)].value, nodes_[static_cast<size_t>(n.b)].value);
        return;
      case Op::MatMulBT:
        matmul_bt_into(n.value, nodes_[static_cast<size_t>(n.a)].value, nodes_[static_cast<size_t>(n.b)].value);
        return;
      case Op::Transpose:
        transpose_into(n.value, nodes_[static_cast<size_t>(n.a)].value);
        return;
      case Op::Reshape:
        n.value.data = nodes_[static_cast<size_t>(n.a)].value.data;
        return;
      case Op::Sum:
        sum_into(n.value, nodes_[static_cast<size_t>(n.a)].value);
        return;
      case Op::Broadcast:
        std::fill(n.value.data.begin(), n.value.data.end(), nodes_[static_cast<size_t>(n.a)].value.data[0]);
        return;
      case Op::Relu: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] > 0.0 ? A.data[i] : 0.0;
        return;
      }
      case Op::PosMask: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = A.data[i] > 0.0 ? 1.0 : 0.0;
        return;
      }
      case Op::Abs: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = std::abs(A.data[i]);
        return;
      }
      case Op::SignMask: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i)
          n.value.data[i] = A.data[i] > 0.0 ? 1.0 : (A.data[i] < 0.0 ? -1.0 : 0.0);
        return;
      }
      case Op::Log: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = std::log(A.data[i]);
        return;
      }
      case Op::Exp: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = std::exp(A.data[i]);
        return;
      }
      case Op::Recip: {
        const Tensor& A = nodes_[static_cast<size_t>(n.a)].value;
        for (size_t i = 0; i < A.data.size(); ++i) n.value.data[i] = 1.0 / A.data[i];
        return;
      }
      case Op::Gather:
        gather_into(n.value, nodes_[static_cast<size_t>(n.a)].value, n.indices);
        return;
      case Op::Scatter:
        scatter_into(n.value, nodes_[static_cast<size_t>(n.a)].value, n.indices);
        return;
    }
  }
};

/// Value of the root after eager construction (forward pass result).
inline const Tensor& forward(const Graph& g, Value root) { return g.value(root); }

}  // namespace xgrad
