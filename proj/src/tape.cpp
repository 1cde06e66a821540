#include "regflow/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace regflow::ad {

namespace {

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " +
                              a.shape_str() + " and " + b.shape_str());
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::tanh: return "tanh";
    case Op::sum: return "sum";
    case Op::concat: return "concat";
    case Op::scale: return "scale";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::softmax: return "softmax";
    case Op::square: return "square";
    case Op::segment: return "segment";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->value(*this); }

int Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::at(Var v) { return nodes_[static_cast<std::size_t>(v.id())]; }
const Tape::Node& Tape::at(Var v) const { return nodes_[static_cast<std::size_t>(v.id())]; }

void Tape::check_same_tape(Var v) const {
  if (v.tape() != this) throw std::invalid_argument("Var belongs to a different tape");
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return Var(this, push(std::move(n)));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = false;
  return Var(this, push(std::move(n)));
}

Var Tape::forward_op(Op op, std::span<const Var> in, double payload) {
  switch (op) {
    case Op::matmul: return matmul(in[0], in[1]);
    case Op::add: return add(in[0], in[1]);
    case Op::mul: return mul(in[0], in[1]);
    case Op::tanh: return tanh(in[0]);
    case Op::sum: return sum(in[0]);
    case Op::concat: return concat(in[0], in[1]);
    case Op::scale: return scale(in[0], payload);
    case Op::neg: return neg(in[0]);
    case Op::exp: return exp(in[0]);
    case Op::log: return log(in[0]);
    case Op::softmax: return softmax(in[0]);
    case Op::square: return square(in[0]);
    default:
      throw std::invalid_argument(std::string("forward_op: unsupported op ") + op_name(op));
  }
}

Var Tape::matmul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& A = at(a).value;
  const Tensor& B = at(b).value;
  if (A.cols() != B.rows()) shape_error(Op::matmul, A, B);
  const int m = A.rows(), k = A.cols(), n = B.cols();
  Node node;
  node.value = Tensor(m, n);
  const double* pa = A.data();
  const double* pb = B.data();
  double* pc = node.value.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    double* crow = pc + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = pb + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  node.op = Op::matmul;
  node.a = a.id();
  node.b = b.id();
  node.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::add(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& A = at(a).value;
  const Tensor& B = at(b).value;
  Node node;
  if (A.same_shape(B)) {
    node.value = A;
    double* out = node.value.data();
    const double* pb = B.data();
    for (std::size_t i = 0; i < B.size(); ++i) out[i] += pb[i];
  } else if (B.cols() == 1 && B.rows() == A.rows()) {
    // bias broadcast across columns
    node.value = A;
    const int n = A.cols();
    for (int r = 0; r < A.rows(); ++r) {
      const double bv = B(r, 0);
      double* row = node.value.data() + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) row[j] += bv;
    }
  } else {
    shape_error(Op::add, A, B);
  }
  node.op = Op::add;
  node.a = a.id();
  node.b = b.id();
  node.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::mul(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& A = at(a).value;
  const Tensor& B = at(b).value;
  if (!A.same_shape(B)) shape_error(Op::mul, A, B);
  Node node;
  node.value = A;
  double* out = node.value.data();
  const double* pb = B.data();
  for (std::size_t i = 0; i < B.size(); ++i) out[i] *= pb[i];
  node.op = Op::mul;
  node.a = a.id();
  node.b = b.id();
  node.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return Var(this, push(std::move(node)));
}

namespace {
template <class F>
Var unary(Tape& tape, Var a, Op op, F&& fn,
          std::vector<Tape::Node>* /*unused*/ = nullptr);
}

Var Tape::tanh(Var a) {
  check_same_tape(a);
  Node node;
  node.value = at(a).value;
  for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] = std::tanh(node.value[i]);
  node.op = Op::tanh;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::sum(Var a) {
  check_same_tape(a);
  double s = 0.0;
  for (double v : at(a).value.values()) s += v;
  Node node;
  node.value = Tensor::scalar(s);
  node.op = Op::sum;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::concat(Var a, Var b) {
  check_same_tape(a);
  check_same_tape(b);
  const Tensor& A = at(a).value;
  const Tensor& B = at(b).value;
  if (A.cols() != B.cols()) shape_error(Op::concat, A, B);
  Node node;
  node.value = Tensor(A.rows() + B.rows(), A.cols());
  std::copy(A.data(), A.data() + A.size(), node.value.data());
  std::copy(B.data(), B.data() + B.size(), node.value.data() + A.size());
  node.op = Op::concat;
  node.a = a.id();
  node.b = b.id();
  node.needs_grad = at(a).needs_grad || at(b).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::scale(Var a, double factor) {
  check_same_tape(a);
  Node node;
  node.value = at(a).value;
  for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] *= factor;
  node.op = Op::scale;
  node.a = a.id();
  node.payload = factor;
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::neg(Var a) {
  check_same_tape(a);
  Node node;
  node.value = at(a).value;
  for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] = -node.value[i];
  node.op = Op::neg;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::exp(Var a) {
  check_same_tape(a);
  Node node;
  node.value = at(a).value;
  for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] = std::exp(node.value[i]);
  node.op = Op::exp;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::log(Var a) {
  check_same_tape(a);
  Node node;
  node.value = at(a).value;
  for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] = std::log(node.value[i]);
  node.op = Op::log;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::softmax(Var a) {
  check_same_tape(a);
  const Tensor& A = at(a).value;
  Node node;
  node.value = Tensor(A.rows(), A.cols());
  for (int j = 0; j < A.cols(); ++j) {
    double mx = A(0, j);
    for (int r = 1; r < A.rows(); ++r) mx = std::max(mx, A(r, j));
    double norm = 0.0;
    for (int r = 0; r < A.rows(); ++r) {
      double e = std::exp(A(r, j) - mx);
      node.value(r, j) = e;
      norm += e;
    }
    for (int r = 0; r < A.rows(); ++r) node.value(r, j) /= norm;
  }
  node.op = Op::softmax;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::square(Var a) {
  check_same_tape(a);
  Node node;
  node.value = at(a).value;
  for (std::size_t i = 0; i < node.value.size(); ++i) node.value[i] *= node.value[i];
  node.op = Op::square;
  node.a = a.id();
  node.needs_grad = at(a).needs_grad;
  return Var(this, push(std::move(node)));
}

Var Tape::segment(Var flat, int offset, int rows, int cols) {
  check_same_tape(flat);
  const Tensor& F = at(flat).value;
  const std::size_t need = static_cast<std::size_t>(offset) + static_cast<std::size_t>(rows) * cols;
  if (F.cols() != 1 || need > F.size())
    throw std::invalid_argument("segment: range [" + std::to_string(offset) + "," +
                                std::to_string(need) + ") with shape (" + std::to_string(rows) +
                                "," + std::to_string(cols) + ") does not fit flat column " +
                                F.shape_str());
  Node node;
  node.value = Tensor(rows, cols);
  std::copy(F.data() + offset, F.data() + need, node.value.data());
  node.op = Op::segment;
  node.a = flat.id();
  node.seg_offset = offset;
  node.needs_grad = at(flat).needs_grad;
  return Var(this, push(std::move(node)));
}

Tensor& Tape::grad_buffer(int id, const Tensor& like) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(like);
  return n.grad;
}

void Tape::backward(Var output) {
  check_same_tape(output);
  const Node& out = at(output);
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw std::invalid_argument("backward: output has shape " + out.value.shape_str() +
                                ", expected scalar (1,1)");
  grad_buffer(output.id(), out.value)[0] = 1.0;
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || n.op == Op::leaf) continue;
    backward_node(id);
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  const Tensor& g = n.grad;
  auto parent_needs = [&](int pid) { return nodes_[static_cast<std::size_t>(pid)].needs_grad; };

  switch (n.op) {
    case Op::matmul: {
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
      const int m = A.rows(), k = A.cols(), nc = B.cols();
      if (parent_needs(n.a)) {
        Tensor& da = grad_buffer(n.a, A);  // dA += g * B^T
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < k; ++l) {
            double acc = 0.0;
            const double* grow = g.data() + static_cast<std::size_t>(i) * nc;
            const double* brow = B.data() + static_cast<std::size_t>(l) * nc;
            for (int j = 0; j < nc; ++j) acc += grow[j] * brow[j];
            da(i, l) += acc;
          }
      }
      if (parent_needs(n.b)) {
        Tensor& db = grad_buffer(n.b, B);  // dB += A^T * g
        for (int l = 0; l < k; ++l)
          for (int i = 0; i < m; ++i) {
            const double av = A(i, l);
            if (av == 0.0) continue;
            double* drow = db.data() + static_cast<std::size_t>(l) * nc;
            const double* grow = g.data() + static_cast<std::size_t>(i) * nc;
            for (int j = 0; j < nc; ++j) drow[j] += av * grow[j];
          }
      }
      break;
    }
    case Op::add: {
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
      if (parent_needs(n.a)) {
        Tensor& da = grad_buffer(n.a, A);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (parent_needs(n.b)) {
        Tensor& db = grad_buffer(n.b, B);
        if (B.same_shape(n.value)) {
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
        } else {  // bias broadcast: reduce over columns
          for (int r = 0; r < n.value.rows(); ++r) {
            double acc = 0.0;
            const double* grow = g.data() + static_cast<std::size_t>(r) * n.value.cols();
            for (int j = 0; j < n.value.cols(); ++j) acc += grow[j];
            db(r, 0) += acc;
          }
        }
      }
      break;
    }
    case Op::mul: {
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
      if (parent_needs(n.a)) {
        Tensor& da = grad_buffer(n.a, A);
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * B[i];
      }
      if (parent_needs(n.b)) {
        Tensor& db = grad_buffer(n.b, B);
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * A[i];
      }
      break;
    }
    case Op::tanh: {
      if (!parent_needs(n.a)) break;
      Tensor& da = grad_buffer(n.a, n.value);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::sum: {
      if (!parent_needs(n.a)) break;
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      Tensor& da = grad_buffer(n.a, A);
      const double gv = g[0];
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += gv;
      break;
    }
    case Op::concat: {
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
      if (parent_needs(n.a)) {
        Tensor& da = grad_buffer(n.a, A);
        for (std::size_t i = 0; i < A.size(); ++i) da[i] += g[i];
      }
      if (parent_needs(n.b)) {
        Tensor& db = grad_buffer(n.b, B);
        for (std::size_t i = 0; i < B.size(); ++i) db[i] += g[A.size() + i];
      }
      break;
    }
    case Op::scale: {
      if (!parent_needs(n.a)) break;
      Tensor& da = grad_buffer(n.a, n.value);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.payload;
      break;
    }
    case Op::neg: {
      if (!parent_needs(n.a)) break;
      Tensor& da = grad_buffer(n.a, n.value);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] -= g[i];
      break;
    }
    case Op::exp: {
      if (!parent_needs(n.a)) break;
      Tensor& da = grad_buffer(n.a, n.value);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.value[i];
      break;
    }
    case Op::log: {
      if (!parent_needs(n.a)) break;
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      Tensor& da = grad_buffer(n.a, A);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / A[i];
      break;
    }
    case Op::softmax: {
      if (!parent_needs(n.a)) break;
      Tensor& da = grad_buffer(n.a, n.value);
      const Tensor& y = n.value;
      for (int j = 0; j < y.cols(); ++j) {
        double dot = 0.0;
        for (int r = 0; r < y.rows(); ++r) dot += g(r, j) * y(r, j);
        for (int r = 0; r < y.rows(); ++r) da(r, j) += y(r, j) * (g(r, j) - dot);
      }
      break;
    }
    case Op::square: {
      if (!parent_needs(n.a)) break;
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      Tensor& da = grad_buffer(n.a, A);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += 2.0 * g[i] * A[i];
      break;
    }
    case Op::segment: {
      if (!parent_needs(n.a)) break;
      const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
      Tensor& da = grad_buffer(n.a, A);
      for (std::size_t i = 0; i < g.size(); ++i) da[n.seg_offset + i] += g[i];
      break;
    }
    case Op::leaf:
      break;
  }
}

Tensor Tape::grad(Var v) const {
  check_same_tape(v);
  const Node& n = at(v);
  if (n.grad.empty()) return Tensor::zeros_like(n.value);
  return n.grad;
}

const Tensor& Tape::value(Var v) const {
  check_same_tape(v);
  return at(v).value;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  Tape tape;
  Var x = tape.leaf(point);
  Var out = f(tape, x);
  tape.backward(out);
  Tensor analytic = tape.grad(x);

  auto eval = [&](const Tensor& p) {
    Tape t;
    Var v = t.constant(p);
    return f(t, v).value().item();
  };

  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double hi = eval(probe);
    probe[i] = orig - step;
    const double lo = eval(probe);
    probe[i] = orig;
    const double numeric = (hi - lo) / (2.0 * step);
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace regflow::ad
