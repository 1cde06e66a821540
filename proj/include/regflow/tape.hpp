#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "regflow/tensor.hpp"

namespace regflow::ad {

enum class Op : std::uint8_t {
  leaf,     // input node (trainable parameter or constant)
  matmul,   // (m,k) x (k,n) -> (m,n)
  add,      // same shape, or (m,n) + (m,1) bias broadcast
  mul,      // elementwise, same shape
  tanh,     // elementwise
  sum,      // all elements -> (1,1)
  concat,   // rows: (a,n) over (b,n) -> (a+b,n)
  scale,    // multiply by compile-time constant
  neg,      // elementwise negation
  exp,      // elementwise
  log,      // elementwise
  softmax,  // column-wise softmax
  square,   // elementwise x^2
  segment,  // contiguous range of a flat column, reshaped (rows,cols) row-major
};

const char* op_name(Op op);

class Tape;

// Handle to a node on a tape. Cheap to copy; lifetime bound to the tape.
class Var {
 public:
  Var() : tape_(nullptr), id_(-1) {}
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_;
  int id_;
};

// Define-by-run tape of recorded operations. Nodes are appended in
// topological order, so the reverse pass is a single backward sweep.
// A tape is single-threaded; distinct tapes are independent.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);      // differentiable input
  Var constant(Tensor value);  // non-differentiable input

  // Generic dispatch over the recorded op set. `payload` is the factor for
  // `scale`; segment geometry has its own entry point below.
  Var forward_op(Op op, std::span<const Var> inputs, double payload = 0.0);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var tanh(Var a);
  Var sum(Var a);
  Var concat(Var a, Var b);
  Var scale(Var a, double factor);
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softmax(Var a);
  Var square(Var a);
  Var segment(Var flat, int offset, int rows, int cols);

  // Reverse sweep from a scalar output; gradients accumulate into every
  // ancestor node. Rejects non-scalar outputs.
  void backward(Var output);

  // Gradient buffer of a node after backward (zeros if the node did not
  // participate in the output).
  Tensor grad(Var v) const;

  const Tensor& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    Op op = Op::leaf;
    int a = -1, b = -1;
    double payload = 0.0;  // scale factor
    int seg_offset = 0;    // segment geometry
    bool needs_grad = false;
  };

  int push(Node node);
  Node& at(Var v);
  const Node& at(Var v) const;
  void check_same_tape(Var v) const;
  Tensor& grad_buffer(int id, const Tensor& like);
  void backward_node(int id);

  std::vector<Node> nodes_;
};

// Central-difference gradient check for a scalar-valued function of one
// tensor input. Returns the max over coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& point, double step);

}  // namespace regflow::ad
