#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dgdn/errors.hpp"

namespace dgdn {

class GradTape;

/// Dense real-valued n-dimensional array, double precision.
///
/// Layout is row-major with the image convention channels x height x width;
/// scalars are rank-0 (empty shape, one element). Data buffers are shared and
/// treated as immutable once an operation has produced them; only leaf tensors
/// owned by a trainer may be updated in place through mutable_values().
///
/// A tensor may be attached to a GradTape (see GradTape::watch and the op
/// functions below), in which case it carries a non-owning pointer to the tape
/// and the id of its node. Attached tensors must not outlive their tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(std::vector<int> shape, std::vector<double> values);

  bool defined() const { return data_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const;

  std::span<const double> values() const;
  /// In-place access for trainable leaves; never call on op outputs.
  std::span<double> mutable_values();

  /// Value of a rank-0 (or single-element) tensor.
  double item() const;
  /// Element access for rank-3 c x h x w tensors.
  double at(int c, int y, int x) const;

  bool on_tape() const { return tape_ != nullptr; }
  GradTape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Gradient accumulated for this tensor's node by the last backward pass.
  /// Only valid for tensors attached to a tape.
  Tensor grad() const;

  /// Same data, no tape link.
  Tensor detached() const;

 private:
  friend class GradTape;

  std::vector<int> shape_;
  std::shared_ptr<const std::vector<double>> data_;
  GradTape* tape_ = nullptr;
  int node_ = -1;
};

/// Number of elements implied by a shape (1 for rank-0).
std::int64_t numel(const std::vector<int>& shape);

/// Record of one differentiation tape. Records are appended in execution
/// order (define-by-run), so record order is already a topological order.
///
/// Backward rule contract: each recorded node owns a closure that reads the
/// node's output gradient via grad_of(self) and accumulates into the gradient
/// buffers of its input nodes. Gradients add across fan-out. Nodes whose
/// output gradient was never touched are skipped entirely.
class GradTape {
 public:
  using BackwardFn = std::function<void(GradTape&, int self)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Register a leaf value and return the attached handle.
  Tensor watch(const Tensor& t, bool trainable = true);

  /// Append an op record. `inputs` are node ids on this tape.
  Tensor record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  /// Node id for `t`, watching it as a constant leaf if it is detached.
  /// Throws TapeError if `t` lives on a different tape.
  int capture(const Tensor& t);

  /// Reverse-topological gradient accumulation from a rank-0 loss.
  /// Resets all previously accumulated gradients, seeds d(loss)/d(loss)=1,
  /// then guarantees every trainable leaf has a populated (possibly zero)
  /// gradient buffer.
  void backward(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  const Tensor& value_of(int node) const { return nodes_.at(node).value; }
  /// Gradient buffer of a node, allocated (zero-filled) on first use.
  std::span<double> grad_of(int node);
  bool has_grad(int node) const { return !nodes_.at(node).grad.empty(); }
  Tensor grad_tensor(int node) const;

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;        // empty for leaves
    std::vector<double> grad;   // empty until touched
    bool trainable = false;
  };

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Each works on detached tensors as a plain
// computation; if any input is attached to a tape, the result is recorded
// there and detached inputs are captured as constants.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Sum of all elements, rank-0 result.
Tensor sum(const Tensor& x);

/// x scaled by a rank-0 tensor s; gradient flows to both.
Tensor scale(const Tensor& x, const Tensor& s);

/// Elementwise max(0, x). Gradient at exactly 0 is 0.
Tensor relu(const Tensor& x);

/// Elementwise ln(1+exp(x)), overflow-safe; derivative is the logistic.
Tensor softplus(const Tensor& x);

/// Sum of absolute differences. Subgradient sign(a-b), 0 at ties.
Tensor l1_loss(const Tensor& a, const Tensor& b);

/// Cross-correlation with same-size zero padding, stride 1.
/// input: cin x h x w, kernel: cout x cin x kh x kw (kh, kw odd), bias: cout.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

/// Channel-stacked concatenation of c_i x h x w parts, in argument order.
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);

}  // namespace dgdn
