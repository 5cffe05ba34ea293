#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rgan/common.hpp"

namespace rgan {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

class Tape;

/// Dense row-major float32 array. A tensor is immutable once it has been fed
/// into an operation; buffers are shared, not copied. Tensors produced while
/// a Tape is active carry a node id so reverse-mode gradients can be traced.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<float> values);

  static Tensor full(Shape shape, float value);
  static Tensor uniform(Shape shape, float lo, float hi, Rng& rng);
  static Tensor normal(Shape shape, float mean, float stddev, Rng& rng);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool defined() const { return data_ != nullptr; }

  const float* data() const { return data_->data(); }
  float* data() { return data_->data(); }
  const std::vector<float>& vec() const { return *data_; }
  std::shared_ptr<std::vector<float>> buffer() const { return data_; }

  /// Value of a scalar (shape [1]) tensor.
  float value() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

  /// Same buffer, detached from any tape.
  Tensor detached() const;

  /// Deep copy of the buffer (never shared), detached.
  Tensor clone() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<float>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
  friend class Tape;
};

using GradientMap = std::map<std::string, Tensor>;

/// Records one forward pass and replays it in reverse. A tape belongs to a
/// single training step: build the graph, call backward once, drop it.
/// Creation order is the topological order, so the reverse sweep visits
/// every node after all of its consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a learnable leaf. Its gradient appears in the backward() map
  /// under `name` (zero-filled if the loss never touched it).
  Tensor leaf(const Tensor& value, std::string name);

  /// Register a differentiable input without a name (gradients flow through
  /// it but are not reported).
  Tensor input(const Tensor& value);

  GradientMap backward(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }

  // Graph plumbing used by the operator implementations.
  using BackwardFn = std::function<void(const std::vector<float>& grad_out, Tape& tape)>;
  int push_node(const Shape& shape, BackwardFn backward);
  Tensor track(Tensor value, BackwardFn backward);
  /// Gradient accumulation buffer for a node, zero-allocated on first use.
  std::vector<float>& grad_buffer(int node);
  bool has_grad(int node) const;

 private:
  struct Node {
    Shape shape;
    BackwardFn backward;  // empty for leaves
    int learnable_index = -1;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> learnable_;
  std::vector<std::vector<float>> grads_;
  bool used_ = false;
};

enum class BinaryOp { add, sub, mul, matmul };

// Elementwise ops accept equal shapes, a rank-1 right operand matching dim 1
// of a rank-2/rank-4 left operand (bias / per-channel), or a trailing
// singleton ([m,1] against [m,n]). Anything else is a ShapeError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor apply_binary(BinaryOp op, const Tensor& a, const Tensor& b);

/// scale * x + shift, elementwise.
Tensor affine(const Tensor& x, float scale, float shift);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float alpha);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
/// Pass-through gradient inside [lo, hi], zero outside.
Tensor clamp(const Tensor& x, float lo, float hi);

Tensor sum(const Tensor& x);   // -> [1]
Tensor mean(const Tensor& x);  // -> [1]
Tensor row_sum(const Tensor& x);  // [m,n] -> [m,1]

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(const Tensor& a, const Tensor& b);      // [m,p]+[m,q] -> [m,p+q]
Tensor concat_channels(const Tensor& a, const Tensor& b);  // [b,c1,h,w]+[b,c2,h,w]

/// Strided cross-correlation. x [B,Ci,H,W], w [Co,Ci,K,K] ->
/// [B,Co,(H+2p-K)/s+1,(W+2p-K)/s+1]. Bias is added separately.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);

/// Adjoint of conv2d with the same weight tensor: maps the Co side back to
/// the Ci side, [B,Co,h,w] -> [B,Ci,(h-1)*s-2p+K+out_pad, ...].
/// <conv2d(x,w), y> == <x, deconv2d(y,w)> whenever the sizes line up.
Tensor deconv2d(const Tensor& x, const Tensor& w, int stride, int pad, int out_pad);

struct BatchNormResult {
  Tensor y;
  std::vector<float> batch_mean;  // per channel, biased variance
  std::vector<float> batch_var;
};

/// Normalizes per channel over (batch, spatial) with batch statistics.
/// x is [b,c] or [b,c,h,w]; gamma/beta are [c]. Batch (times spatial) must
/// be >= 2.
BatchNormResult batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                 float epsilon);

/// Normalizes with the provided running statistics; deterministic per example.
Tensor batch_norm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const std::vector<float>& running_mean,
                        const std::vector<float>& running_var, float epsilon);

/// Max over coordinates of |analytic - central difference| / max(1,|analytic|)
/// for a scalar-valued function of one tensor. The per-coordinate step is
/// eps * max(1, |x_i|).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         float eps);

struct FiniteDiffStats {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
};

/// Like finite_diff_check, but when skip_nonsmooth is set, coordinates whose
/// [x-h, x+h] interval straddles an activation kink are excluded from the
/// maximum: the one-sided differences disagree there and the central
/// difference is not a valid derivative oracle. Detection uses only function
/// values, never the analytic gradient. Callers should bound the skipped
/// fraction.
FiniteDiffStats finite_diff_stats(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  float eps, bool skip_nonsmooth);

}  // namespace rgan
