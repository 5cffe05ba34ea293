#include "rgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>

namespace rgan {

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw ShapeError("empty shape");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeError("invalid dimension " + std::to_string(d) + " in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor::Tensor(Shape shape) {
  std::size_t n = shape_numel(shape);
  shape_ = std::move(shape);
  data_ = std::make_shared<std::vector<float>>(n, 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> values) {
  std::size_t n = shape_numel(shape);
  if (n != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     shape_str(shape));
  }
  shape_ = std::move(shape);
  data_ = std::make_shared<std::vector<float>>(std::move(values));
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), value);
  return t;
}

Tensor Tensor::uniform(Shape shape, float lo, float hi, Rng& rng) {
  if (!(lo < hi)) throw ValueError("uniform fill requires lo < hi");
  Tensor t(std::move(shape));
  for (auto& v : *t.data_) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(Shape shape, float mean, float stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : *t.data_) v = rng.normal(mean, stddev);
  return t;
}

float Tensor::value() const {
  if (size() != 1) throw ShapeError("value() requires a scalar tensor, got " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = -1;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<float>>(*data_);
  return t;
}

int Tape::push_node(const Shape& shape, BackwardFn backward) {
  nodes_.push_back(Node{shape, std::move(backward), -1});
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::track(Tensor value, BackwardFn backward) {
  value.tape_ = this;
  value.node_ = push_node(value.shape(), std::move(backward));
  return value;
}

Tensor Tape::leaf(const Tensor& value, std::string name) {
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = push_node(t.shape(), nullptr);
  nodes_.back().learnable_index = static_cast<int>(learnable_.size());
  learnable_.emplace_back(std::move(name), t.node_);
  return t;
}

Tensor Tape::input(const Tensor& value) {
  Tensor t = value.detached();
  t.tape_ = this;
  t.node_ = push_node(t.shape(), nullptr);
  return t;
}

std::vector<float>& Tape::grad_buffer(int node) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g.assign(shape_numel(nodes_[static_cast<std::size_t>(node)].shape), 0.0f);
  return g;
}

bool Tape::has_grad(int node) const {
  return node >= 0 && !grads_[static_cast<std::size_t>(node)].empty();
}

GradientMap Tape::backward(const Tensor& loss) {
  if (nodes_.empty()) throw ValueError("backward on an empty tape");
  if (loss.tape() != this) throw ValueError("loss tensor does not belong to this tape");
  if (loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss of shape [1], got " + shape_str(loss.shape()));
  }
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<std::size_t>(loss.node())] = {1.0f};
  for (int id = loss.node(); id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.backward && !grads_[static_cast<std::size_t>(id)].empty()) {
      node.backward(grads_[static_cast<std::size_t>(id)], *this);
    }
  }
  GradientMap out;
  for (const auto& [name, node] : learnable_) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    const Shape& shape = nodes_[static_cast<std::size_t>(node)].shape;
    if (g.empty()) {
      out.emplace(name, Tensor(shape));  // untouched leaf: zero gradient
    } else {
      out.emplace(name, Tensor(shape, std::move(g)));
    }
  }
  grads_.clear();
  return out;
}

namespace {

Tape* result_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->defined()) throw ValueError("operation on an undefined tensor");
    if (in->on_tape()) {
      if (tape && tape != in->tape()) throw ValueError("operands belong to different tapes");
      tape = in->tape();
    }
  }
  return tape;
}

Tensor finish(Tensor out, Tape* tape, Tape::BackwardFn backward) {
  if (tape) return tape->track(std::move(out), std::move(backward));
  return out;
}

void axpy(std::vector<float>& dst, const std::vector<float>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Broadcast patterns accepted by the elementwise binary ops.
enum class Bc {
  same,      // identical shapes
  channel,   // b is [c], a is [m,c] or [m,c,h,w]
  trailing,  // b is [m,1], a is [m,n]
};

Bc classify_broadcast(const Shape& a, const Shape& b, const char* opname) {
  if (a == b) return Bc::same;
  if (b.size() == 1 && a.size() >= 2 && a[1] == b[0] && (a.size() == 2 || a.size() == 4)) {
    return Bc::channel;
  }
  if (a.size() == 2 && b.size() == 2 && b[0] == a[0] && b[1] == 1) return Bc::trailing;
  throw ShapeError(std::string(opname) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

// index of the broadcast operand element feeding output element i
struct BcIndex {
  Bc kind;
  std::size_t channels = 1, inner = 1, cols = 1;
  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Bc::same: return i;
      case Bc::channel: return (i / inner) % channels;
      case Bc::trailing: return i / cols;
    }
    return i;
  }
};

BcIndex make_bc_index(const Shape& a, Bc kind) {
  BcIndex ix;
  ix.kind = kind;
  if (kind == Bc::channel) {
    ix.channels = static_cast<std::size_t>(a[1]);
    ix.inner = 1;
    for (std::size_t d = 2; d < a.size(); ++d) ix.inner *= static_cast<std::size_t>(a[d]);
  } else if (kind == Bc::trailing) {
    ix.cols = static_cast<std::size_t>(a[1]);
  }
  return ix;
}

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* opname,
                          float (*fwd)(float, float), float (*dfa)(float, float),
                          float (*dfb)(float, float)) {
  Bc kind = classify_broadcast(a.shape(), b.shape(), opname);
  BcIndex bix = make_bc_index(a.shape(), kind);
  std::size_t n = a.size();
  std::vector<float> out(n);
  const float* pa = a.data();
  const float* pb = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[bix(i)]);

  Tape* tape = result_tape({&a, &b});
  int na = a.node(), nb = b.node();
  auto abuf = a.buffer();
  auto bbuf = b.buffer();
  return finish(Tensor(a.shape(), std::move(out)), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                      ga[i] += gout[i] * dfa((*abuf)[i], (*bbuf)[bix(i)]);
                    }
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    for (std::size_t i = 0; i < gout.size(); ++i) {
                      gb[bix(i)] += gout[i] * dfb((*abuf)[i], (*bbuf)[bix(i)]);
                    }
                  }
                });
}

template <class Fwd, class Dydx>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Dydx dydx) {
  std::size_t n = x.size();
  std::vector<float> out(n);
  const float* px = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(px[i]);

  Tape* tape = result_tape({&x});
  int nx = x.node();
  auto xbuf = x.buffer();
  auto ybuf = std::make_shared<std::vector<float>>(out);
  return finish(Tensor(x.shape(), std::move(out)), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (std::size_t i = 0; i < gout.size(); ++i) {
                    gx[i] += gout[i] * dydx((*xbuf)[i], (*ybuf)[i]);
                  }
                });
}

void matmul_raw(const float* a, const float* b, float* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int l = 0; l < k; ++l) {
        acc += static_cast<double>(a[i * k + l]) * static_cast<double>(b[l * n + j]);
      }
      out[i * n + j] = static_cast<float>(acc);
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](float x, float y) { return x + y; }, [](float, float) { return 1.0f; },
      [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](float x, float y) { return x - y; }, [](float, float) { return 1.0f; },
      [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](float x, float y) { return x * y; }, [](float, float y) { return y; },
      [](float x, float) { return x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul requires rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * n);
  matmul_raw(a.data(), b.data(), out.data(), m, k, n);

  Tape* tape = result_tape({&a, &b});
  int na = a.node(), nb = b.node();
  auto abuf = a.buffer();
  auto bbuf = b.buffer();
  return finish(Tensor({m, n}, std::move(out)), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);  // ga[i,l] += sum_j gout[i,j] * b[l,j]
                    for (int i = 0; i < m; ++i) {
                      for (int l = 0; l < k; ++l) {
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) {
                          acc += static_cast<double>(gout[i * n + j]) * (*bbuf)[l * n + j];
                        }
                        ga[i * k + l] += static_cast<float>(acc);
                      }
                    }
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);  // gb[l,j] += sum_i a[i,l] * gout[i,j]
                    for (int l = 0; l < k; ++l) {
                      for (int j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (int i = 0; i < m; ++i) {
                          acc += static_cast<double>((*abuf)[i * k + l]) * gout[i * n + j];
                        }
                        gb[l * n + j] += static_cast<float>(acc);
                      }
                    }
                  }
                });
}

Tensor apply_binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case BinaryOp::add: return add(a, b);
    case BinaryOp::sub: return sub(a, b);
    case BinaryOp::mul: return mul(a, b);
    case BinaryOp::matmul: return matmul(a, b);
  }
  throw ValueError("unknown binary op");
}

Tensor affine(const Tensor& x, float scale, float shift) {
  return unary_elementwise(
      x, [=](float v) { return scale * v + shift; }, [=](float, float) { return scale; });
}

Tensor relu(const Tensor& x) {
  // subgradient at 0 is 0 (the negative-side slope)
  return unary_elementwise(
      x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float alpha) {
  if (!(alpha > 0.0f && alpha < 1.0f)) throw ValueError("leaky_relu alpha must be in (0,1)");
  return unary_elementwise(
      x, [=](float v) { return v > 0.0f ? v : alpha * v; },
      [=](float v, float) { return v > 0.0f ? 1.0f : alpha; });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](float v) { return std::tanh(v); }, [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  // the open interval is part of the contract; saturation would round to
  // exactly 0 or 1 in float for |v| beyond ~17
  return unary_elementwise(
      x,
      [](float v) {
        float y = 1.0f / (1.0f + std::exp(-v));
        if (y >= 1.0f) y = std::nextafter(1.0f, 0.0f);
        if (y <= 0.0f) y = std::nextafter(0.0f, 1.0f);
        return y;
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(
      x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_elementwise(
      x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  if (!(lo < hi)) throw ValueError("clamp requires lo < hi");
  return unary_elementwise(
      x, [=](float v) { return v < lo ? lo : (v > hi ? hi : v); },
      [=](float v, float) { return (v >= lo && v <= hi) ? 1.0f : 0.0f; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  const float* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];

  Tape* tape = result_tape({&x});
  int nx = x.node();
  std::size_t n = x.size();
  return finish(Tensor({1}, {static_cast<float>(acc)}), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (std::size_t i = 0; i < n; ++i) gx[i] += gout[0];
                });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  const float* px = x.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
  std::size_t n = x.size();

  Tape* tape = result_tape({&x});
  int nx = x.node();
  return finish(Tensor({1}, {static_cast<float>(acc / static_cast<double>(n))}), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  float g = gout[0] / static_cast<float>(n);
                  for (std::size_t i = 0; i < n; ++i) gx[i] += g;
                });
}

Tensor row_sum(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("row_sum requires a rank-2 tensor, got " + shape_str(x.shape()));
  int m = x.dim(0), n = x.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m));
  const float* px = x.data();
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += px[i * n + j];
    out[static_cast<std::size_t>(i)] = static_cast<float>(acc);
  }

  Tape* tape = result_tape({&x});
  int nx = x.node();
  return finish(Tensor({m, 1}, std::move(out)), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (nx < 0) return;
                  auto& gx = t.grad_buffer(nx);
                  for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) gx[i * n + j] += gout[static_cast<std::size_t>(i)];
                  }
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::size_t n = shape_numel(shape);
  if (n != x.size()) {
    throw ShapeError("reshape from " + shape_str(x.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  }
  Tensor out(std::move(shape), x.vec());
  Tape* tape = result_tape({&x});
  int nx = x.node();
  return finish(std::move(out), tape, [=](const std::vector<float>& gout, Tape& t) {
    if (nx < 0) return;
    axpy(t.grad_buffer(nx), gout);
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols requires [m,p] and [m,q], got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  std::vector<float> out(static_cast<std::size_t>(m) * (p + q));
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data() + static_cast<std::size_t>(i) * p, p, out.data() + static_cast<std::size_t>(i) * (p + q));
    std::copy_n(b.data() + static_cast<std::size_t>(i) * q, q,
                out.data() + static_cast<std::size_t>(i) * (p + q) + p);
  }
  Tape* tape = result_tape({&a, &b});
  int na = a.node(), nb = b.node();
  return finish(Tensor({m, p + q}, std::move(out)), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);
                    for (int i = 0; i < m; ++i) {
                      for (int j = 0; j < p; ++j) ga[i * p + j] += gout[i * (p + q) + j];
                    }
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    for (int i = 0; i < m; ++i) {
                      for (int j = 0; j < q; ++j) gb[i * q + j] += gout[i * (p + q) + p + j];
                    }
                  }
                });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels requires [b,c1,h,w] and [b,c2,h,w], got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  int bs = a.dim(0), c1 = a.dim(1), c2 = b.dim(1), h = a.dim(2), w = a.dim(3);
  std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<float> out(static_cast<std::size_t>(bs) * (c1 + c2) * plane);
  for (int i = 0; i < bs; ++i) {
    std::copy_n(a.data() + static_cast<std::size_t>(i) * c1 * plane, static_cast<std::size_t>(c1) * plane,
                out.data() + static_cast<std::size_t>(i) * (c1 + c2) * plane);
    std::copy_n(b.data() + static_cast<std::size_t>(i) * c2 * plane, static_cast<std::size_t>(c2) * plane,
                out.data() + static_cast<std::size_t>(i) * (c1 + c2) * plane + c1 * plane);
  }
  Tape* tape = result_tape({&a, &b});
  int na = a.node(), nb = b.node();
  return finish(Tensor({bs, c1 + c2, h, w}, std::move(out)), tape,
                [=](const std::vector<float>& gout, Tape& t) {
                  if (na >= 0) {
                    auto& ga = t.grad_buffer(na);
                    for (int i = 0; i < bs; ++i) {
                      const float* g = gout.data() + static_cast<std::size_t>(i) * (c1 + c2) * plane;
                      float* dst = ga.data() + static_cast<std::size_t>(i) * c1 * plane;
                      for (std::size_t j = 0; j < static_cast<std::size_t>(c1) * plane; ++j) dst[j] += g[j];
                    }
                  }
                  if (nb >= 0) {
                    auto& gb = t.grad_buffer(nb);
                    for (int i = 0; i < bs; ++i) {
                      const float* g =
                          gout.data() + static_cast<std::size_t>(i) * (c1 + c2) * plane + c1 * plane;
                      float* dst = gb.data() + static_cast<std::size_t>(i) * c2 * plane;
                      for (std::size_t j = 0; j < static_cast<std::size_t>(c2) * plane; ++j) dst[j] += g[j];
                    }
                  }
                });
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         float eps) {
  return finite_diff_stats(f, x, eps, false).max_rel_err;
}

FiniteDiffStats finite_diff_stats(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  float eps, bool skip_nonsmooth) {
  if (!(eps > 0.0f)) throw ValueError("finite_diff_check requires eps > 0");
  Tape tape;
  Tensor xl = tape.leaf(x, "__x");
  Tensor y = f(xl);
  if (y.size() != 1) {
    throw ShapeError("finite_diff_check: f must be scalar-valued, got " + shape_str(y.shape()));
  }
  double f0 = y.value();
  if (!std::isfinite(f0)) throw NumericError("non-finite function value at base point");
  Tensor analytic = tape.backward(y).at("__x");

  FiniteDiffStats stats;
  for (std::size_t i = 0; i < x.size(); ++i) {
    float g = analytic.data()[i];
    if (!std::isfinite(g)) {
      throw NumericError("non-finite analytic gradient at coordinate " + std::to_string(i));
    }
    double h = static_cast<double>(eps) * std::max(1.0, std::abs(static_cast<double>(x.data()[i])));
    Tensor xp = x.clone();
    Tensor xm = x.clone();
    xp.data()[i] = static_cast<float>(x.data()[i] + h);
    xm.data()[i] = static_cast<float>(x.data()[i] - h);
    double fp = f(xp).value();
    double fm = f(xm).value();
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("non-finite function value while perturbing coordinate " + std::to_string(i));
    }
    double fd = (fp - fm) / (2.0 * h);
    if (skip_nonsmooth) {
      // one-sided slopes disagreeing beyond curvature scale means a kink
      // sits inside [x-h, x+h]
      double d_fwd = (fp - f0) / h;
      double d_bwd = (f0 - fm) / h;
      if (std::abs(d_fwd - d_bwd) > 1e-3 * std::max(1.0, std::abs(fd))) {
        ++stats.skipped_nonsmooth;
        continue;
      }
    }
    ++stats.checked;
    double err = std::abs(static_cast<double>(g) - fd) / std::max(1.0, std::abs(static_cast<double>(g)));
    if (err > stats.max_rel_err) stats.max_rel_err = err;
  }
  return stats;
}

}  // namespace rgan
