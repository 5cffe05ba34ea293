// Direct convolution / transposed-convolution / batch-norm kernels with
// their backward rules. Gather-style loops with double accumulators; writes
// are disjoint per batch element (or per output channel for weight
// gradients) so parallel execution stays bit-deterministic.
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>

#include "rgan/tensor.hpp"

namespace rgan {

namespace {

int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// y[b,o,i,j] = sum_{c,u,v} w[o,c,u,v] * x[b,c, i*s-p+u, j*s-p+v]
void conv_fwd_raw(const float* x, const float* w, float* y, int B, int Ci, int H, int W, int Co,
                  int kh, int kw, int s, int p, int Ho, int Wo) {
  parallel_for(B, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int o = 0; o < Co; ++o) {
        float* yrow = y + ((b * Co + o) * Ho) * static_cast<std::int64_t>(Wo);
        for (int i = 0; i < Ho; ++i) {
          for (int j = 0; j < Wo; ++j) {
            double acc = 0.0;
            for (int c = 0; c < Ci; ++c) {
              const float* xpl = x + ((b * Ci + c) * H) * static_cast<std::int64_t>(W);
              const float* wpl = w + ((static_cast<std::int64_t>(o) * Ci + c) * kh) * kw;
              for (int u = 0; u < kh; ++u) {
                int xi = i * s - p + u;
                if (xi < 0 || xi >= H) continue;
                for (int v = 0; v < kw; ++v) {
                  int xj = j * s - p + v;
                  if (xj < 0 || xj >= W) continue;
                  acc += static_cast<double>(wpl[u * kw + v]) * xpl[xi * W + xj];
                }
              }
            }
            yrow[i * Wo + j] = static_cast<float>(acc);
          }
        }
      }
    }
  });
}

// z[b,c,a,e] = sum_{o,u,v: i=(a+p-u)/s, j=(e+p-v)/s valid} w[o,c,u,v] * y[b,o,i,j]
void conv_adjoint_raw(const float* y, const float* w, float* z, int B, int Co, int h, int wd,
                      int Ci, int kh, int kw, int s, int p, int Hz, int Wz) {
  parallel_for(B, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      for (int c = 0; c < Ci; ++c) {
        float* zpl = z + ((b * Ci + c) * Hz) * static_cast<std::int64_t>(Wz);
        for (int a = 0; a < Hz; ++a) {
          for (int e = 0; e < Wz; ++e) {
            double acc = 0.0;
            for (int u = 0; u < kh; ++u) {
              int ti = a + p - u;
              if (ti < 0 || ti % s != 0) continue;
              int i = ti / s;
              if (i >= h) continue;
              for (int v = 0; v < kw; ++v) {
                int tj = e + p - v;
                if (tj < 0 || tj % s != 0) continue;
                int j = tj / s;
                if (j >= wd) continue;
                const float* ypos = y + (b * Co * h + i) * static_cast<std::int64_t>(wd) + j;
                const float* wpos = w + (static_cast<std::int64_t>(c) * kh + u) * kw + v;
                for (int o = 0; o < Co; ++o) {
                  acc += static_cast<double>(wpos[static_cast<std::int64_t>(o) * Ci * kh * kw]) *
                         ypos[static_cast<std::int64_t>(o) * h * wd];
                }
              }
            }
            zpl[a * Wz + e] = static_cast<float>(acc);
          }
        }
      }
    }
  });
}

// dw[o,c,u,v] = sum_{b,i,j} dy[b,o,i,j] * x[b,c, i*s-p+u, j*s-p+v]
void conv_weight_grad_raw(const float* x, const float* dy, float* dw, int B, int Ci, int H, int W,
                          int Co, int kh, int kw, int s, int p, int Ho, int Wo) {
  parallel_for(Co, [&](std::int64_t o0, std::int64_t o1) {
    for (std::int64_t o = o0; o < o1; ++o) {
      for (int c = 0; c < Ci; ++c) {
        for (int u = 0; u < kh; ++u) {
          for (int v = 0; v < kw; ++v) {
            double acc = 0.0;
            for (int b = 0; b < B; ++b) {
              const float* dpl = dy + ((static_cast<std::int64_t>(b) * Co + o) * Ho) * Wo;
              const float* xpl = x + ((static_cast<std::int64_t>(b) * Ci + c) * H) * W;
              for (int i = 0; i < Ho; ++i) {
                int xi = i * s - p + u;
                if (xi < 0 || xi >= H) continue;
                for (int j = 0; j < Wo; ++j) {
                  int xj = j * s - p + v;
                  if (xj < 0 || xj >= W) continue;
                  acc += static_cast<double>(dpl[i * Wo + j]) * xpl[xi * W + xj];
                }
              }
            }
            dw[((o * Ci + c) * kh + u) * kw + v] += static_cast<float>(acc);
          }
        }
      }
    }
  });
}

void check_conv_args(const Tensor& x, const Tensor& w, int stride, int pad, const char* opname) {
  if (x.rank() != 4) throw ShapeError(std::string(opname) + ": input must be rank 4, got " + shape_str(x.shape()));
  if (w.rank() != 4) throw ShapeError(std::string(opname) + ": weight must be rank 4, got " + shape_str(w.shape()));
  if (stride < 1 || pad < 0) throw ValueError(std::string(opname) + ": bad stride/padding");
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  check_conv_args(x, w, stride, pad, "conv2d");
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("conv2d: input channels " + shape_str(x.shape()) + " do not match weight " +
                     shape_str(w.shape()));
  }
  int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int Ho = conv_out_dim(H, kh, stride, pad);
  int Wo = conv_out_dim(W, kw, stride, pad);
  if (Ho < 1 || Wo < 1) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + " too small for kernel " +
                     shape_str(w.shape()));
  }
  Tensor out({B, Co, Ho, Wo});
  conv_fwd_raw(x.data(), w.data(), out.data(), B, Ci, H, W, Co, kh, kw, stride, pad, Ho, Wo);

  Tape* tape = nullptr;
  {
    const Tensor* ins[] = {&x, &w};
    for (const Tensor* in : ins) {
      if (in->on_tape()) {
        if (tape && tape != in->tape()) throw ValueError("operands belong to different tapes");
        tape = in->tape();
      }
    }
  }
  if (!tape) return out;
  int nx = x.node(), nw = w.node();
  auto xbuf = x.buffer();
  auto wbuf = w.buffer();
  return tape->track(std::move(out), [=](const std::vector<float>& gout, Tape& t) {
    if (nx >= 0) {
      auto& gx = t.grad_buffer(nx);
      // dx is the adjoint of the forward map
      conv_adjoint_raw(gout.data(), wbuf->data(), gx.data(), B, Co, Ho, Wo, Ci, kh, kw, stride, pad,
                       H, W);
    }
    if (nw >= 0) {
      auto& gw = t.grad_buffer(nw);
      conv_weight_grad_raw(xbuf->data(), gout.data(), gw.data(), B, Ci, H, W, Co, kh, kw, stride,
                           pad, Ho, Wo);
    }
  });
}

Tensor deconv2d(const Tensor& x, const Tensor& w, int stride, int pad, int out_pad) {
  check_conv_args(x, w, stride, pad, "deconv2d");
  if (x.dim(1) != w.dim(0)) {
    throw ShapeError("deconv2d: input channels " + shape_str(x.shape()) +
                     " do not match weight " + shape_str(w.shape()) + " (dim 0)");
  }
  if (out_pad < 0 || out_pad >= stride) throw ValueError("deconv2d: out_pad must be in [0, stride)");
  int B = x.dim(0), Co = x.dim(1), h = x.dim(2), wd = x.dim(3);
  int Ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  int Hz = (h - 1) * stride - 2 * pad + kh + out_pad;
  int Wz = (wd - 1) * stride - 2 * pad + kw + out_pad;
  if (Hz < 1 || Wz < 1) throw ShapeError("deconv2d: degenerate output size");
  Tensor out({B, Ci, Hz, Wz});
  conv_adjoint_raw(x.data(), w.data(), out.data(), B, Co, h, wd, Ci, kh, kw, stride, pad, Hz, Wz);

  Tape* tape = nullptr;
  {
    const Tensor* ins[] = {&x, &w};
    for (const Tensor* in : ins) {
      if (in->on_tape()) {
        if (tape && tape != in->tape()) throw ValueError("operands belong to different tapes");
        tape = in->tape();
      }
    }
  }
  if (!tape) return out;
  int nx = x.node(), nw = w.node();
  auto xbuf = x.buffer();
  auto wbuf = w.buffer();
  return tape->track(std::move(out), [=](const std::vector<float>& gout, Tape& t) {
    if (nx >= 0) {
      auto& gx = t.grad_buffer(nx);
      // adjoint of the adjoint: plain strided correlation of the output grad
      conv_fwd_raw(gout.data(), wbuf->data(), gx.data(), B, Ci, Hz, Wz, Co, kh, kw, stride, pad, h,
                   wd);
    }
    if (nw >= 0) {
      auto& gw = t.grad_buffer(nw);
      // same correlation as the conv weight grad with the roles swapped
      conv_weight_grad_raw(gout.data(), xbuf->data(), gw.data(), B, Ci, Hz, Wz, Co, kh, kw, stride,
                           pad, h, wd);
    }
  });
}

namespace {

struct BnDims {
  int batch, channels;
  std::size_t spatial;  // elements per (batch, channel) slice
  std::size_t per_channel() const { return static_cast<std::size_t>(batch) * spatial; }
};

BnDims bn_dims(const Tensor& x) {
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), static_cast<std::size_t>(x.dim(2)) * x.dim(3)};
  throw ShapeError("batch norm expects rank 2 or 4, got " + shape_str(x.shape()));
}

inline std::size_t bn_index(const BnDims& d, int b, int c, std::size_t s) {
  return (static_cast<std::size_t>(b) * d.channels + static_cast<std::size_t>(c)) * d.spatial + s;
}

}  // namespace

BatchNormResult batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                 float epsilon) {
  if (!(epsilon > 0.0f)) throw ValueError("batch norm epsilon must be > 0");
  BnDims d = bn_dims(x);
  if (d.batch < 2) {
    throw ValueError("batch norm in train mode needs a batch of at least 2, got " +
                     std::to_string(d.batch));
  }
  if (gamma.rank() != 1 || gamma.dim(0) != d.channels || beta.rank() != 1 ||
      beta.dim(0) != d.channels) {
    throw ShapeError("batch norm gamma/beta must be [" + std::to_string(d.channels) + "]");
  }

  std::vector<float> mean_c(static_cast<std::size_t>(d.channels));
  std::vector<float> var_c(static_cast<std::size_t>(d.channels));
  std::vector<float> invstd(static_cast<std::size_t>(d.channels));
  const float* px = x.data();
  for (int c = 0; c < d.channels; ++c) {
    double m = 0.0;
    for (int b = 0; b < d.batch; ++b)
      for (std::size_t s = 0; s < d.spatial; ++s) m += px[bn_index(d, b, c, s)];
    m /= static_cast<double>(d.per_channel());
    double v = 0.0;
    for (int b = 0; b < d.batch; ++b)
      for (std::size_t s = 0; s < d.spatial; ++s) {
        double diff = px[bn_index(d, b, c, s)] - m;
        v += diff * diff;
      }
    v /= static_cast<double>(d.per_channel());  // biased
    mean_c[static_cast<std::size_t>(c)] = static_cast<float>(m);
    var_c[static_cast<std::size_t>(c)] = static_cast<float>(v);
    invstd[static_cast<std::size_t>(c)] = static_cast<float>(1.0 / std::sqrt(v + epsilon));
  }

  std::vector<float> out(x.size());
  const float* pg = gamma.data();
  const float* pb = beta.data();
  for (int c = 0; c < d.channels; ++c) {
    float m = mean_c[static_cast<std::size_t>(c)];
    float is = invstd[static_cast<std::size_t>(c)];
    for (int b = 0; b < d.batch; ++b)
      for (std::size_t s = 0; s < d.spatial; ++s) {
        std::size_t i = bn_index(d, b, c, s);
        out[i] = pg[c] * (px[i] - m) * is + pb[c];
      }
  }

  Tape* tape = nullptr;
  {
    const Tensor* ins[] = {&x, &gamma, &beta};
    for (const Tensor* in : ins) {
      if (in->on_tape()) {
        if (tape && tape != in->tape()) throw ValueError("operands belong to different tapes");
        tape = in->tape();
      }
    }
  }
  BatchNormResult result;
  result.batch_mean = mean_c;
  result.batch_var = var_c;
  Tensor y(x.shape(), std::move(out));
  if (!tape) {
    result.y = std::move(y);
    return result;
  }

  int nx = x.node(), ng = gamma.node(), nb = beta.node();
  auto xbuf = x.buffer();
  auto gbuf = gamma.buffer();
  auto meanv = std::make_shared<std::vector<float>>(std::move(mean_c));
  auto invstdv = std::make_shared<std::vector<float>>(std::move(invstd));
  result.y = tape->track(std::move(y), [=](const std::vector<float>& gout, Tape& t) {
    double n = static_cast<double>(d.per_channel());
    for (int c = 0; c < d.channels; ++c) {
      float m = (*meanv)[static_cast<std::size_t>(c)];
      float is = (*invstdv)[static_cast<std::size_t>(c)];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < d.batch; ++b)
        for (std::size_t s = 0; s < d.spatial; ++s) {
          std::size_t i = bn_index(d, b, c, s);
          double xhat = ((*xbuf)[i] - m) * is;
          sum_dy += gout[i];
          sum_dy_xhat += gout[i] * xhat;
        }
      if (nb >= 0) t.grad_buffer(nb)[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy);
      if (ng >= 0) t.grad_buffer(ng)[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy_xhat);
      if (nx >= 0) {
        auto& gx = t.grad_buffer(nx);
        double g = (*gbuf)[static_cast<std::size_t>(c)];
        for (int b = 0; b < d.batch; ++b)
          for (std::size_t s = 0; s < d.spatial; ++s) {
            std::size_t i = bn_index(d, b, c, s);
            double xhat = ((*xbuf)[i] - m) * is;
            gx[i] += static_cast<float>(g * is * (gout[i] - sum_dy / n - xhat * sum_dy_xhat / n));
          }
      }
    }
  });
  return result;
}

Tensor batch_norm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const std::vector<float>& running_mean,
                        const std::vector<float>& running_var, float epsilon) {
  if (!(epsilon > 0.0f)) throw ValueError("batch norm epsilon must be > 0");
  BnDims d = bn_dims(x);
  if (running_mean.size() != static_cast<std::size_t>(d.channels) ||
      running_var.size() != static_cast<std::size_t>(d.channels)) {
    throw ShapeError("batch norm running stats must have one entry per channel");
  }
  std::vector<float> out(x.size());
  const float* px = x.data();
  const float* pg = gamma.data();
  const float* pb = beta.data();
  std::vector<float> invstd(static_cast<std::size_t>(d.channels));
  for (int c = 0; c < d.channels; ++c) {
    float v = running_var[static_cast<std::size_t>(c)];
    if (v < 0.0f) throw ValueError("negative running variance in batch norm");
    invstd[static_cast<std::size_t>(c)] = 1.0f / std::sqrt(v + epsilon);
  }
  for (int c = 0; c < d.channels; ++c) {
    float m = running_mean[static_cast<std::size_t>(c)];
    float is = invstd[static_cast<std::size_t>(c)];
    for (int b = 0; b < d.batch; ++b)
      for (std::size_t s = 0; s < d.spatial; ++s) {
        std::size_t i = bn_index(d, b, c, s);
        out[i] = pg[c] * (px[i] - m) * is + pb[c];
      }
  }

  Tape* tape = nullptr;
  {
    const Tensor* ins[] = {&x, &gamma, &beta};
    for (const Tensor* in : ins) {
      if (in->on_tape()) {
        if (tape && tape != in->tape()) throw ValueError("operands belong to different tapes");
        tape = in->tape();
      }
    }
  }
  Tensor y(x.shape(), std::move(out));
  if (!tape) return y;

  int nx = x.node(), ng = gamma.node(), nb = beta.node();
  auto xbuf = x.buffer();
  auto gbuf = gamma.buffer();
  auto meanv = std::make_shared<std::vector<float>>(running_mean);
  auto invstdv = std::make_shared<std::vector<float>>(std::move(invstd));
  return tape->track(std::move(y), [=](const std::vector<float>& gout, Tape& t) {
    // running stats are constants here, so the map is a per-channel affine
    for (int c = 0; c < d.channels; ++c) {
      float m = (*meanv)[static_cast<std::size_t>(c)];
      float is = (*invstdv)[static_cast<std::size_t>(c)];
      float g = (*gbuf)[static_cast<std::size_t>(c)];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int b = 0; b < d.batch; ++b)
        for (std::size_t s = 0; s < d.spatial; ++s) {
          std::size_t i = bn_index(d, b, c, s);
          double xhat = ((*xbuf)[i] - m) * is;
          sum_dy += gout[i];
          sum_dy_xhat += gout[i] * xhat;
          if (nx >= 0) t.grad_buffer(nx)[i] += gout[i] * g * is;
        }
      if (nb >= 0) t.grad_buffer(nb)[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy);
      if (ng >= 0) t.grad_buffer(ng)[static_cast<std::size_t>(c)] += static_cast<float>(sum_dy_xhat);
    }
  });
}

}  // namespace rgan
