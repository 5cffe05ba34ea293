#pragma once

#include <string>

#include "rgan/tensor.hpp"

namespace rgan {

enum class Mode { train, infer };

enum class Act { relu, leaky_relu, tanh, sigmoid };

enum class ParamKind { learnable, state };

struct FcParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

/// Parameters of a strided (de)convolution. The weight always uses the
/// convolution orientation [conv_out, conv_in, K, K]; a transposed layer
/// mapping `in` channels to `out` therefore stores its weight as
/// [in, out, K, K], which is exactly what makes conv2d and deconv2d adjoint
/// with a shared tensor.
struct Conv2dParams {
  Tensor weight;
  Tensor bias;  // [layer output channels]
  int stride = 2;
  int pad = 2;
};

struct BatchNormParams {
  Tensor gamma;  // [channels]
  Tensor beta;
  Tensor running_mean;  // state, biased variance convention
  Tensor running_var;
  float momentum = 0.9f;
  float epsilon = 1e-5f;
};

FcParams make_fc(int in, int out);
/// Forward conv layer: in -> out channels, odd kernel, same-style padding
/// (out spatial = ceil(H / stride)).
Conv2dParams make_conv(int in, int out, int kernel = 5, int stride = 2);
/// Transposed conv layer: in -> out channels (out spatial = stride * H).
Conv2dParams make_deconv(int in, int out, int kernel = 5, int stride = 2);
BatchNormParams make_batch_norm(int channels, float momentum = 0.9f, float epsilon = 1e-5f);

/// x [batch, in] -> x*w + b.
Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor fully_connected(const Tensor& x, const FcParams& p);

/// Strided conv with bias; spatial dims shrink to ceil(H/stride).
Tensor conv2d_layer(const Tensor& x, const Conv2dParams& p);

/// Transposed conv with bias; spatial dims grow to stride*H exactly.
Tensor deconv2d_layer(const Tensor& x, const Conv2dParams& p);

/// Batch normalization. Train mode normalizes with batch statistics and,
/// when update_running is set, folds them into the running averages
/// (running = momentum*running + (1-momentum)*batch). Infer mode uses the
/// running statistics only.
Tensor batch_norm(const Tensor& x, BatchNormParams& p, Mode mode, bool update_running = true);

Tensor activation(Act kind, const Tensor& x, float alpha = 0.2f);

template <class F>
void visit_params(FcParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".weight", p.weight, ParamKind::learnable);
  f(prefix + ".bias", p.bias, ParamKind::learnable);
}

template <class F>
void visit_params(Conv2dParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".weight", p.weight, ParamKind::learnable);
  f(prefix + ".bias", p.bias, ParamKind::learnable);
}

template <class F>
void visit_params(BatchNormParams& p, const std::string& prefix, F&& f) {
  f(prefix + ".gamma", p.gamma, ParamKind::learnable);
  f(prefix + ".beta", p.beta, ParamKind::learnable);
  f(prefix + ".running_mean", p.running_mean, ParamKind::state);
  f(prefix + ".running_var", p.running_var, ParamKind::state);
}

}  // namespace rgan
