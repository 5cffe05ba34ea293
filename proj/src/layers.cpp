#include "rgan/layers.hpp"

namespace rgan {

FcParams make_fc(int in, int out) {
  if (in < 1 || out < 1) throw ValueError("fully connected layer needs positive sizes");
  return FcParams{Tensor({in, out}), Tensor({out})};
}

Conv2dParams make_conv(int in, int out, int kernel, int stride) {
  if (kernel < 1 || kernel % 2 == 0) throw ValueError("conv kernel must be odd and positive");
  if (stride < 1) throw ValueError("conv stride must be positive");
  Conv2dParams p;
  p.weight = Tensor({out, in, kernel, kernel});
  p.bias = Tensor({out});
  p.stride = stride;
  p.pad = kernel / 2;
  return p;
}

Conv2dParams make_deconv(int in, int out, int kernel, int stride) {
  if (kernel < 1 || kernel % 2 == 0) throw ValueError("deconv kernel must be odd and positive");
  if (stride < 1) throw ValueError("deconv stride must be positive");
  Conv2dParams p;
  p.weight = Tensor({in, out, kernel, kernel});  // conv orientation of the adjoint
  p.bias = Tensor({out});
  p.stride = stride;
  p.pad = kernel / 2;
  return p;
}

BatchNormParams make_batch_norm(int channels, float momentum, float epsilon) {
  BatchNormParams p;
  p.gamma = Tensor::full({channels}, 1.0f);
  p.beta = Tensor({channels});
  p.running_mean = Tensor({channels});
  p.running_var = Tensor::full({channels}, 1.0f);
  p.momentum = momentum;
  p.epsilon = epsilon;
  return p;
}

Tensor fully_connected(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

Tensor fully_connected(const Tensor& x, const FcParams& p) {
  return fully_connected(x, p.weight, p.bias);
}

Tensor conv2d_layer(const Tensor& x, const Conv2dParams& p) {
  return add(conv2d(x, p.weight, p.stride, p.pad), p.bias);
}

Tensor deconv2d_layer(const Tensor& x, const Conv2dParams& p) {
  // odd kernel + same padding: out_pad = stride-1 makes the output exactly stride*H
  return add(deconv2d(x, p.weight, p.stride, p.pad, p.stride - 1), p.bias);
}

Tensor batch_norm(const Tensor& x, BatchNormParams& p, Mode mode, bool update_running) {
  if (mode == Mode::infer) {
    return batch_norm_infer(x, p.gamma, p.beta, p.running_mean.vec(), p.running_var.vec(),
                            p.epsilon);
  }
  BatchNormResult r = batch_norm_train(x, p.gamma, p.beta, p.epsilon);
  if (update_running) {
    float* rm = p.running_mean.data();
    float* rv = p.running_var.data();
    for (std::size_t c = 0; c < r.batch_mean.size(); ++c) {
      rm[c] = p.momentum * rm[c] + (1.0f - p.momentum) * r.batch_mean[c];
      rv[c] = p.momentum * rv[c] + (1.0f - p.momentum) * r.batch_var[c];
    }
  }
  return r.y;
}

Tensor activation(Act kind, const Tensor& x, float alpha) {
  switch (kind) {
    case Act::relu: return relu(x);
    case Act::leaky_relu: return leaky_relu(x, alpha);
    case Act::tanh: return tanh(x);
    case Act::sigmoid: return sigmoid(x);
  }
  throw ValueError("unknown activation");
}

}  // namespace rgan
