#include "rgan/models.hpp"

#include <algorithm>

namespace rgan {

std::vector<float> ConditionVector::one_hot() const {
  std::vector<float> v(static_cast<std::size_t>(num_classes), 0.0f);
  v[static_cast<std::size_t>(class_index)] = 1.0f;
  return v;
}

ConditionVector make_condition(int leaf_count, int min_count, int num_classes) {
  if (num_classes < 1) throw ValueError("condition needs at least one class");
  if (leaf_count < min_count || leaf_count >= min_count + num_classes) {
    throw ValueError("leaf count " + std::to_string(leaf_count) + " outside the valid interval [" +
                     std::to_string(min_count) + ", " + std::to_string(min_count + num_classes) +
                     ")");
  }
  return ConditionVector{leaf_count - min_count, num_classes};
}

Tensor spatial_replicate(const ConditionVector& y, int h, int w) {
  if (h < 1 || w < 1) throw ValueError("spatial_replicate needs positive dimensions");
  Tensor t({y.num_classes, h, w});
  std::size_t plane = static_cast<std::size_t>(h) * w;
  std::fill_n(t.data() + static_cast<std::size_t>(y.class_index) * plane, plane, 1.0f);
  return t;
}

namespace {

int batch_classes(const std::vector<ConditionVector>& ys) {
  if (ys.empty()) throw ValueError("empty condition batch");
  int c = ys.front().num_classes;
  for (const auto& y : ys) {
    if (y.num_classes != c) throw ValueError("mixed class counts in a condition batch");
    if (y.class_index < 0 || y.class_index >= c) throw ValueError("condition class out of range");
  }
  return c;
}

}  // namespace

Tensor condition_rows(const std::vector<ConditionVector>& ys) {
  int c = batch_classes(ys);
  int b = static_cast<int>(ys.size());
  Tensor t({b, c});
  for (int i = 0; i < b; ++i) {
    t.data()[static_cast<std::size_t>(i) * c + ys[static_cast<std::size_t>(i)].class_index] = 1.0f;
  }
  return t;
}

Tensor condition_planes(const std::vector<ConditionVector>& ys, int h, int w) {
  int c = batch_classes(ys);
  int b = static_cast<int>(ys.size());
  Tensor t({b, c, h, w});
  std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < b; ++i) {
    std::size_t base = (static_cast<std::size_t>(i) * c +
                        static_cast<std::size_t>(ys[static_cast<std::size_t>(i)].class_index)) *
                       plane;
    std::fill_n(t.data() + base, plane, 1.0f);
  }
  return t;
}

GanArch derive_arch(const TrainConfig& cfg) {
  cfg.validate();
  GanArch a;
  a.layers = cfg.num_layers();
  int shift = a.layers - 2;
  if (shift < 0) shift = 0;
  if (shift > 3) shift = 3;
  a.start_channels = cfg.base_width << shift;
  a.g_in.resize(static_cast<std::size_t>(a.layers));
  a.g_out.resize(static_cast<std::size_t>(a.layers));
  int ch = a.start_channels;
  for (int i = 0; i < a.layers; ++i) {
    a.g_in[static_cast<std::size_t>(i)] = ch;
    int next = i == a.layers - 1 ? 3 : std::max(cfg.base_width, ch / 2);
    a.g_out[static_cast<std::size_t>(i)] = next;
    ch = next;
  }
  // discriminator stage i consumes what generator stage (layers - i) produces
  a.d_in.resize(static_cast<std::size_t>(a.layers));
  a.d_out.resize(static_cast<std::size_t>(a.layers));
  for (int i = 0; i < a.layers; ++i) {
    a.d_out[static_cast<std::size_t>(i)] = a.g_in[static_cast<std::size_t>(a.layers - 1 - i)];
    a.d_in[static_cast<std::size_t>(i)] = i == 0 ? 3 : a.d_out[static_cast<std::size_t>(i - 1)];
  }
  return a;
}

std::pair<GeneratorParams, DiscriminatorParams> init_params(const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.class_count < 1) throw ValueError("init_params needs class_count >= 1");
  GanArch arch = derive_arch(cfg);
  int C = cfg.class_count;

  GeneratorParams g;
  g.fc1 = make_fc(cfg.z_dim + C, cfg.fc1_width);
  g.bn_fc1 = make_batch_norm(cfg.fc1_width, cfg.bn_momentum, cfg.bn_epsilon);
  int fc2_out = arch.start_channels * 16;
  g.fc2 = make_fc(cfg.fc1_width + C, fc2_out);
  g.bn_fc2 = make_batch_norm(fc2_out, cfg.bn_momentum, cfg.bn_epsilon);
  for (int i = 0; i < arch.layers; ++i) {
    g.deconv.push_back(make_deconv(arch.g_in[static_cast<std::size_t>(i)] + C,
                                   arch.g_out[static_cast<std::size_t>(i)], cfg.kernel_size,
                                   cfg.stride));
  }
  int g_bn_stages = cfg.bn_edge_layers ? arch.layers : arch.layers - 1;
  for (int i = 0; i < g_bn_stages; ++i) {
    g.bn_deconv.push_back(
        make_batch_norm(arch.g_out[static_cast<std::size_t>(i)], cfg.bn_momentum, cfg.bn_epsilon));
  }

  DiscriminatorParams d;
  for (int i = 0; i < arch.layers; ++i) {
    d.conv.push_back(make_conv(arch.d_in[static_cast<std::size_t>(i)] + C,
                               arch.d_out[static_cast<std::size_t>(i)], cfg.kernel_size,
                               cfg.stride));
  }
  // stage 1 is unnormalized unless edge layers are requested
  for (int i = cfg.bn_edge_layers ? 0 : 1; i < arch.layers; ++i) {
    d.bn_conv.push_back(
        make_batch_norm(arch.d_out[static_cast<std::size_t>(i)], cfg.bn_momentum, cfg.bn_epsilon));
  }
  d.fc_out = make_fc(arch.d_out.back() * 16 + C, 1);

  auto fill = [&rng](const std::string& name, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::learnable && name.size() > 7 &&
        name.compare(name.size() - 7, 7, ".weight") == 0) {
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0f, 0.02f);
    }
  };
  visit_params(g, "g", fill);
  visit_params(d, "d", fill);
  return {std::move(g), std::move(d)};
}

namespace {

void check_batch(std::size_t tensor_batch, std::size_t cond_batch) {
  if (tensor_batch != cond_batch) {
    throw ShapeError("batch mismatch: " + std::to_string(tensor_batch) + " examples vs " +
                     std::to_string(cond_batch) + " conditions");
  }
}

}  // namespace

Tensor generator_forward(const Tensor& z, const std::vector<ConditionVector>& y,
                         GeneratorParams& p, const TrainConfig& cfg, Mode mode,
                         bool update_stats) {
  if (z.rank() != 2 || z.dim(1) != cfg.z_dim) {
    throw ShapeError("generator noise must be [batch," + std::to_string(cfg.z_dim) + "], got " +
                     shape_str(z.shape()));
  }
  check_batch(static_cast<std::size_t>(z.dim(0)), y.size());
  GanArch arch = derive_arch(cfg);
  int batch = z.dim(0);
  bool stats = update_stats && mode == Mode::train;

  Tensor y_rows = condition_rows(y);
  Tensor h = fully_connected(concat_cols(z, y_rows), p.fc1);
  h = batch_norm(h, p.bn_fc1, mode, stats);
  h = relu(h);
  h = fully_connected(concat_cols(h, y_rows), p.fc2);
  h = batch_norm(h, p.bn_fc2, mode, stats);
  h = relu(h);
  h = reshape(h, {batch, arch.start_channels, 4, 4});

  int side = 4;
  for (int i = 0; i < arch.layers; ++i) {
    h = concat_channels(h, condition_planes(y, side, side));
    h = deconv2d_layer(h, p.deconv[static_cast<std::size_t>(i)]);
    side *= 2;
    bool last = i == arch.layers - 1;
    if (static_cast<std::size_t>(i) < p.bn_deconv.size()) {
      h = batch_norm(h, p.bn_deconv[static_cast<std::size_t>(i)], mode, stats);
    }
    h = last ? tanh(h) : relu(h);
  }
  return h;
}

Tensor discriminator_forward(const Tensor& x, const std::vector<ConditionVector>& y,
                             DiscriminatorParams& p, const TrainConfig& cfg, Mode mode,
                             bool update_stats) {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.resolution || x.dim(3) != cfg.resolution) {
    throw ShapeError("discriminator input must be [batch,3," + std::to_string(cfg.resolution) +
                     "," + std::to_string(cfg.resolution) + "], got " + shape_str(x.shape()));
  }
  check_batch(static_cast<std::size_t>(x.dim(0)), y.size());
  GanArch arch = derive_arch(cfg);
  int batch = x.dim(0);
  bool stats = update_stats && mode == Mode::train;

  Tensor h = x;
  int side = cfg.resolution;
  int bn_index = 0;
  int first_bn_stage = cfg.bn_edge_layers ? 0 : 1;
  for (int i = 0; i < arch.layers; ++i) {
    h = concat_channels(h, condition_planes(y, side, side));
    h = conv2d_layer(h, p.conv[static_cast<std::size_t>(i)]);
    side /= 2;
    if (i >= first_bn_stage && static_cast<std::size_t>(bn_index) < p.bn_conv.size()) {
      h = batch_norm(h, p.bn_conv[static_cast<std::size_t>(bn_index++)], mode, stats);
    }
    h = leaky_relu(h, cfg.leaky_alpha);
  }
  h = reshape(h, {batch, arch.d_out.back() * 16});
  h = concat_cols(h, condition_rows(y));
  h = fully_connected(h, p.fc_out);
  return sigmoid(h);
}

GeneratorParams attach(const GeneratorParams& p, Tape& tape, const std::string& prefix) {
  GeneratorParams copy = p;
  visit_params(copy, prefix, [&tape](const std::string& name, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::learnable) t = tape.leaf(t, name);
  });
  return copy;
}

DiscriminatorParams attach(const DiscriminatorParams& p, Tape& tape, const std::string& prefix) {
  DiscriminatorParams copy = p;
  visit_params(copy, prefix, [&tape](const std::string& name, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::learnable) t = tape.leaf(t, name);
  });
  return copy;
}

}  // namespace rgan
