#include "rgan/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rgan {

namespace {

void check_probabilities(const Tensor& t, const char* name) {
  if (t.rank() != 2 || t.dim(1) != 1) {
    throw ShapeError(std::string(name) + " must be [batch,1], got " + shape_str(t.shape()));
  }
  for (int i = 0; i < t.dim(0); ++i) {
    if (!std::isfinite(t.data()[i])) {
      throw NumericError(std::string(name) + " is not finite at batch index " + std::to_string(i));
    }
  }
}

Tensor bce_against_ones(const Tensor& p) {
  return affine(mean(log(clamp(p, kProbEps, 1.0f - kProbEps))), -1.0f, 0.0f);
}

Tensor bce_against_zeros(const Tensor& p) {
  Tensor one_minus = affine(clamp(p, kProbEps, 1.0f - kProbEps), -1.0f, 1.0f);
  return affine(mean(log(one_minus)), -1.0f, 0.0f);
}

}  // namespace

GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake) {
  check_probabilities(d_real, "d_real");
  check_probabilities(d_fake, "d_fake");
  GanLosses out;
  out.d_loss = add(bce_against_ones(d_real), bce_against_zeros(d_fake));
  out.g_loss = bce_against_ones(d_fake);
  return out;
}

Tensor minimax_generator_objective(const Tensor& d_fake) {
  check_probabilities(d_fake, "d_fake");
  Tensor one_minus = affine(clamp(d_fake, kProbEps, 1.0f - kProbEps), -1.0f, 1.0f);
  return mean(log(one_minus));
}

std::pair<Tensor, std::vector<ConditionVector>> sample_noise_and_condition(
    int n, const TrainConfig& cfg, Rng& rng, const std::vector<std::int64_t>* class_weights) {
  if (n < 1) throw ValueError("sample count must be >= 1");
  if (cfg.class_count < 1) throw ValueError("config has no class count");
  Tensor z = Tensor::uniform({n, cfg.z_dim}, -1.0f, 1.0f, rng);
  std::vector<ConditionVector> ys;
  ys.reserve(static_cast<std::size_t>(n));
  bool empirical = cfg.condition_sampling == ConditionSampling::empirical && class_weights &&
                   !class_weights->empty();
  std::int64_t total = 0;
  if (empirical) {
    for (auto w : *class_weights) total += w;
    if (total <= 0) empirical = false;
  }
  for (int i = 0; i < n; ++i) {
    int cls;
    if (empirical) {
      std::int64_t pick = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
      cls = 0;
      for (std::int64_t acc = 0; cls < cfg.class_count; ++cls) {
        acc += (*class_weights)[static_cast<std::size_t>(cls)];
        if (pick < acc) break;
      }
      if (cls >= cfg.class_count) cls = cfg.class_count - 1;
    } else {
      cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.class_count)));
    }
    ys.push_back(ConditionVector{cls, cfg.class_count});
  }
  return {std::move(z), std::move(ys)};
}

TrainState::TrainState(const TrainConfig& config) : cfg(config), rng(config.seed) {
  cfg.validate();
  if (cfg.class_count < 1) throw ValueError("TrainState needs class_count >= 1");
  auto [g, d] = init_params(cfg, rng);
  gen = std::move(g);
  disc = std::move(d);
  label_histogram.assign(static_cast<std::size_t>(cfg.class_count), 0);
}

StepLosses train_step(TrainState& ts, const Tensor& real_images,
                      const std::vector<int>& real_counts) {
  const TrainConfig& cfg = ts.cfg;
  if (real_images.rank() != 4) throw ShapeError("real batch must be rank 4");
  int batch = real_images.dim(0);
  if (batch < 2) throw ValueError("train_step needs a batch of at least 2");
  if (static_cast<std::size_t>(batch) != real_counts.size()) {
    throw ShapeError("batch mismatch: " + std::to_string(batch) + " images vs " +
                     std::to_string(real_counts.size()) + " labels");
  }
  std::vector<ConditionVector> y_real;
  y_real.reserve(real_counts.size());
  for (int c : real_counts) y_real.push_back(make_condition(c, cfg.min_count, cfg.class_count));

  StepLosses out;
  for (int k = 0; k < cfg.d_steps; ++k) {
    out.d_loss = discriminator_phase(ts, real_images, y_real);
  }
  out.g_loss = generator_phase(ts, batch);
  ++ts.global_step;
  return out;
}

float discriminator_phase(TrainState& ts, const Tensor& real_images,
                          const std::vector<ConditionVector>& y_real) {
  const TrainConfig& cfg = ts.cfg;
  int batch = real_images.dim(0);
  auto [z, y_fake] = sample_noise_and_condition(batch, cfg, ts.rng, &ts.label_histogram);
  // fakes are data for this phase: no tape, no generator stat updates
  Tensor fake = generator_forward(z, y_fake, ts.gen, cfg, Mode::train, false);

  Tape tape;
  DiscriminatorParams d_att = attach(ts.disc, tape, "d");
  Tensor d_real = discriminator_forward(real_images, y_real, d_att, cfg, Mode::train, true);
  Tensor d_fake = discriminator_forward(fake, y_fake, d_att, cfg, Mode::train, true);
  GanLosses losses = gan_losses(d_real, d_fake);
  GradientMap grads = tape.backward(losses.d_loss);
  apply_updates(learnables(ts.disc, "d"), grads, ts.opt_d, cfg);
  return losses.d_loss.value();
}

float generator_phase(TrainState& ts, int batch) {
  const TrainConfig& cfg = ts.cfg;
  auto [z, y_fake] = sample_noise_and_condition(batch, cfg, ts.rng, &ts.label_histogram);
  Tape tape;
  GeneratorParams g_att = attach(ts.gen, tape, "g");
  Tensor fake = generator_forward(z, y_fake, g_att, cfg, Mode::train, true);
  // discriminator acts as a frozen critic: plain parameters, no stat updates
  Tensor d_fake = discriminator_forward(fake, y_fake, ts.disc, cfg, Mode::train, false);
  Tensor g_metric = affine(mean(log(clamp(d_fake, kProbEps, 1.0f - kProbEps))), -1.0f, 0.0f);
  Tensor objective =
      cfg.gen_loss == GenLossKind::minimax ? minimax_generator_objective(d_fake) : g_metric;
  GradientMap grads = tape.backward(objective);
  apply_updates(learnables(ts.gen, "g"), grads, ts.opt_g, cfg);
  return g_metric.value();
}

Tensor tile_grid(const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw ShapeError("tile_grid expects [B,3,H,W]");
  int b = batch.dim(0), h = batch.dim(2), w = batch.dim(3);
  int cols = 1;
  while (cols * cols < b) ++cols;
  int rows = (b + cols - 1) / cols;
  Tensor grid = Tensor::full({3, rows * h, cols * w}, -1.0f);
  for (int i = 0; i < b; ++i) {
    int r = i / cols, c = i % cols;
    for (int ch = 0; ch < 3; ++ch) {
      const float* src = batch.data() + ((static_cast<std::size_t>(i) * 3 + ch) * h) * w;
      float* dst = grid.data() + (static_cast<std::size_t>(ch) * rows * h + static_cast<std::size_t>(r) * h) *
                       (static_cast<std::size_t>(cols) * w) +
                   static_cast<std::size_t>(c) * w;
      for (int y = 0; y < h; ++y) {
        std::copy_n(src + static_cast<std::size_t>(y) * w, w,
                    dst + static_cast<std::size_t>(y) * cols * w);
      }
    }
  }
  return grid;
}

Checkpoint make_checkpoint(TrainState& ts) {
  Checkpoint c;
  c.config = ts.cfg;
  c.state["_rng"] = ts.rng.state_string();
  c.state["_epoch"] = std::to_string(ts.epoch);
  c.state["_global_step"] = std::to_string(ts.global_step);
  c.state["_adam_t_g"] = std::to_string(ts.opt_g.step);
  c.state["_adam_t_d"] = std::to_string(ts.opt_d.step);
  {
    std::ostringstream hist;
    for (std::size_t i = 0; i < ts.label_histogram.size(); ++i) {
      if (i) hist << ' ';
      hist << ts.label_histogram[i];
    }
    c.state["_label_histogram"] = hist.str();
  }
  auto push_all = [&c](auto& params, const std::string& prefix) {
    visit_params(params, prefix, [&c](const std::string& name, Tensor& t, ParamKind) {
      c.tensors.emplace_back(name, t);
    });
  };
  push_all(ts.gen, "g");
  push_all(ts.disc, "d");
  for (const auto& [name, t] : ts.opt_g.m) c.tensors.emplace_back("m/" + name, t);
  for (const auto& [name, t] : ts.opt_g.v) c.tensors.emplace_back("v/" + name, t);
  for (const auto& [name, t] : ts.opt_d.m) c.tensors.emplace_back("m/" + name, t);
  for (const auto& [name, t] : ts.opt_d.v) c.tensors.emplace_back("v/" + name, t);
  return c;
}

TrainState restore_checkpoint(const Checkpoint& c) {
  TrainState ts(c.config);
  auto state_at = [&c](const std::string& key) -> const std::string& {
    auto it = c.state.find(key);
    if (it == c.state.end()) throw CheckpointError("checkpoint is missing state key '" + key + "'");
    return it->second;
  };
  ts.rng = Rng::from_state(state_at("_rng"));
  ts.epoch = std::stoi(state_at("_epoch"));
  ts.global_step = std::stoll(state_at("_global_step"));
  ts.opt_g.step = std::stoll(state_at("_adam_t_g"));
  ts.opt_d.step = std::stoll(state_at("_adam_t_d"));
  {
    std::istringstream hist(state_at("_label_histogram"));
    for (auto& v : ts.label_histogram) {
      if (!(hist >> v)) throw CheckpointError("bad _label_histogram in checkpoint");
    }
  }

  std::size_t used = 0;
  auto load_all = [&c, &used](auto& params, const std::string& prefix) {
    visit_params(params, prefix, [&c, &used](const std::string& name, Tensor& t, ParamKind) {
      const Tensor* stored = c.find(name);
      if (!stored) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
      if (stored->shape() != t.shape()) {
        throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                              shape_str(stored->shape()) + ", expected " + shape_str(t.shape()));
      }
      t = stored->clone();
      ++used;
    });
  };
  load_all(ts.gen, "g");
  load_all(ts.disc, "d");
  for (const auto& [name, t] : c.tensors) {
    if (name.rfind("m/", 0) == 0 || name.rfind("v/", 0) == 0) {
      std::string param = name.substr(2);
      bool is_g = param.rfind("g/", 0) == 0;
      OptimizerState& opt = is_g ? ts.opt_g : ts.opt_d;
      (name[0] == 'm' ? opt.m : opt.v)[param] = t.clone();
      ++used;
    }
  }
  if (used != c.tensors.size()) {
    throw CheckpointError("checkpoint contains " + std::to_string(c.tensors.size() - used) +
                          " unrecognized tensor(s)");
  }
  return ts;
}

namespace {

Tensor stack_batch(const std::vector<ImageSample>& batch) {
  int b = static_cast<int>(batch.size());
  int h = batch.front().pixels.dim(1), w = batch.front().pixels.dim(2);
  Tensor out({b, 3, h, w});
  std::size_t per = static_cast<std::size_t>(3) * h * w;
  for (int i = 0; i < b; ++i) {
    if (batch[static_cast<std::size_t>(i)].pixels.size() != per) {
      throw ShapeError("inconsistent image sizes in a batch");
    }
    std::copy_n(batch[static_cast<std::size_t>(i)].pixels.data(), per,
                out.data() + static_cast<std::size_t>(i) * per);
  }
  return out;
}

void write_sample_grid(TrainState& ts, const std::filesystem::path& path) {
  // fixed noise/conditions derived from the seed, independent of the
  // training stream so resuming cannot perturb it
  Rng grid_rng(ts.cfg.seed ^ 0x67726964ull);
  int n = ts.cfg.sample_grid * ts.cfg.sample_grid;
  auto [z, ys] = sample_noise_and_condition(n, ts.cfg, grid_rng, &ts.label_histogram);
  Tensor images = generator_forward(z, ys, ts.gen, ts.cfg, Mode::infer);
  write_png(path, unit_to_rgb8(tile_grid(images)));
}

std::string checkpoint_name(int epoch) {
  std::ostringstream name;
  name << "checkpoint_";
  std::string num = std::to_string(epoch);
  for (int pad = 4 - static_cast<int>(num.size()); pad > 0; --pad) name << '0';
  name << num << ".bin";
  return name.str();
}

}  // namespace

TrainingHistory train(const Dataset& data, const TrainConfig& cfg,
                      const std::filesystem::path& out_dir,
                      const std::optional<std::filesystem::path>& resume) {
  if (data.size() == 0) throw ValueError("training dataset is empty");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  // Derive the class range before building anything, and validate every label.
  TrainConfig cfg_full = cfg;
  {
    int lo = 0, hi = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      int c = data.at(i).leaf_count;
      if (i == 0) {
        lo = hi = c;
      } else {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
    if (cfg_full.class_count == 0) {
      cfg_full.min_count = lo;
      cfg_full.class_count = hi - lo + 1;
    } else if (lo < cfg_full.min_count || hi >= cfg_full.min_count + cfg_full.class_count) {
      throw ValueError("dataset labels [" + std::to_string(lo) + "," + std::to_string(hi) +
                       "] fall outside the configured class range [" +
                       std::to_string(cfg_full.min_count) + "," +
                       std::to_string(cfg_full.min_count + cfg_full.class_count) + ")");
    }
  }

  TrainState ts = resume ? restore_checkpoint(load_checkpoint(*resume)) : TrainState(cfg_full);
  if (resume) {
    // the architecture is pinned by the checkpoint; only schedule-ish fields may differ
    TrainConfig& rc = ts.cfg;
    if (rc.resolution != cfg_full.resolution || rc.z_dim != cfg_full.z_dim ||
        rc.fc1_width != cfg_full.fc1_width || rc.base_width != cfg_full.base_width ||
        rc.class_count != cfg_full.class_count || rc.min_count != cfg_full.min_count ||
        rc.kernel_size != cfg_full.kernel_size || rc.bn_edge_layers != cfg_full.bn_edge_layers) {
      throw ValueError("resume config does not match the checkpoint architecture");
    }
    rc.epochs = cfg_full.epochs;
    rc.checkpoint_interval = cfg_full.checkpoint_interval;
  }

  // label histogram, consulted only when condition sampling is empirical
  std::fill(ts.label_histogram.begin(), ts.label_histogram.end(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    ts.label_histogram[static_cast<std::size_t>(data.at(i).leaf_count - ts.cfg.min_count)]++;
  }

  TrainingHistory history;
  if (!resume) {
    std::filesystem::path initial = out_dir / checkpoint_name(0);
    Checkpoint c = make_checkpoint(ts);
    save_checkpoint(c, initial);
    history.initial_checkpoint = initial.string();
    if (ts.cfg.epochs > 0) {
      // pre-training grid, the baseline the per-epoch grids evolve from
      write_sample_grid(ts, out_dir / "samples_epoch_0000.png");
    }
  }

  int batch_size = ts.cfg.effective_batch_size();
  std::vector<std::size_t> order(data.size());

  std::ofstream hist_csv(out_dir / "history.csv", resume ? std::ios::app : std::ios::out);
  if (!resume) hist_csv << "epoch,d_loss,g_loss,sample,checkpoint\n";

  for (int epoch = ts.epoch; epoch < ts.cfg.epochs; ++epoch) {
    // shuffle from the identity so the order is a function of the rng state
    // alone and resuming reproduces the uninterrupted run
    std::iota(order.begin(), order.end(), std::size_t{0});
    ts.rng.shuffle(order);
    double d_sum = 0.0, g_sum = 0.0;
    int steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      if (end - begin < 2) break;  // batch norm needs at least 2 examples
      std::vector<ImageSample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(data.at(order[i]));
      std::vector<int> counts;
      counts.reserve(batch.size());
      for (const auto& s : batch) counts.push_back(s.leaf_count);
      StepLosses losses = train_step(ts, stack_batch(batch), counts);
      d_sum += losses.d_loss;
      g_sum += losses.g_loss;
      ++steps;
    }
    if (steps == 0) throw ValueError("dataset too small for even one batch of 2");
    ts.epoch = epoch + 1;

    EpochRecord rec;
    rec.epoch = ts.epoch;
    rec.d_loss = static_cast<float>(d_sum / steps);
    rec.g_loss = static_cast<float>(g_sum / steps);

    std::ostringstream sample_name;
    sample_name << "samples_epoch_";
    std::string num = std::to_string(ts.epoch);
    for (int pad = 4 - static_cast<int>(num.size()); pad > 0; --pad) sample_name << '0';
    sample_name << num << ".png";
    std::filesystem::path sample_path = out_dir / sample_name.str();
    write_sample_grid(ts, sample_path);
    rec.sample_path = sample_path.string();

    if (ts.epoch % ts.cfg.checkpoint_interval == 0 || ts.epoch == ts.cfg.epochs) {
      std::filesystem::path ckpt = out_dir / checkpoint_name(ts.epoch);
      Checkpoint c = make_checkpoint(ts);
      save_checkpoint(c, ckpt);
      rec.checkpoint_path = ckpt.string();
    }
    hist_csv << rec.epoch << "," << rec.d_loss << "," << rec.g_loss << "," << rec.sample_path << ","
             << rec.checkpoint_path << "\n";
    history.epochs.push_back(std::move(rec));
  }
  return history;
}

}  // namespace rgan
