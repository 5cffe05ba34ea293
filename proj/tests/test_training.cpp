#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rgan/training.hpp"
#include "support/toy_gan.hpp"

using namespace rgan;

namespace {

TrainConfig tiny_cfg() {
  TrainConfig cfg;
  cfg.resolution = 16;
  cfg.z_dim = 8;
  cfg.fc1_width = 16;
  cfg.base_width = 4;
  cfg.class_count = 3;
  cfg.min_count = 3;
  cfg.batch_size = 8;
  cfg.seed = 11;
  return cfg;
}

std::vector<ImageSample> rosette_pool(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageSample> out;
  for (int i = 0; i < n; ++i) out.push_back(synth_rosette(3 + i % 3, size, rng));
  return out;
}

std::pair<Tensor, std::vector<int>> stack(const std::vector<ImageSample>& pool, std::size_t from,
                                          int n) {
  int h = pool.front().pixels.dim(1);
  Tensor batch({n, 3, h, h});
  std::vector<int> counts;
  std::size_t per = pool.front().pixels.size();
  for (int i = 0; i < n; ++i) {
    const ImageSample& s = pool[from + static_cast<std::size_t>(i)];
    std::copy_n(s.pixels.data(), per, batch.data() + static_cast<std::size_t>(i) * per);
    counts.push_back(s.leaf_count);
  }
  return {std::move(batch), std::move(counts)};
}

std::map<std::string, std::vector<float>> snapshot(TrainState& ts, bool include_state) {
  std::map<std::string, std::vector<float>> out;
  auto grab = [&out, include_state](const std::string& name, Tensor& t, ParamKind kind) {
    if (kind == ParamKind::learnable || include_state) out[name] = t.vec();
  };
  visit_params(ts.gen, "g", grab);
  visit_params(ts.disc, "d", grab);
  return out;
}

}  // namespace

TEST_CASE("gan_losses") {
  SUBCASE("uninformative discriminator sits at 2 ln 2") {
    Tensor half({2, 1}, {0.5f, 0.5f});
    GanLosses l = gan_losses(half, half);
    CHECK(std::abs(l.d_loss.value() - 2.0 * std::log(2.0)) < 1e-6);
    CHECK(std::abs(l.g_loss.value() - std::log(2.0)) < 1e-6);
  }

  SUBCASE("a perfect discriminator drives d_loss to zero") {
    Tensor ones({2, 1}, {1.0f - 1e-6f, 1.0f - 1e-6f});
    Tensor zeros({2, 1}, {1e-6f, 1e-6f});
    GanLosses l = gan_losses(ones, zeros);
    CHECK(l.d_loss.value() < 1e-4);
  }

  SUBCASE("matches the scalar-loop oracle on random probabilities") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      int n = 1 + static_cast<int>(rng.below(8));
      Tensor d_real = Tensor::uniform({n, 1}, 1e-4f, 1.0f - 1e-4f, rng);
      Tensor d_fake = Tensor::uniform({n, 1}, 1e-4f, 1.0f - 1e-4f, rng);
      GanLosses got = gan_losses(d_real, d_fake);
      oracle::BceResult want = oracle::bce(d_real.vec(), d_fake.vec(), 1e-7);
      CHECK(std::abs(got.d_loss.value() - want.d_loss) < 1e-6);
      CHECK(std::abs(got.g_loss.value() - want.g_loss) < 1e-6);
    }
  }

  SUBCASE("NaN probabilities are reported with the batch index") {
    Tensor bad({3, 1}, {0.5f, std::nanf(""), 0.5f});
    Tensor ok({3, 1}, {0.5f, 0.5f, 0.5f});
    try {
      gan_losses(ok, bad);
      FAIL("expected numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
  }

  SUBCASE("losses stay finite and non-negative after clamping") {
    Tensor extreme({2, 1}, {1.0f, 0.0f});
    GanLosses l = gan_losses(extreme, extreme);
    CHECK(std::isfinite(l.d_loss.value()));
    CHECK(std::isfinite(l.g_loss.value()));
    CHECK(l.d_loss.value() >= 0.0f);
    CHECK(l.g_loss.value() >= 0.0f);
  }
}

TEST_CASE("sample_noise_and_condition") {
  TrainConfig cfg = tiny_cfg();
  cfg.class_count = 4;

  SUBCASE("class frequencies sit inside the binomial 6-sigma band") {
    Rng rng(3);
    auto [z, ys] = sample_noise_and_condition(1000, cfg, rng);
    std::vector<int> freq(4, 0);
    for (const auto& y : ys) freq[static_cast<std::size_t>(y.class_index)]++;
    for (int c = 0; c < 4; ++c) {
      double f = freq[static_cast<std::size_t>(c)] / 1000.0;
      CHECK(f >= 0.19);  // 0.25 +- 6*sqrt(0.25*0.75/1000) ~ [0.168, 0.332]
      CHECK(f <= 0.31);
    }
  }

  SUBCASE("noise lies in [-1,1)") {
    Rng rng(4);
    auto [z, ys] = sample_noise_and_condition(64, cfg, rng);
    for (std::size_t i = 0; i < z.size(); ++i) {
      CHECK(z.data()[i] >= -1.0f);
      CHECK(z.data()[i] < 1.0f);
    }
  }

  SUBCASE("fixed seed reproduces the batch") {
    Rng a(5), b(5);
    auto [za, ya] = sample_noise_and_condition(16, cfg, a);
    auto [zb, yb] = sample_noise_and_condition(16, cfg, b);
    CHECK(za.vec() == zb.vec());
    for (std::size_t i = 0; i < ya.size(); ++i) CHECK(ya[i].class_index == yb[i].class_index);
  }

  SUBCASE("empirical sampling follows the label histogram") {
    TrainConfig ecfg = cfg;
    ecfg.condition_sampling = ConditionSampling::empirical;
    std::vector<std::int64_t> hist{0, 900, 100, 0};
    Rng rng(6);
    auto [z, ys] = sample_noise_and_condition(2000, ecfg, rng, &hist);
    std::vector<int> freq(4, 0);
    for (const auto& y : ys) freq[static_cast<std::size_t>(y.class_index)]++;
    CHECK(freq[0] == 0);
    CHECK(freq[3] == 0);
    CHECK(freq[1] > 1600);
  }
}

TEST_CASE("train_step alternation contract") {
  TrainConfig cfg = tiny_cfg();
  std::vector<ImageSample> pool = rosette_pool(8, 16, 21);
  auto [batch, counts] = stack(pool, 0, 8);

  SUBCASE("the discriminator phase changes theta_d only") {
    TrainState ts(cfg);
    auto g_before = snapshot(ts, true);  // generator tensors including BN stats
    auto d_before = snapshot(ts, false);
    std::vector<ConditionVector> ys;
    for (int c : counts) ys.push_back(make_condition(c, cfg.min_count, cfg.class_count));
    discriminator_phase(ts, batch, ys);
    auto g_after = snapshot(ts, true);
    double d_delta = 0.0;
    visit_params(ts.disc, "d", [&](const std::string& name, Tensor& t, ParamKind kind) {
      if (kind != ParamKind::learnable) return;
      const auto& before = d_before.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) {
        d_delta += std::abs(static_cast<double>(t.data()[i]) - before[i]);
      }
    });
    CHECK(d_delta > 0.0);
    // generator untouched, bitwise, including its running statistics
    for (const auto& [name, values] : g_before) {
      if (name.rfind("g/", 0) == 0) CHECK(g_after.at(name) == values);
    }
  }

  SUBCASE("the generator phase changes theta_g only") {
    TrainState ts(cfg);
    std::vector<ConditionVector> ys;
    for (int c : counts) ys.push_back(make_condition(c, cfg.min_count, cfg.class_count));
    discriminator_phase(ts, batch, ys);
    auto all_before = snapshot(ts, true);
    generator_phase(ts, 8);
    auto all_after = snapshot(ts, true);
    bool g_changed = false;
    for (const auto& [name, values] : all_before) {
      if (name.rfind("d/", 0) == 0) {
        CHECK(all_after.at(name) == values);  // discriminator frozen, stats included
      } else if (all_after.at(name) != values) {
        g_changed = true;
      }
    }
    CHECK(g_changed);
  }

  SUBCASE("zero learning rate leaves parameters bit-identical") {
    TrainConfig zcfg = cfg;
    zcfg.learning_rate = 0.0f;
    TrainState ts(zcfg);
    auto before = snapshot(ts, false);
    StepLosses losses = train_step(ts, batch, counts);
    CHECK(std::isfinite(losses.d_loss));
    CHECK(std::isfinite(losses.g_loss));
    auto after = snapshot(ts, false);
    for (const auto& [name, values] : before) CHECK(after.at(name) == values);
  }

  SUBCASE("degenerate batches are rejected") {
    TrainState ts(cfg);
    auto [one, one_count] = stack(pool, 0, 1);
    CHECK_THROWS_AS(train_step(ts, one, one_count), ValueError);
  }
}

TEST_CASE("one small generator step on a frozen critic reduces g_loss") {
  // descent property at lr 1e-4, plain SGD, first step only
  Rng rng(55);
  toy::ToyGan gan = toy::make_toy_gan(4, 16, 1e-4f, rng);
  gan.opt_cfg.optimizer = OptimizerKind::sgd;
  toy::ToyTarget target;

  Tensor z = Tensor::uniform({64, 4}, -1.0f, 1.0f, rng);
  auto g_loss_at = [&](const toy::ToyGan& g) {
    Tensor fake = toy::toy_generator(g, g.g1, g.g2, g.g3, z);
    Tensor d = toy::toy_discriminator(g.d1, g.d2, g.d3, fake);
    return affine(mean(log(clamp(d, kProbEps, 1.0f - kProbEps))), -1.0f, 0.0f).value();
  };

  float before = g_loss_at(gan);
  {
    Tape tape;
    FcParams g1{tape.leaf(gan.g1.weight, "g1.weight"), tape.leaf(gan.g1.bias, "g1.bias")};
    FcParams g2{tape.leaf(gan.g2.weight, "g2.weight"), tape.leaf(gan.g2.bias, "g2.bias")};
    FcParams g3{tape.leaf(gan.g3.weight, "g3.weight"), tape.leaf(gan.g3.bias, "g3.bias")};
    Tensor fake = toy::toy_generator(gan, g1, g2, g3, z);
    Tensor d = toy::toy_discriminator(gan.d1, gan.d2, gan.d3, fake);
    Tensor loss = affine(mean(log(clamp(d, kProbEps, 1.0f - kProbEps))), -1.0f, 0.0f);
    GradientMap grads = tape.backward(loss);
    apply_updates(toy::toy_learnables(gan, true), grads, gan.opt_g, gan.opt_cfg);
  }
  float after = g_loss_at(gan);
  CHECK(after < before);
}

TEST_CASE("500 toy steps on a two-Gaussian mixture stay finite") {
  Rng rng(23);
  toy::ToyGan gan = toy::make_toy_gan(4, 16, 1e-3f, rng);
  toy::ToyTarget target;
  target.mixture = true;
  target.mean1 = -1.0f;
  target.std1 = 0.3f;
  target.mean2 = 2.0f;
  target.std2 = 0.5f;
  for (int step = 0; step < 500; ++step) {
    StepLosses losses = toy::toy_step(gan, target, 64, rng);
    REQUIRE(std::isfinite(losses.d_loss));
    REQUIRE(std::isfinite(losses.g_loss));
  }
}

TEST_CASE("checkpoints") {
  TrainConfig cfg = tiny_cfg();
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "rgan_ckpt_test";
  std::filesystem::create_directories(dir);

  SUBCASE("save then load is bit-exact") {
    TrainState ts(cfg);
    std::vector<ImageSample> pool = rosette_pool(8, 16, 3);
    auto [batch, counts] = stack(pool, 0, 8);
    train_step(ts, batch, counts);  // populate optimizer moments and stats

    std::filesystem::path path = dir / "roundtrip.bin";
    save_checkpoint(make_checkpoint(ts), path);
    Checkpoint loaded = load_checkpoint(path);
    TrainState restored = restore_checkpoint(loaded);

    auto a = snapshot(ts, true);
    auto b = snapshot(restored, true);
    CHECK(a == b);
    CHECK(restored.rng.state_string() == ts.rng.state_string());
    CHECK(restored.global_step == ts.global_step);
    CHECK(restored.opt_g.step == ts.opt_g.step);
    for (const auto& [name, t] : ts.opt_g.m) {
      CHECK(restored.opt_g.m.at(name).vec() == t.vec());
    }
    for (const auto& [name, t] : ts.opt_d.v) {
      CHECK(restored.opt_d.v.at(name).vec() == t.vec());
    }
  }

  SUBCASE("corruption yields distinct named errors") {
    TrainState ts(cfg);
    std::filesystem::path path = dir / "corrupt.bin";
    save_checkpoint(make_checkpoint(ts), path);

    // bad magic
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.write("NOPE", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), BadMagicError);

    save_checkpoint(make_checkpoint(ts), path);
    // bad version
    {
      std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(4);
      char v[4] = {42, 0, 0, 0};
      f.write(v, 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), BadVersionError);

    save_checkpoint(make_checkpoint(ts), path);
    // truncation
    auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_AS(load_checkpoint(path), TruncatedError);

    CHECK_THROWS_AS(load_checkpoint(dir / "does_not_exist.bin"), IoError);
  }
}

TEST_CASE("training loop") {
  std::filesystem::path base = std::filesystem::temp_directory_path() / "rgan_train_test";
  std::filesystem::remove_all(base);

  SUBCASE("zero epochs writes only the initial checkpoint") {
    TrainConfig cfg = tiny_cfg();
    cfg.epochs = 0;
    VectorDataset data(rosette_pool(8, 16, 5));
    TrainingHistory h = train(data, cfg, base / "zero");
    CHECK(h.epochs.empty());
    CHECK(std::filesystem::exists(h.initial_checkpoint));
  }

  SUBCASE("label outside the configured class range fails before training") {
    TrainConfig cfg = tiny_cfg();
    cfg.class_count = 2;  // counts 3..4, pool has 5s
    cfg.epochs = 1;
    VectorDataset data(rosette_pool(8, 16, 5));
    CHECK_THROWS_AS(train(data, cfg, base / "range"), ValueError);
  }

  SUBCASE("two runs with one seed produce identical loss curves") {
    TrainConfig cfg = tiny_cfg();
    cfg.epochs = 2;
    cfg.checkpoint_interval = 1;
    VectorDataset data(rosette_pool(16, 16, 6));
    TrainingHistory h1 = train(data, cfg, base / "det1");
    TrainingHistory h2 = train(data, cfg, base / "det2");
    REQUIRE(h1.epochs.size() == h2.epochs.size());
    for (std::size_t i = 0; i < h1.epochs.size(); ++i) {
      CHECK(h1.epochs[i].d_loss == h2.epochs[i].d_loss);
      CHECK(h1.epochs[i].g_loss == h2.epochs[i].g_loss);
    }
  }

  SUBCASE("train 2 + resume 2 equals train 4, bitwise") {
    TrainConfig cfg = tiny_cfg();
    cfg.epochs = 4;
    cfg.checkpoint_interval = 2;
    VectorDataset data(rosette_pool(16, 16, 7));

    TrainingHistory full = train(data, cfg, base / "full");
    REQUIRE(!full.epochs.back().checkpoint_path.empty());

    TrainConfig half = cfg;
    half.epochs = 2;
    TrainingHistory first = train(data, half, base / "half");
    REQUIRE(!first.epochs.back().checkpoint_path.empty());
    TrainingHistory second =
        train(data, cfg, base / "resumed", std::filesystem::path(first.epochs.back().checkpoint_path));

    TrainState a = restore_checkpoint(load_checkpoint(full.epochs.back().checkpoint_path));
    TrainState b = restore_checkpoint(load_checkpoint(second.epochs.back().checkpoint_path));
    auto sa = snapshot(a, true);
    auto sb = snapshot(b, true);
    CHECK(sa == sb);
    CHECK(a.rng.state_string() == b.rng.state_string());
  }
}

TEST_CASE("thirty epochs visibly move the fixed-noise sample grid") {
  TrainConfig cfg = tiny_cfg();
  cfg.epochs = 30;
  cfg.checkpoint_interval = 30;
  cfg.sample_grid = 2;
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "rgan_grid_evolution";
  std::filesystem::remove_all(dir);
  VectorDataset data(rosette_pool(24, 16, 8));
  TrainingHistory h = train(data, cfg, dir);
  REQUIRE(h.epochs.size() == 30);

  Image8 first = read_png_rgb(dir / "samples_epoch_0000.png");
  Image8 last = read_png_rgb(h.epochs.back().sample_path);
  REQUIRE(first.data.size() == last.data.size());
  double mad = 0.0;
  for (std::size_t i = 0; i < first.data.size(); ++i) {
    mad += std::abs(static_cast<double>(first.data[i]) - last.data[i]);
  }
  mad = mad / static_cast<double>(first.data.size()) * (2.0 / 255.0);  // [-1,1] scale
  INFO("mean absolute pixel difference = ", mad);
  CHECK(mad > 0.05);
}
