#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rgan/data.hpp"
#include "rgan/models.hpp"
#include "rgan/training.hpp"

using namespace rgan;

namespace {

TrainConfig small_cfg(int resolution) {
  TrainConfig cfg;
  cfg.resolution = resolution;
  cfg.z_dim = 8;
  cfg.fc1_width = 16;
  cfg.base_width = 4;
  cfg.class_count = 2;
  cfg.min_count = 1;
  return cfg;
}

std::vector<ConditionVector> two_conditions() { return {{0, 2}, {1, 2}}; }

}  // namespace

TEST_CASE("make_condition") {
  ConditionVector y = make_condition(3, 1, 5);
  CHECK(y.class_index == 2);
  std::vector<float> hot = y.one_hot();
  CHECK(hot == std::vector<float>{0, 0, 1, 0, 0});

  CHECK(make_condition(1, 1, 5).class_index == 0);
  CHECK_THROWS_AS(make_condition(6, 1, 5), ValueError);  // exclusive upper bound
  CHECK_THROWS_AS(make_condition(0, 1, 5), ValueError);

  SUBCASE("the error names the valid interval") {
    try {
      make_condition(9, 2, 4);
      FAIL("expected range error");
    } catch (const ValueError& e) {
      CHECK(std::string(e.what()).find("[2, 6)") != std::string::npos);
    }
  }
}

TEST_CASE("spatial_replicate") {
  Tensor planes = spatial_replicate(ConditionVector{1, 2}, 2, 2);
  CHECK(planes.shape() == Shape{2, 2, 2});
  for (int i = 0; i < 4; ++i) {
    CHECK(planes.data()[i] == 0.0f);
    CHECK(planes.data()[4 + i] == 1.0f);
  }

  SUBCASE("one-hot mass: sum equals H*W") {
    Tensor p = spatial_replicate(ConditionVector{3, 6}, 5, 7);
    CHECK(sum(p).value() == doctest::Approx(35.0f));
  }

  SUBCASE("channel means recover the one-hot vector") {
    ConditionVector y{2, 4};
    Tensor p = spatial_replicate(y, 3, 3);
    for (int c = 0; c < 4; ++c) {
      double m = 0.0;
      for (int i = 0; i < 9; ++i) m += p.data()[c * 9 + i];
      CHECK(m / 9.0 == doctest::Approx(y.one_hot()[static_cast<std::size_t>(c)]));
    }
  }
}

TEST_CASE("architecture plan") {
  TrainConfig cfg;  // defaults: 128, base width 64
  cfg.class_count = 5;
  GanArch arch = derive_arch(cfg);
  CHECK(arch.layers == 5);
  CHECK(arch.start_channels == 512);
  CHECK(arch.g_in == std::vector<int>{512, 256, 128, 64, 64});
  CHECK(arch.g_out == std::vector<int>{256, 128, 64, 64, 3});
  CHECK(arch.d_out == std::vector<int>{64, 64, 128, 256, 512});
  // symmetry: conv stage i consumes the resolution deconv stage (L-i) makes
  for (int i = 0; i < arch.layers; ++i) {
    CHECK(arch.d_out[static_cast<std::size_t>(i)] ==
          arch.g_in[static_cast<std::size_t>(arch.layers - 1 - i)]);
  }

  CHECK(small_cfg(32).num_layers() == 3);
  CHECK(small_cfg(16).num_layers() == 2);
}

TEST_CASE("init_params") {
  TrainConfig cfg = small_cfg(16);

  SUBCASE("deterministic per seed") {
    Rng a(5), b(5);
    auto [g1, d1] = init_params(cfg, a);
    auto [g2, d2] = init_params(cfg, b);
    bool same = true;
    visit_params(g1, "g", [&](const std::string& name, Tensor& t, ParamKind) {
      Tensor* other = nullptr;
      visit_params(g2, "g", [&](const std::string& n2, Tensor& t2, ParamKind) {
        if (n2 == name) other = &t2;
      });
      REQUIRE(other != nullptr);
      same = same && t.vec() == other->vec();
    });
    CHECK(same);
  }

  SUBCASE("biases zero, gamma one, beta zero") {
    Rng rng(5);
    auto [g, d] = init_params(cfg, rng);
    auto check = [](const std::string& name, Tensor& t, ParamKind) {
      if (name.ends_with(".bias") || name.ends_with(".beta")) {
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == 0.0f);
      }
      if (name.ends_with(".gamma")) {
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == 1.0f);
      }
    };
    visit_params(g, "g", check);
    visit_params(d, "d", check);
  }

  SUBCASE("weight std within 10% of 0.02 for large tensors") {
    TrainConfig big = small_cfg(16);
    big.fc1_width = 2048;  // fc1 weight gets (8+2)*2048 > 1e4 entries
    Rng rng(9);
    auto [g, d] = init_params(big, rng);
    const Tensor& w = g.fc1.weight;
    REQUIRE(w.size() >= 10000);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w.data()[i];
    mean /= static_cast<double>(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      var += (w.data()[i] - mean) * (w.data()[i] - mean);
    }
    double std_dev = std::sqrt(var / static_cast<double>(w.size()));
    CHECK(std_dev > 0.9 * 0.02);
    CHECK(std_dev < 1.1 * 0.02);
  }
}

TEST_CASE("generator forward") {
  SUBCASE("resolution 32 uses 3 stages and lands on [batch,3,32,32] in [-1,1]") {
    TrainConfig cfg = small_cfg(32);
    Rng rng(3);
    auto [g, d] = init_params(cfg, rng);
    Tensor z = Tensor::uniform({2, cfg.z_dim}, -1.0f, 1.0f, rng);
    Tensor out = generator_forward(z, two_conditions(), g, cfg, Mode::infer);
    CHECK(out.shape() == Shape{2, 3, 32, 32});
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(out.data()[i] >= -1.0f);
      CHECK(out.data()[i] <= 1.0f);
    }
  }

  SUBCASE("identical inputs in infer mode are bit-identical") {
    TrainConfig cfg = small_cfg(16);
    Rng rng(4);
    auto [g, d] = init_params(cfg, rng);
    Tensor z = Tensor::uniform({2, cfg.z_dim}, -1.0f, 1.0f, rng);
    Tensor a = generator_forward(z, two_conditions(), g, cfg, Mode::infer);
    Tensor b = generator_forward(z, two_conditions(), g, cfg, Mode::infer);
    CHECK(a.vec() == b.vec());
  }

  SUBCASE("batch mismatch is a shape error") {
    TrainConfig cfg = small_cfg(16);
    Rng rng(4);
    auto [g, d] = init_params(cfg, rng);
    Tensor z = Tensor::uniform({3, cfg.z_dim}, -1.0f, 1.0f, rng);
    CHECK_THROWS_AS(generator_forward(z, two_conditions(), g, cfg, Mode::infer), ShapeError);
  }
}

TEST_CASE("discriminator forward") {
  TrainConfig cfg = small_cfg(16);
  Rng rng(6);
  auto [g, d] = init_params(cfg, rng);

  SUBCASE("outputs one probability per example") {
    Tensor x = Tensor::uniform({4, 3, 16, 16}, -1.0f, 1.0f, rng);
    std::vector<ConditionVector> ys{{0, 2}, {1, 2}, {0, 2}, {1, 2}};
    Tensor out = discriminator_forward(x, ys, d, cfg, Mode::infer);
    CHECK(out.shape() == Shape{4, 1});
    for (int i = 0; i < 4; ++i) {
      CHECK(out.data()[i] > 0.0f);
      CHECK(out.data()[i] < 1.0f);
    }
  }

  SUBCASE("permuting the batch permutes outputs bit-exactly in infer mode") {
    Tensor x = Tensor::uniform({3, 3, 16, 16}, -1.0f, 1.0f, rng);
    std::vector<ConditionVector> ys{{0, 2}, {1, 2}, {0, 2}};
    Tensor out = discriminator_forward(x, ys, d, cfg, Mode::infer);
    // reversed batch
    Tensor xr({3, 3, 16, 16});
    std::size_t per = x.size() / 3;
    for (int i = 0; i < 3; ++i) {
      std::copy_n(x.data() + static_cast<std::size_t>(2 - i) * per, per,
                  xr.data() + static_cast<std::size_t>(i) * per);
    }
    std::vector<ConditionVector> ysr{ys[2], ys[1], ys[0]};
    Tensor outr = discriminator_forward(xr, ysr, d, cfg, Mode::infer);
    for (int i = 0; i < 3; ++i) CHECK(out.data()[i] == outr.data()[2 - i]);
  }

  SUBCASE("zeroing the condition channels changes the output") {
    // compare two different one-hot classes on the same image: the class
    // planes feed every conv stage with generically nonzero weights
    Tensor x = Tensor::uniform({2, 3, 16, 16}, -1.0f, 1.0f, rng);
    Tensor a = discriminator_forward(x, {{0, 2}, {0, 2}}, d, cfg, Mode::infer);
    Tensor b = discriminator_forward(x, {{1, 2}, {1, 2}}, d, cfg, Mode::infer);
    CHECK(std::abs(a.data()[0] - b.data()[0]) > 0.0f);
  }
}

TEST_CASE("shape round trip D(G(z|y)|y) for every supported resolution") {
  for (int resolution : {16, 32, 64, 128}) {
    TrainConfig cfg = small_cfg(resolution);
    Rng rng(7);
    auto [g, d] = init_params(cfg, rng);
    Tensor z = Tensor::uniform({2, cfg.z_dim}, -1.0f, 1.0f, rng);
    Tensor img = generator_forward(z, two_conditions(), g, cfg, Mode::infer);
    CHECK(img.shape() == Shape{2, 3, resolution, resolution});
    Tensor p = discriminator_forward(img, two_conditions(), d, cfg, Mode::infer);
    CHECK(p.shape() == Shape{2, 1});
    for (int i = 0; i < 2; ++i) {
      CHECK(p.data()[i] > 0.0f);
      CHECK(p.data()[i] < 1.0f);
    }
  }
}

TEST_CASE("output ranges hold for arbitrary finite parameters") {
  // property: the activations enforce the ranges no matter the weights
  TrainConfig cfg = small_cfg(16);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    auto [g, d] = init_params(cfg, rng);
    auto inflate = [&rng](const std::string&, Tensor& t, ParamKind kind) {
      if (kind == ParamKind::learnable) {
        for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0f, 3.0f);
      }
    };
    visit_params(g, "g", inflate);
    visit_params(d, "d", inflate);
    Tensor z = Tensor::uniform({2, cfg.z_dim}, -1.0f, 1.0f, rng);
    Tensor img = generator_forward(z, two_conditions(), g, cfg, Mode::infer);
    for (std::size_t i = 0; i < img.size(); ++i) {
      CHECK(img.data()[i] >= -1.0f);
      CHECK(img.data()[i] <= 1.0f);
    }
    Tensor p = discriminator_forward(img, two_conditions(), d, cfg, Mode::infer);
    for (int i = 0; i < 2; ++i) {
      CHECK(p.data()[i] > 0.0f);
      CHECK(p.data()[i] < 1.0f);
    }
  }
}

TEST_CASE("a briefly trained discriminator responds to the condition") {
  TrainConfig cfg = small_cfg(16);
  cfg.class_count = 4;
  cfg.min_count = 3;
  cfg.batch_size = 8;
  cfg.seed = 31;
  TrainState ts(cfg);

  Rng data_rng(77);
  std::vector<ImageSample> pool;
  for (int i = 0; i < 32; ++i) pool.push_back(synth_rosette(3 + i % 4, 16, data_rng));

  for (int step = 0; step < 100; ++step) {
    std::size_t base = (static_cast<std::size_t>(step) * 8) % 24;
    Tensor batch({8, 3, 16, 16});
    std::vector<int> counts;
    for (int i = 0; i < 8; ++i) {
      const ImageSample& s = pool[base + static_cast<std::size_t>(i)];
      std::copy_n(s.pixels.data(), s.pixels.size(),
                  batch.data() + static_cast<std::size_t>(i) * s.pixels.size());
      counts.push_back(s.leaf_count);
    }
    train_step(ts, batch, counts);
  }

  Tensor x({2, 3, 16, 16});
  std::copy_n(pool[0].pixels.data(), pool[0].pixels.size(), x.data());
  std::copy_n(pool[0].pixels.data(), pool[0].pixels.size(), x.data() + pool[0].pixels.size());
  Tensor pa = discriminator_forward(x, {{0, 4}, {0, 4}}, ts.disc, cfg, Mode::infer);
  Tensor pb = discriminator_forward(x, {{2, 4}, {2, 4}}, ts.disc, cfg, Mode::infer);
  CHECK(std::abs(pa.data()[0] - pb.data()[0]) > 1e-6);
}
