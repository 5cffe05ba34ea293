#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "rgan/evaluation.hpp"

using namespace rgan;

namespace {

std::vector<ImageSample> rosettes(int n, int size, int count_lo, int count_hi, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ImageSample> out;
  for (int i = 0; i < n; ++i) {
    int count = count_lo + i % (count_hi - count_lo + 1);
    out.push_back(synth_rosette(count, size, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("count_metrics") {
  SUBCASE("perfect prediction") {
    CountMetrics m = count_metrics({4, 7, 2}, {4, 7, 2});
    CHECK(m.dic_mean == 0.0);
    CHECK(m.dic_std == 0.0);
    CHECK(m.abs_dic_mean == 0.0);
    CHECK(m.abs_dic_std == 0.0);
    CHECK(m.mse == 0.0);
    REQUIRE(m.r2.has_value());
    CHECK(*m.r2 == doctest::Approx(1.0));
  }

  SUBCASE("definitional arithmetic") {
    CountMetrics m = count_metrics({5, 7}, {4, 7});
    CHECK(m.dic_mean == doctest::Approx(0.5));
    CHECK(m.abs_dic_mean == doctest::Approx(0.5));
    CHECK(m.mse == doctest::Approx(0.5));
  }

  SUBCASE("matches the scalar-loop oracle on 1000 random instances") {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
      int n = 2 + static_cast<int>(rng.below(20));
      std::vector<double> pred;
      std::vector<int> truth;
      for (int i = 0; i < n; ++i) {
        truth.push_back(1 + static_cast<int>(rng.below(9)));
        pred.push_back(truth.back() + rng.normal(0.0f, 1.5f));
      }
      CountMetrics got = count_metrics(pred, truth);
      oracle::Metrics want = oracle::metrics(pred, truth);
      CHECK(std::abs(got.dic_mean - want.dic_mean) < 1e-9);
      CHECK(std::abs(got.dic_std - want.dic_std) < 1e-9);
      CHECK(std::abs(got.abs_dic_mean - want.abs_mean) < 1e-9);
      CHECK(std::abs(got.abs_dic_std - want.abs_std) < 1e-9);
      CHECK(std::abs(got.mse - want.mse) < 1e-9);
      CHECK(std::abs(got.mse_rounded - want.mse_rounded) < 1e-9);
      REQUIRE(got.r2.has_value() == want.r2_defined);
      if (want.r2_defined) CHECK(std::abs(*got.r2 - want.r2) < 1e-9);
    }
  }

  SUBCASE("constant truth flags R^2 as undefined rather than NaN") {
    CountMetrics m = count_metrics({4.2, 3.9, 4.1}, {4, 4, 4});
    CHECK(!m.r2.has_value());
    CHECK(std::isfinite(m.mse));
  }

  SUBCASE("a constant predictor at the truth mean scores R^2 = 0") {
    std::vector<int> truth{2, 4, 6, 8};
    std::vector<double> pred(4, 5.0);  // the mean
    CountMetrics m = count_metrics(pred, truth);
    REQUIRE(m.r2.has_value());
    CHECK(std::abs(*m.r2) < 1e-9);
  }

  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(count_metrics({1.0}, {1, 2}), ValueError);
    CHECK_THROWS_AS(count_metrics({}, {}), ValueError);
  }
}

TEST_CASE("kfold_split") {
  SUBCASE("the 624/4 split gives 468 train and 156 test per fold") {
    Rng rng(7);
    std::vector<FoldSplit> folds = kfold_split(624, 4, rng);
    REQUIRE(folds.size() == 4);
    for (const auto& f : folds) {
      CHECK(f.train.size() == 468);
      CHECK(f.test.size() == 156);
    }
  }

  SUBCASE("n=8 k=4: disjoint test folds of 2 covering everything") {
    Rng rng(8);
    std::vector<FoldSplit> folds = kfold_split(8, 4, rng);
    std::set<int> seen;
    for (const auto& f : folds) {
      CHECK(f.test.size() == 2);
      for (int i : f.test) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == 8);
  }

  SUBCASE("deterministic per seed") {
    Rng a(9), b(9);
    std::vector<FoldSplit> fa = kfold_split(20, 3, a);
    std::vector<FoldSplit> fb = kfold_split(20, 3, b);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      CHECK(fa[i].train == fb[i].train);
      CHECK(fa[i].test == fb[i].test);
    }
  }

  SUBCASE("properties hold for assorted n and k") {
    Rng rng(10);
    for (auto [n, k] : std::vector<std::pair<int, int>>{{10, 2}, {11, 3}, {37, 5}, {100, 7}}) {
      std::vector<FoldSplit> folds = kfold_split(n, k, rng);
      std::set<int> seen;
      for (const auto& f : folds) {
        CHECK(static_cast<int>(f.train.size() + f.test.size()) == n);
        for (int i : f.test) {
          CHECK(seen.insert(i).second);
          CHECK(std::find(f.train.begin(), f.train.end(), i) == f.train.end());
        }
      }
      CHECK(static_cast<int>(seen.size()) == n);
    }
  }

  SUBCASE("invalid arguments") {
    Rng rng(1);
    CHECK_THROWS_AS(kfold_split(10, 1, rng), ValueError);
    CHECK_THROWS_AS(kfold_split(3, 4, rng), ValueError);
  }
}

TEST_CASE("baseline regressor") {
  SUBCASE("untrained predictions sit near the mean-count bias init") {
    std::vector<ImageSample> samples = rosettes(40, 32, 3, 7, 21);
    double mean_count = 0.0;
    for (const auto& s : samples) mean_count += s.leaf_count;
    mean_count /= samples.size();

    RegressorConfig cfg;
    cfg.epochs = 0;
    RegressorModel model = baseline_regressor_train(samples, cfg);
    std::vector<double> pred = baseline_regressor_predict(model, samples);
    double mean_pred = 0.0;
    for (double p : pred) mean_pred += p;
    mean_pred /= static_cast<double>(pred.size());
    CHECK(std::abs(mean_pred - mean_count) < 1.0);
    CountMetrics m = count_metrics(pred, [&] {
      std::vector<int> t;
      for (const auto& s : samples) t.push_back(s.leaf_count);
      return t;
    }());
    REQUIRE(m.r2.has_value());
    CHECK(std::abs(*m.r2) < 0.5);
  }

  SUBCASE("two seeds give different but valid models") {
    std::vector<ImageSample> samples = rosettes(20, 32, 3, 6, 22);
    RegressorConfig a, b;
    a.epochs = b.epochs = 1;
    a.seed = 1;
    b.seed = 2;
    RegressorModel ma = baseline_regressor_train(samples, a);
    RegressorModel mb = baseline_regressor_train(samples, b);
    CHECK(ma.conv[0].weight.vec() != mb.conv[0].weight.vec());
    for (double p : baseline_regressor_predict(mb, samples)) CHECK(std::isfinite(p));
  }

  SUBCASE("training is deterministic per seed") {
    std::vector<ImageSample> samples = rosettes(20, 32, 3, 6, 23);
    RegressorConfig cfg;
    cfg.epochs = 2;
    RegressorModel a = baseline_regressor_train(samples, cfg);
    RegressorModel b = baseline_regressor_train(samples, cfg);
    CHECK(a.fc_out.weight.vec() == b.fc_out.weight.vec());
    CHECK(baseline_regressor_predict(a, samples) == baseline_regressor_predict(b, samples));
  }

  SUBCASE("too few samples are rejected") {
    std::vector<ImageSample> samples = rosettes(5, 32, 3, 6, 24);
    CHECK_THROWS_AS(baseline_regressor_train(samples, RegressorConfig{}), ValueError);
  }

  SUBCASE("500 rosettes train to an MSE below 1.0") {
    std::vector<ImageSample> samples = rosettes(500, 32, 3, 8, 25);
    RegressorConfig cfg;
    cfg.epochs = 12;
    cfg.seed = 7;
    RegressorModel model = baseline_regressor_train(samples, cfg);
    std::vector<double> pred = baseline_regressor_predict(model, samples);
    std::vector<int> truth;
    for (const auto& s : samples) truth.push_back(s.leaf_count);
    CountMetrics m = count_metrics(pred, truth);
    INFO("train mse=", m.mse);
    CHECK(m.mse < 1.0);
  }
}

TEST_CASE("augmentation_experiment") {
  std::vector<ImageSample> real = rosettes(48, 32, 3, 6, 31);
  std::vector<ImageSample> synthetic = rosettes(12, 32, 3, 6, 32);
  for (auto& s : synthetic) s.is_synthetic = true;

  RegressorConfig cfg;
  cfg.epochs = 2;
  Rng rng(5);
  ExperimentReport report = augmentation_experiment(real, synthetic, 3, cfg, rng, "A4", "Ax");

  SUBCASE("the report has both condition blocks in table form") {
    std::string table = report.to_table();
    CHECK(table.find("Trained on A4 only") != std::string::npos);
    CHECK(table.find("Trained on A4 and Ax") != std::string::npos);
    CHECK(table.find("DiC") != std::string::npos);
    CHECK(table.find("|DiC|") != std::string::npos);
    CHECK(table.find("MSE") != std::string::npos);
    CHECK(table.find("R^2") != std::string::npos);
  }

  SUBCASE("both conditions share bit-identical test splits") {
    CHECK(report.has_synthetic);
    REQUIRE(report.real_only.fold_test.size() == 3);
    REQUIRE(report.with_synthetic.fold_test.size() == 3);
    // same recorded splits drive both conditions
    std::set<int> seen;
    for (const auto& f : report.splits) {
      for (int i : f.test) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == real.size());
  }

  SUBCASE("csv emits one row per condition/fold/split/metric") {
    std::string csv = report.to_csv();
    std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
    // header + 2 conditions * (3 folds + 1 mean) * 2 splits * 7 metrics
    CHECK(rows == 1 + 2 * 4 * 2 * 7);
  }

  SUBCASE("an empty synthetic pool degrades to one condition") {
    Rng rng2(6);
    ExperimentReport single = augmentation_experiment(real, {}, 3, cfg, rng2);
    CHECK(!single.has_synthetic);
    CHECK(single.to_table().find("only") != std::string::npos);
    CHECK(single.with_synthetic.fold_test.empty());
  }
}
