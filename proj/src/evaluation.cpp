#include "rgan/evaluation.hpp"

#include "rgan/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace rgan {

CountMetrics count_metrics(const std::vector<double>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw ValueError("count_metrics: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " truths");
  }
  if (pred.empty()) throw ValueError("count_metrics: empty input");
  std::size_t n = pred.size();

  double dic_sum = 0.0, abs_sum = 0.0, mse_sum = 0.0, mse_r_sum = 0.0, truth_sum = 0.0;
  std::vector<double> dic(n), abs_dic(n);
  for (std::size_t i = 0; i < n; ++i) {
    double rounded = std::round(pred[i]);  // half away from zero
    dic[i] = rounded - truth[i];
    abs_dic[i] = std::abs(dic[i]);
    dic_sum += dic[i];
    abs_sum += abs_dic[i];
    double res = pred[i] - truth[i];
    mse_sum += res * res;
    mse_r_sum += dic[i] * dic[i];
    truth_sum += truth[i];
  }

  CountMetrics m;
  m.dic_mean = dic_sum / static_cast<double>(n);
  m.abs_dic_mean = abs_sum / static_cast<double>(n);
  m.mse = mse_sum / static_cast<double>(n);
  m.mse_rounded = mse_r_sum / static_cast<double>(n);

  double dic_var = 0.0, abs_var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dic_var += (dic[i] - m.dic_mean) * (dic[i] - m.dic_mean);
    abs_var += (abs_dic[i] - m.abs_dic_mean) * (abs_dic[i] - m.abs_dic_mean);
  }
  m.dic_std = std::sqrt(dic_var / static_cast<double>(n));
  m.abs_dic_std = std::sqrt(abs_var / static_cast<double>(n));

  double truth_mean = truth_sum / static_cast<double>(n);
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss_tot += (truth[i] - truth_mean) * (truth[i] - truth_mean);
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - mse_sum / ss_tot;
  }  // constant truth: R^2 undefined, flag by leaving it empty
  return m;
}

std::vector<FoldSplit> kfold_split(int n, int k, Rng& rng) {
  if (k < 2) throw ValueError("kfold_split needs k >= 2");
  if (n < k) throw ValueError("kfold_split needs n >= k");
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  int base = n / k, extra = n % k;
  int pos = 0;
  for (int f = 0; f < k; ++f) {
    int len = base + (f < extra ? 1 : 0);
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.test.assign(order.begin() + pos, order.begin() + pos + len);
    fold.train.reserve(static_cast<std::size_t>(n - len));
    for (int i = 0; i < n; ++i) {
      if (i < pos || i >= pos + len) fold.train.push_back(order[static_cast<std::size_t>(i)]);
    }
    pos += len;
  }
  return folds;
}

namespace {

Tensor regressor_input(const RegressorModel& model, const ImageSample& s) {
  const Tensor& px = s.pixels;
  if (px.dim(1) == model.cfg.input_size && px.dim(2) == model.cfg.input_size) return px;
  return resize_bilinear(px, model.cfg.input_size, model.cfg.input_size);
}

Tensor stack_inputs(const RegressorModel& model, const std::vector<ImageSample>& samples,
                    const std::vector<int>& idx) {
  int b = static_cast<int>(idx.size());
  int side = model.cfg.input_size;
  Tensor out({b, 3, side, side});
  std::size_t per = static_cast<std::size_t>(3) * side * side;
  for (int i = 0; i < b; ++i) {
    Tensor img = regressor_input(model, samples[static_cast<std::size_t>(idx[i])]);
    std::copy_n(img.data(), per, out.data() + static_cast<std::size_t>(i) * per);
  }
  return out;
}

Tensor regressor_forward(const RegressorModel& model, const Tensor& x) {
  Tensor h = x;
  for (const auto& conv : model.conv) {
    h = leaky_relu(conv2d_layer(h, conv), model.cfg.leaky_alpha);
  }
  int b = x.dim(0);
  int flat = static_cast<int>(h.size()) / b;
  h = reshape(h, {b, flat});
  h = leaky_relu(fully_connected(h, model.fc_hidden), model.cfg.leaky_alpha);
  return fully_connected(h, model.fc_out);
}

template <class F>
void visit_params(RegressorModel& m, F&& f) {
  for (std::size_t i = 0; i < m.conv.size(); ++i) {
    visit_params(m.conv[i], "r/conv" + std::to_string(i + 1), f);
  }
  visit_params(m.fc_hidden, "r/fc_hidden", f);
  visit_params(m.fc_out, "r/fc_out", f);
}

RegressorModel build_regressor(const RegressorConfig& cfg, float bias_init, Rng& rng) {
  if (cfg.input_size < 16 || cfg.input_size % 8 != 0) {
    throw ValueError("regressor input size must be a multiple of 8 and >= 16");
  }
  RegressorModel m;
  m.cfg = cfg;
  int w = cfg.width;
  m.conv.push_back(make_conv(3, w));
  m.conv.push_back(make_conv(w, 2 * w));
  m.conv.push_back(make_conv(2 * w, 4 * w));
  int spatial = cfg.input_size / 8;
  m.fc_hidden = make_fc(4 * w * spatial * spatial, cfg.fc_hidden);
  m.fc_out = make_fc(cfg.fc_hidden, 1);
  visit_params(m, [&rng](const std::string& name, Tensor& t, ParamKind) {
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0) {
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0f, 0.05f);
    }
  });
  m.fc_out.bias.data()[0] = bias_init;  // untrained predictions start at the mean count
  return m;
}

}  // namespace

RegressorModel baseline_regressor_train(const std::vector<ImageSample>& samples,
                                        const RegressorConfig& cfg) {
  if (samples.size() < 10) {
    throw ValueError("baseline regressor needs at least 10 training samples, got " +
                     std::to_string(samples.size()));
  }
  Rng rng(cfg.seed);
  double label_mean = 0.0;
  for (const auto& s : samples) label_mean += s.leaf_count;
  label_mean /= static_cast<double>(samples.size());
  RegressorModel model = build_regressor(cfg, static_cast<float>(label_mean), rng);

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt;
  TrainConfig opt_cfg;  // reuse the adam defaults; only these fields matter here
  opt_cfg.learning_rate = cfg.learning_rate;
  opt_cfg.beta1 = 0.9f;
  opt_cfg.beta2 = 0.999f;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
      std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor x = stack_inputs(model, samples, idx);
      Tensor y({static_cast<int>(idx.size()), 1});
      for (std::size_t i = 0; i < idx.size(); ++i) {
        y.data()[i] = static_cast<float>(samples[static_cast<std::size_t>(idx[i])].leaf_count);
      }
      Tape tape;
      RegressorModel attached = model;
      visit_params(attached, [&tape](const std::string& name, Tensor& t, ParamKind kind) {
        if (kind == ParamKind::learnable) t = tape.leaf(t, name);
      });
      Tensor pred = regressor_forward(attached, x);
      Tensor residual = sub(pred, y);
      Tensor loss = mean(mul(residual, residual));
      GradientMap grads = tape.backward(loss);
      std::vector<std::pair<std::string, Tensor>> learnable;
      visit_params(model, [&learnable](const std::string& name, Tensor& t, ParamKind kind) {
        if (kind == ParamKind::learnable) learnable.emplace_back(name, t);
      });
      apply_updates(learnable, grads, opt, opt_cfg);
    }
  }
  return model;
}

std::vector<double> baseline_regressor_predict(const RegressorModel& model,
                                               const std::vector<ImageSample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  const std::size_t chunk = 64;
  for (std::size_t begin = 0; begin < samples.size(); begin += chunk) {
    std::size_t end = std::min(samples.size(), begin + chunk);
    std::vector<int> idx(end - begin);
    std::iota(idx.begin(), idx.end(), static_cast<int>(begin));
    Tensor x = stack_inputs(model, samples, idx);
    Tensor pred = regressor_forward(model, x);
    for (std::size_t i = 0; i < idx.size(); ++i) out.push_back(pred.data()[i]);
  }
  return out;
}

namespace {

CountMetrics mean_metrics(const std::vector<CountMetrics>& folds) {
  CountMetrics agg;
  double r2_sum = 0.0;
  int r2_n = 0;
  for (const auto& m : folds) {
    agg.dic_mean += m.dic_mean;
    agg.dic_std += m.dic_std;
    agg.abs_dic_mean += m.abs_dic_mean;
    agg.abs_dic_std += m.abs_dic_std;
    agg.mse += m.mse;
    agg.mse_rounded += m.mse_rounded;
    if (m.r2) {
      r2_sum += *m.r2;
      ++r2_n;
    }
  }
  double n = static_cast<double>(folds.size());
  agg.dic_mean /= n;
  agg.dic_std /= n;
  agg.abs_dic_mean /= n;
  agg.abs_dic_std /= n;
  agg.mse /= n;
  agg.mse_rounded /= n;
  if (r2_n > 0) agg.r2 = r2_sum / r2_n;
  return agg;
}

std::vector<ImageSample> gather(const std::vector<ImageSample>& pool, const std::vector<int>& idx) {
  std::vector<ImageSample> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(pool[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> labels_of(const std::vector<ImageSample>& samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.leaf_count);
  return out;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << v;
  return out.str();
}

std::string fmt_r2(const std::optional<double>& r2) {
  return r2 ? fmt(*r2) : std::string("undefined");
}

void table_block(std::ostringstream& out, const ConditionResult& cond) {
  out << "  " << cond.label << "\n";
  out << "    DiC     " << fmt(cond.train_mean.dic_mean) << " (" << fmt(cond.train_mean.dic_std)
      << ")    " << fmt(cond.test_mean.dic_mean) << " (" << fmt(cond.test_mean.dic_std) << ")\n";
  out << "    |DiC|   " << fmt(cond.train_mean.abs_dic_mean) << " ("
      << fmt(cond.train_mean.abs_dic_std) << ")    " << fmt(cond.test_mean.abs_dic_mean) << " ("
      << fmt(cond.test_mean.abs_dic_std) << ")\n";
  out << "    MSE     " << fmt(cond.train_mean.mse) << "    " << fmt(cond.test_mean.mse) << "\n";
  out << "    R^2     " << fmt_r2(cond.train_mean.r2) << "    " << fmt_r2(cond.test_mean.r2)
      << "\n";
}

void csv_rows(std::ostringstream& out, const ConditionResult& cond) {
  auto row = [&out, &cond](const std::string& fold, const std::string& split,
                           const CountMetrics& m) {
    out << cond.label << "," << fold << "," << split << ",dic_mean," << m.dic_mean << "\n";
    out << cond.label << "," << fold << "," << split << ",dic_std," << m.dic_std << "\n";
    out << cond.label << "," << fold << "," << split << ",abs_dic_mean," << m.abs_dic_mean << "\n";
    out << cond.label << "," << fold << "," << split << ",abs_dic_std," << m.abs_dic_std << "\n";
    out << cond.label << "," << fold << "," << split << ",mse," << m.mse << "\n";
    out << cond.label << "," << fold << "," << split << ",mse_rounded," << m.mse_rounded << "\n";
    out << cond.label << "," << fold << "," << split << ",r2," << (m.r2 ? std::to_string(*m.r2) : "undefined")
        << "\n";
  };
  for (std::size_t f = 0; f < cond.fold_train.size(); ++f) {
    row(std::to_string(f), "train", cond.fold_train[f]);
    row(std::to_string(f), "test", cond.fold_test[f]);
  }
  row("mean", "train", cond.train_mean);
  row("mean", "test", cond.test_mean);
}

}  // namespace

std::string ExperimentReport::to_table() const {
  std::ostringstream out;
  out << "                Training Error        Testing Error\n";
  table_block(out, real_only);
  if (has_synthetic) table_block(out, with_synthetic);
  return out.str();
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "condition,fold,split,metric,value\n";
  csv_rows(out, real_only);
  if (has_synthetic) csv_rows(out, with_synthetic);
  return out.str();
}

ExperimentReport augmentation_experiment(const std::vector<ImageSample>& real,
                                         const std::vector<ImageSample>& synthetic, int k,
                                         const RegressorConfig& cfg, Rng& rng,
                                         const std::string& real_name,
                                         const std::string& synthetic_name) {
  ExperimentReport report;
  report.splits = kfold_split(static_cast<int>(real.size()), k, rng);
  report.has_synthetic = !synthetic.empty();
  if (!report.has_synthetic) {
    std::cerr << "warning: no synthetic images, running the " << real_name << "-only condition\n";
  }
  report.real_only.label = "Trained on " + real_name + " only";
  report.with_synthetic.label = "Trained on " + real_name + " and " + synthetic_name;

  for (std::size_t f = 0; f < report.splits.size(); ++f) {
    const FoldSplit& split = report.splits[f];
    std::vector<ImageSample> train_real = gather(real, split.train);
    std::vector<ImageSample> test = gather(real, split.test);
    std::vector<int> test_truth = labels_of(test);

    RegressorConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + 2 * f;
    RegressorModel model_a = baseline_regressor_train(train_real, fold_cfg);
    report.real_only.fold_train.push_back(
        count_metrics(baseline_regressor_predict(model_a, train_real), labels_of(train_real)));
    report.real_only.fold_test.push_back(
        count_metrics(baseline_regressor_predict(model_a, test), test_truth));

    if (report.has_synthetic) {
      std::vector<ImageSample> train_aug = train_real;
      train_aug.insert(train_aug.end(), synthetic.begin(), synthetic.end());
      fold_cfg.seed = cfg.seed + 2 * f + 1;
      RegressorModel model_b = baseline_regressor_train(train_aug, fold_cfg);
      report.with_synthetic.fold_train.push_back(
          count_metrics(baseline_regressor_predict(model_b, train_aug), labels_of(train_aug)));
      report.with_synthetic.fold_test.push_back(
          count_metrics(baseline_regressor_predict(model_b, test), test_truth));
    }
  }

  report.real_only.train_mean = mean_metrics(report.real_only.fold_train);
  report.real_only.test_mean = mean_metrics(report.real_only.fold_test);
  if (report.has_synthetic) {
    report.with_synthetic.train_mean = mean_metrics(report.with_synthetic.fold_train);
    report.with_synthetic.test_mean = mean_metrics(report.with_synthetic.fold_test);
  }
  return report;
}

}  // namespace rgan
