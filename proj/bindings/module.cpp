// Python bindings for the rosette-gan core: model construction, forward
// passes, the training loop, the data pipeline and the evaluation harness.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rgan/cli.hpp"
#include "rgan/evaluation.hpp"
#include "rgan/gradcheck.hpp"
#include "rgan/training.hpp"

namespace py = pybind11;
using namespace rgan;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const FloatArray& arr) {
  py::buffer_info info = arr.request();
  Shape shape;
  for (auto d : info.shape) shape.push_back(static_cast<int>(d));
  std::vector<float> values(static_cast<const float*>(info.ptr),
                            static_cast<const float*>(info.ptr) + info.size);
  return Tensor(std::move(shape), std::move(values));
}

FloatArray array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (int d : t.shape()) shape.push_back(d);
  FloatArray arr(shape);
  std::copy_n(t.data(), t.size(), static_cast<float*>(arr.request().ptr));
  return arr;
}

std::vector<ConditionVector> conditions_from_counts(const std::vector<int>& counts,
                                                    const TrainConfig& cfg) {
  std::vector<ConditionVector> ys;
  ys.reserve(counts.size());
  for (int c : counts) ys.push_back(make_condition(c, cfg.min_count, cfg.class_count));
  return ys;
}

Image8 image_from_bytes(const ByteArray& arr, int channels) {
  py::buffer_info info = arr.request();
  Image8 img;
  if (channels == 3) {
    if (info.ndim != 3 || info.shape[2] != 3) throw ValueError("expected an [H,W,3] uint8 array");
    img.height = static_cast<int>(info.shape[0]);
    img.width = static_cast<int>(info.shape[1]);
    img.channels = 3;
  } else {
    if (info.ndim != 2) throw ValueError("expected an [H,W] uint8 array");
    img.height = static_cast<int>(info.shape[0]);
    img.width = static_cast<int>(info.shape[1]);
    img.channels = 1;
  }
  const auto* p = static_cast<const std::uint8_t*>(info.ptr);
  img.data.assign(p, p + info.size);
  return img;
}

std::vector<ImageSample> samples_from_arrays(const FloatArray& images,
                                             const std::vector<int>& counts, bool synthetic) {
  py::buffer_info info = images.request();
  if (info.ndim != 4 || info.shape[1] != 3) throw ValueError("expected images as [N,3,H,W]");
  auto n = static_cast<std::size_t>(info.shape[0]);
  if (n != counts.size()) throw ValueError("image / count length mismatch");
  int h = static_cast<int>(info.shape[2]);
  int w = static_cast<int>(info.shape[3]);
  std::size_t per = static_cast<std::size_t>(3) * h * w;
  const float* p = static_cast<const float*>(info.ptr);
  std::vector<ImageSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].pixels = Tensor({3, h, w}, std::vector<float>(p + i * per, p + (i + 1) * per));
    out[i].leaf_count = counts[i];
    out[i].is_synthetic = synthetic;
  }
  return out;
}

FloatArray stack_samples(const std::vector<ImageSample>& samples) {
  if (samples.empty()) return FloatArray(std::vector<py::ssize_t>{0, 3, 0, 0});
  int h = samples.front().pixels.dim(1), w = samples.front().pixels.dim(2);
  FloatArray arr(std::vector<py::ssize_t>{static_cast<py::ssize_t>(samples.size()), 3, h, w});
  float* p = static_cast<float*>(arr.request().ptr);
  std::size_t per = static_cast<std::size_t>(3) * h * w;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy_n(samples[i].pixels.data(), per, p + i * per);
  }
  return arr;
}

py::dict metrics_dict(const CountMetrics& m) {
  py::dict d;
  d["dic_mean"] = m.dic_mean;
  d["dic_std"] = m.dic_std;
  d["abs_dic_mean"] = m.abs_dic_mean;
  d["abs_dic_std"] = m.abs_dic_std;
  d["mse"] = m.mse;
  d["mse_rounded"] = m.mse_rounded;
  d["r2"] = m.r2 ? py::cast(*m.r2) : py::none().cast<py::object>();
  return d;
}

/// Generator/discriminator pair plus optimizer state behind one handle.
struct GanHandle {
  TrainState state;

  explicit GanHandle(const TrainConfig& cfg) : state(cfg) {}
  explicit GanHandle(TrainState ts) : state(std::move(ts)) {}

  FloatArray generate(const FloatArray& z, const std::vector<int>& counts, bool train_mode) {
    Tensor zt = tensor_from_array(z);
    auto ys = conditions_from_counts(counts, state.cfg);
    Tensor out = generator_forward(zt, ys, state.gen, state.cfg,
                                   train_mode ? Mode::train : Mode::infer, false);
    return array_from_tensor(out);
  }

  FloatArray sample(int n, std::uint64_t seed) {
    Rng rng(seed);
    auto [z, ys] = sample_noise_and_condition(n, state.cfg, rng, &state.label_histogram);
    Tensor out = generator_forward(z, ys, state.gen, state.cfg, Mode::infer, false);
    return array_from_tensor(out);
  }

  FloatArray discriminate(const FloatArray& x, const std::vector<int>& counts, bool train_mode) {
    Tensor xt = tensor_from_array(x);
    auto ys = conditions_from_counts(counts, state.cfg);
    Tensor out = discriminator_forward(xt, ys, state.disc, state.cfg,
                                       train_mode ? Mode::train : Mode::infer, false);
    return array_from_tensor(out);
  }

  std::pair<float, float> step(const FloatArray& images, const std::vector<int>& counts) {
    StepLosses losses = train_step(state, tensor_from_array(images), counts);
    return {losses.d_loss, losses.g_loss};
  }

  std::vector<std::string> parameter_names() {
    std::vector<std::string> names;
    visit_params(state.gen, "g", [&names](const std::string& n, Tensor&, ParamKind) {
      names.push_back(n);
    });
    visit_params(state.disc, "d", [&names](const std::string& n, Tensor&, ParamKind) {
      names.push_back(n);
    });
    return names;
  }

  FloatArray parameter(const std::string& name) {
    FloatArray out;
    bool found = false;
    auto grab = [&](const std::string& n, Tensor& t, ParamKind) {
      if (n == name && !found) {
        out = array_from_tensor(t);
        found = true;
      }
    };
    visit_params(state.gen, "g", grab);
    visit_params(state.disc, "d", grab);
    if (!found) throw ValueError("no parameter named '" + name + "'");
    return out;
  }

  void save(const std::string& path) { save_checkpoint(make_checkpoint(state), path); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional GAN engine for rosette images with leaf-count conditioning";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "ValueError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("resolution", &TrainConfig::resolution)
      .def_readwrite("z_dim", &TrainConfig::z_dim)
      .def_readwrite("fc1_width", &TrainConfig::fc1_width)
      .def_readwrite("base_width", &TrainConfig::base_width)
      .def_readwrite("class_count", &TrainConfig::class_count)
      .def_readwrite("min_count", &TrainConfig::min_count)
      .def_readwrite("kernel_size", &TrainConfig::kernel_size)
      .def_readwrite("leaky_alpha", &TrainConfig::leaky_alpha)
      .def_readwrite("bn_momentum", &TrainConfig::bn_momentum)
      .def_readwrite("bn_epsilon", &TrainConfig::bn_epsilon)
      .def_readwrite("bn_edge_layers", &TrainConfig::bn_edge_layers)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("beta1", &TrainConfig::beta1)
      .def_readwrite("beta2", &TrainConfig::beta2)
      .def_readwrite("d_steps", &TrainConfig::d_steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("checkpoint_interval", &TrainConfig::checkpoint_interval)
      .def_readwrite("sample_grid", &TrainConfig::sample_grid)
      .def("num_layers", &TrainConfig::num_layers)
      .def("validate", &TrainConfig::validate);

  py::class_<RegressorConfig>(m, "RegressorConfig")
      .def(py::init<>())
      .def_readwrite("input_size", &RegressorConfig::input_size)
      .def_readwrite("width", &RegressorConfig::width)
      .def_readwrite("fc_hidden", &RegressorConfig::fc_hidden)
      .def_readwrite("epochs", &RegressorConfig::epochs)
      .def_readwrite("batch", &RegressorConfig::batch)
      .def_readwrite("learning_rate", &RegressorConfig::learning_rate)
      .def_readwrite("seed", &RegressorConfig::seed);

  m.def("make_condition", [](int leaf_count, int min_count, int classes) {
    ConditionVector y = make_condition(leaf_count, min_count, classes);
    return array_from_tensor(Tensor({classes}, y.one_hot()));
  }, py::arg("leaf_count"), py::arg("min_count"), py::arg("class_count"),
     "One-hot leaf-count class vector");

  m.def("spatial_replicate", [](int leaf_count, int min_count, int classes, int h, int w) {
    return array_from_tensor(spatial_replicate(make_condition(leaf_count, min_count, classes), h, w));
  }, py::arg("leaf_count"), py::arg("min_count"), py::arg("class_count"), py::arg("h"), py::arg("w"));

  m.def("gan_losses", [](const FloatArray& d_real, const FloatArray& d_fake) {
    GanLosses l = gan_losses(tensor_from_array(d_real), tensor_from_array(d_fake));
    return std::make_pair(l.d_loss.value(), l.g_loss.value());
  }, py::arg("d_real"), py::arg("d_fake"),
     "(d_loss, g_loss) from discriminator probabilities [batch,1]");

  m.def("sample_noise_and_condition", [](int n, const TrainConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    auto [z, ys] = sample_noise_and_condition(n, cfg, rng);
    std::vector<int> counts;
    for (const auto& y : ys) counts.push_back(y.class_index + cfg.min_count);
    return std::make_pair(array_from_tensor(z), counts);
  }, py::arg("n"), py::arg("config"), py::arg("seed"));

  py::class_<GanHandle>(m, "Gan")
      .def(py::init<const TrainConfig&>(), py::arg("config"))
      .def_static("load", [](const std::string& path) {
        return GanHandle(restore_checkpoint(load_checkpoint(path)));
      }, py::arg("path"))
      .def("save", &GanHandle::save, py::arg("path"))
      .def("generate", &GanHandle::generate, py::arg("z"), py::arg("counts"),
           py::arg("train_mode") = false)
      .def("sample", &GanHandle::sample, py::arg("n"), py::arg("seed"))
      .def("discriminate", &GanHandle::discriminate, py::arg("x"), py::arg("counts"),
           py::arg("train_mode") = false)
      .def("train_step", &GanHandle::step, py::arg("images"), py::arg("counts"))
      .def("parameter_names", &GanHandle::parameter_names)
      .def("parameter", &GanHandle::parameter, py::arg("name"))
      .def_property_readonly("config", [](GanHandle& g) { return g.state.cfg; })
      .def_property_readonly("epoch", [](GanHandle& g) { return g.state.epoch; })
      .def_property_readonly("global_step", [](GanHandle& g) { return g.state.global_step; });

  m.def("train", [](const FloatArray& images, const std::vector<int>& counts,
                    const TrainConfig& cfg, const std::string& out_dir,
                    const std::string& resume) {
    VectorDataset data(samples_from_arrays(images, counts, false));
    std::optional<std::filesystem::path> resume_path;
    if (!resume.empty()) resume_path = resume;
    TrainingHistory h = train(data, cfg, out_dir, resume_path);
    py::list records;
    for (const auto& e : h.epochs) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["d_loss"] = e.d_loss;
      d["g_loss"] = e.g_loss;
      d["sample"] = e.sample_path;
      d["checkpoint"] = e.checkpoint_path;
      records.append(d);
    }
    return records;
  }, py::arg("images"), py::arg("counts"), py::arg("config"), py::arg("out_dir"),
     py::arg("resume") = std::string(), "Run the training loop over in-memory samples");

  m.def("synth_rosette", [](int count, int size, std::uint64_t seed) {
    Rng rng(seed);
    return array_from_tensor(synth_rosette(count, size, rng).pixels);
  }, py::arg("leaf_count"), py::arg("size"), py::arg("seed"));

  m.def("preprocess", [](const ByteArray& raw, int target, py::object mask) {
    Image8 img = image_from_bytes(raw, 3);
    if (mask.is_none()) return array_from_tensor(preprocess(img, target));
    Image8 m8 = image_from_bytes(mask.cast<ByteArray>(), 1);
    return array_from_tensor(preprocess(img, target, &m8));
  }, py::arg("rgb"), py::arg("target"), py::arg("mask") = py::none());

  m.def("augment_variant", [](const FloatArray& img, int variant) {
    return array_from_tensor(apply_augment_variant(tensor_from_array(img), variant));
  }, py::arg("image"), py::arg("variant"));

  m.def("augment", [](const FloatArray& images, const std::vector<int>& counts) {
    auto expanded = augment(samples_from_arrays(images, counts, false));
    std::vector<int> out_counts;
    for (const auto& s : expanded) out_counts.push_back(s.leaf_count);
    return std::make_pair(stack_samples(expanded), out_counts);
  }, py::arg("images"), py::arg("counts"), "30-fold rotation/flip expansion");

  m.def("load_dataset", [](const std::string& root, const std::string& csv, int target,
                           bool use_masks) {
    LoadOptions opt;
    opt.target = target;
    opt.use_masks = use_masks;
    auto [manifest, samples] = load_dataset(root, csv, opt);
    std::vector<int> counts;
    std::vector<std::string> names;
    for (const auto& s : samples) {
      counts.push_back(s.leaf_count);
      names.push_back(s.source_id);
    }
    return py::make_tuple(stack_samples(samples), counts, names);
  }, py::arg("root"), py::arg("csv"), py::arg("target") = 128, py::arg("use_masks") = true);

  m.def("export_ax", [](const FloatArray& images, const std::vector<int>& counts,
                        const std::string& dir) {
    auto samples = samples_from_arrays(images, counts, true);
    std::vector<Tensor> tensors;
    for (auto& s : samples) tensors.push_back(s.pixels);
    DatasetManifest manifest = export_ax(tensors, counts, dir);
    std::vector<std::string> names;
    for (const auto& [n, c] : manifest.entries) names.push_back(n);
    return names;
  }, py::arg("images"), py::arg("counts"), py::arg("dir"));

  m.def("count_metrics", [](const std::vector<double>& pred, const std::vector<int>& truth) {
    return metrics_dict(count_metrics(pred, truth));
  }, py::arg("pred"), py::arg("truth"));

  m.def("kfold_split", [](int n, int k, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
    for (auto& f : kfold_split(n, k, rng)) out.emplace_back(std::move(f.train), std::move(f.test));
    return out;
  }, py::arg("n"), py::arg("k"), py::arg("seed"));

  py::class_<RegressorModel>(m, "CountRegressor")
      .def("predict", [](const RegressorModel& model, const FloatArray& images) {
        std::vector<int> dummy(static_cast<std::size_t>(images.request().shape[0]), 1);
        return baseline_regressor_predict(model, samples_from_arrays(images, dummy, false));
      }, py::arg("images"));

  m.def("fit_count_regressor", [](const FloatArray& images, const std::vector<int>& counts,
                                  const RegressorConfig& cfg) {
    return baseline_regressor_train(samples_from_arrays(images, counts, false), cfg);
  }, py::arg("images"), py::arg("counts"), py::arg("config"));

  m.def("augmentation_experiment", [](const FloatArray& real_images, const std::vector<int>& real_counts,
                                      const FloatArray& synth_images, const std::vector<int>& synth_counts,
                                      int k, const RegressorConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    ExperimentReport r = augmentation_experiment(samples_from_arrays(real_images, real_counts, false),
                                                 samples_from_arrays(synth_images, synth_counts, true),
                                                 k, cfg, rng);
    py::dict out;
    out["table"] = r.to_table();
    out["csv"] = r.to_csv();
    out["real_only_test"] = metrics_dict(r.real_only.test_mean);
    out["real_only_train"] = metrics_dict(r.real_only.train_mean);
    if (r.has_synthetic) {
      out["with_synthetic_test"] = metrics_dict(r.with_synthetic.test_mean);
      out["with_synthetic_train"] = metrics_dict(r.with_synthetic.train_mean);
    }
    return out;
  }, py::arg("real_images"), py::arg("real_counts"), py::arg("synthetic_images"),
     py::arg("synthetic_counts"), py::arg("k"), py::arg("config"), py::arg("seed"));

  m.def("gradcheck_report", [](std::uint64_t seed) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : gradcheck_report(seed)) out.emplace_back(e.name, e.max_rel_err);
    return out;
  }, py::arg("seed") = 7, "Per-primitive and full-network max relative gradient errors");

  m.def("cli", &cli_run, py::arg("args"), "Invoke the command-line interface");
}
