#include "rgan/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "rgan/evaluation.hpp"
#include "rgan/gradcheck.hpp"
#include "rgan/training.hpp"

namespace rgan {

namespace {

struct SynthArgs {
  int n = 100;
  int size = 64;
  int count_min = 3;
  int count_max = 8;
  std::uint64_t seed = 1;
  std::string out_dir;
};

int run_synth(const SynthArgs& a) {
  if (a.count_min > a.count_max) throw ValueError("--count-min must be <= --count-max");
  Rng rng(a.seed);
  std::vector<Tensor> images;
  std::vector<int> counts;
  for (int i = 0; i < a.n; ++i) {
    int count = a.count_min + static_cast<int>(rng.below(
                                  static_cast<std::uint64_t>(a.count_max - a.count_min + 1)));
    ImageSample s = synth_rosette(count, a.size, rng);
    images.push_back(s.pixels);
    counts.push_back(count);
  }
  DatasetManifest m = export_ax(images, counts, a.out_dir);
  std::cout << "wrote " << m.entries.size() << " synthetic rosettes to " << a.out_dir << "\n";
  return 0;
}

struct DataArgs {
  std::string data_dir;
  std::string csv;
  std::string out_dir;
  int target = 128;
  bool no_masks = false;
};

std::pair<DatasetManifest, std::vector<ImageSample>> load_from(const DataArgs& a) {
  LoadOptions opt;
  opt.target = a.target;
  opt.use_masks = !a.no_masks;
  std::filesystem::path csv = a.csv.empty() ? std::filesystem::path(a.data_dir) / "counts.csv"
                                            : std::filesystem::path(a.csv);
  return load_dataset(a.data_dir, csv, opt);
}

int run_augment(const DataArgs& a) {
  auto [manifest, samples] = load_from(a);
  std::vector<ImageSample> expanded = augment(samples);
  std::vector<Tensor> images;
  std::vector<int> counts;
  images.reserve(expanded.size());
  for (const auto& s : expanded) {
    images.push_back(s.pixels);
    counts.push_back(s.leaf_count);
  }
  DatasetManifest out = export_ax(images, counts, a.out_dir);
  std::cout << "augmented " << samples.size() << " -> " << out.entries.size() << " images in "
            << a.out_dir << "\n";
  return 0;
}

int run_export_ax(const DataArgs& a) {
  auto [manifest, samples] = load_from(a);
  std::vector<Tensor> images;
  std::vector<int> counts;
  for (const auto& s : samples) {
    images.push_back(s.pixels);
    counts.push_back(s.leaf_count);
  }
  DatasetManifest out = export_ax(images, counts, a.out_dir);
  std::cout << "exported " << out.entries.size() << " images to " << a.out_dir << "\n";
  return 0;
}

struct TrainArgs {
  DataArgs data;
  TrainConfig cfg;
  bool augment30 = false;
  std::size_t memory_budget_mb = 512;
  std::string resume;
};

int run_train(const TrainArgs& a) {
  DataArgs d = a.data;
  d.target = a.cfg.resolution;
  auto [manifest, samples] = load_from(d);
  std::unique_ptr<Dataset> dataset;
  if (a.augment30) {
    dataset = make_augmented_dataset(std::move(samples), a.memory_budget_mb);
  } else {
    dataset = std::make_unique<VectorDataset>(std::move(samples));
  }
  std::optional<std::filesystem::path> resume;
  if (!a.resume.empty()) resume = a.resume;
  TrainingHistory history = train(*dataset, a.cfg, a.data.out_dir, resume);
  if (history.epochs.empty()) {
    std::cout << "wrote initial checkpoint to " << a.data.out_dir << "\n";
  } else {
    const EpochRecord& last = history.epochs.back();
    std::cout << "trained " << history.epochs.size() << " epoch(s); final d_loss=" << last.d_loss
              << " g_loss=" << last.g_loss << "\n";
  }
  return 0;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string out_dir;
  int n = 57;
  int count = 0;  // 0: use count_range
  std::string count_range;
  std::uint64_t seed = 1;
};

int run_generate(const GenerateArgs& a) {
  if (a.n < 1) throw ValueError("--n must be >= 1");
  TrainState ts = restore_checkpoint(load_checkpoint(a.checkpoint));
  const TrainConfig& cfg = ts.cfg;
  int lo = cfg.min_count, hi = cfg.min_count + cfg.class_count - 1;
  if (a.count != 0 && !a.count_range.empty()) {
    throw ValueError("use either --count or --count-range, not both");
  }
  if (a.count != 0) {
    lo = hi = a.count;
  } else if (!a.count_range.empty()) {
    std::size_t colon = a.count_range.find(':');
    if (colon == std::string::npos) throw ValueError("--count-range must look like LO:HI");
    lo = std::stoi(a.count_range.substr(0, colon));
    hi = std::stoi(a.count_range.substr(colon + 1));
    if (lo > hi) throw ValueError("--count-range must have LO <= HI");
  }
  // validate against the model's class range up front
  make_condition(lo, cfg.min_count, cfg.class_count);
  make_condition(hi, cfg.min_count, cfg.class_count);

  Rng rng(a.seed);
  std::vector<Tensor> images;
  std::vector<int> counts;
  const int chunk = 16;
  for (int done = 0; done < a.n; done += chunk) {
    int b = std::min(chunk, a.n - done);
    Tensor z = Tensor::uniform({b, cfg.z_dim}, -1.0f, 1.0f, rng);
    std::vector<ConditionVector> ys;
    std::vector<int> batch_counts;
    for (int i = 0; i < b; ++i) {
      int count = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
      ys.push_back(make_condition(count, cfg.min_count, cfg.class_count));
      batch_counts.push_back(count);
    }
    Tensor out = generator_forward(z, ys, ts.gen, cfg, Mode::infer);
    std::size_t per = out.size() / static_cast<std::size_t>(b);
    for (int i = 0; i < b; ++i) {
      std::vector<float> px(out.data() + static_cast<std::size_t>(i) * per,
                            out.data() + static_cast<std::size_t>(i + 1) * per);
      images.emplace_back(Shape{3, cfg.resolution, cfg.resolution}, std::move(px));
      counts.push_back(batch_counts[static_cast<std::size_t>(i)]);
    }
  }
  DatasetManifest m = export_ax(images, counts, a.out_dir);
  std::cout << "generated " << m.entries.size() << " images into " << a.out_dir << "\n";
  return 0;
}

struct EvaluateArgs {
  DataArgs data;
  std::string synthetic_dir;
  std::string synthetic_csv;
  int folds = 4;
  std::uint64_t seed = 1;
  RegressorConfig reg;
  std::string real_name = "real";
  std::string synthetic_name = "synthetic";
};

int run_evaluate(const EvaluateArgs& a) {
  DataArgs d = a.data;
  d.target = a.reg.input_size;
  auto [manifest, real] = load_from(d);
  std::vector<ImageSample> synthetic;
  if (!a.synthetic_dir.empty()) {
    DataArgs sd;
    sd.data_dir = a.synthetic_dir;
    sd.csv = a.synthetic_csv;
    sd.target = a.reg.input_size;
    sd.no_masks = a.data.no_masks;
    auto [sm, ss] = load_from(sd);
    synthetic = std::move(ss);
    for (auto& s : synthetic) s.is_synthetic = true;
  }
  Rng rng(a.seed);
  ExperimentReport report = augmentation_experiment(real, synthetic, a.folds, a.reg, rng,
                                                    a.real_name, a.synthetic_name);
  std::filesystem::create_directories(a.data.out_dir);
  {
    std::ofstream txt(std::filesystem::path(a.data.out_dir) / "report.txt");
    txt << report.to_table();
  }
  {
    std::ofstream csv(std::filesystem::path(a.data.out_dir) / "report.csv");
    csv << report.to_csv();
  }
  std::cout << report.to_table();
  std::cout << "report written to " << a.data.out_dir << "\n";
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  std::vector<GradCheckEntry> report = gradcheck_report(seed);
  bool ok = true;
  for (const auto& e : report) {
    std::cout << e.name << " " << e.max_rel_err;
    if (e.checked > 0) {
      std::cout << " (checked " << e.checked << ", skipped " << e.skipped_nonsmooth
                << " non-smooth)";
      ok = ok && e.skipped_nonsmooth * 4 < e.checked;  // coverage guard
    }
    std::cout << "\n";
    ok = ok && e.max_rel_err < 1e-3;
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return ok ? 0 : 2;
}

void add_train_options(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--resolution", cfg.resolution, "Output resolution (power of two)")
      ->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size, "Batch size (0: 32 at >=128, else 64)")
      ->capture_default_str();
  cmd->add_option("--base-width", cfg.base_width, "Channel multiplier")->capture_default_str();
  cmd->add_option("--z-dim", cfg.z_dim, "Noise dimension")->capture_default_str();
  cmd->add_option("--fc1-width", cfg.fc1_width, "First fully connected width")
      ->capture_default_str();
  cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
  cmd->add_option("--d-steps", cfg.d_steps, "Discriminator updates per generator update")
      ->capture_default_str();
  cmd->add_option("--min-count", cfg.min_count, "Smallest leaf count class")->capture_default_str();
  cmd->add_option("--class-count", cfg.class_count, "Number of classes (0: derive from data)")
      ->capture_default_str();
  cmd->add_option("--checkpoint-interval", cfg.checkpoint_interval, "Epochs between checkpoints")
      ->capture_default_str();
  cmd->add_option("--sample-grid", cfg.sample_grid, "Side of the per-epoch sample grid")
      ->capture_default_str();
  cmd->add_flag("--bn-edge-layers", cfg.bn_edge_layers,
                "Also normalize the generator output / discriminator input layers");
  std::map<std::string, OptimizerKind> opt_map{{"adam", OptimizerKind::adam},
                                               {"sgd", OptimizerKind::sgd}};
  cmd->add_option("--optimizer", cfg.optimizer, "Optimizer")
      ->transform(CLI::CheckedTransformer(opt_map, CLI::ignore_case))
      ->default_str("adam");
  std::map<std::string, GenLossKind> loss_map{{"non-saturating", GenLossKind::non_saturating},
                                              {"minimax", GenLossKind::minimax}};
  cmd->add_option("--gen-loss", cfg.gen_loss, "Generator objective")
      ->transform(CLI::CheckedTransformer(loss_map, CLI::ignore_case))
      ->default_str("non-saturating");
  std::map<std::string, ConditionSampling> cs_map{{"uniform", ConditionSampling::uniform},
                                                  {"empirical", ConditionSampling::empirical}};
  cmd->add_option("--condition-sampling", cfg.condition_sampling,
                  "Distribution of sampled condition classes")
      ->transform(CLI::CheckedTransformer(cs_map, CLI::ignore_case))
      ->default_str("uniform");
}

}  // namespace

int cli_run(const std::vector<std::string>& args) {
  CLI::App app{"rosette-gan: conditional GAN for rosette images with leaf-count conditioning"};
  app.require_subcommand(1);
  app.footer("Environment: ROSETTE_GAN_THREADS caps worker parallelism.");

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Render a labeled synthetic rosette dataset");
  synth_cmd->add_option("--n", synth.n, "Number of images")->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "Image side in pixels")->capture_default_str();
  synth_cmd->add_option("--count-min", synth.count_min, "Smallest leaf count")->capture_default_str();
  synth_cmd->add_option("--count-max", synth.count_max, "Largest leaf count")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  DataArgs augment_args;
  CLI::App* augment_cmd = app.add_subcommand("augment", "Expand a dataset 30-fold (10 rotations x 3 flips)");
  augment_cmd->add_option("--data-dir", augment_args.data_dir, "Dataset directory")->required();
  augment_cmd->add_option("--csv", augment_args.csv, "CSV of filename,count (default: <data-dir>/counts.csv)");
  augment_cmd->add_option("--target", augment_args.target, "Preprocess to this square size")
      ->capture_default_str();
  augment_cmd->add_flag("--no-masks", augment_args.no_masks, "Ignore *_fg.png masks");
  augment_cmd->add_option("--out-dir", augment_args.out_dir, "Output directory")->required();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the conditional GAN");
  train_cmd->add_option("--data-dir", train_args.data.data_dir, "Dataset directory")->required();
  train_cmd->add_option("--csv", train_args.data.csv, "CSV of filename,count");
  train_cmd->add_flag("--no-masks", train_args.data.no_masks, "Ignore *_fg.png masks");
  train_cmd->add_option("--out-dir", train_args.data.out_dir, "Run directory")->required();
  train_cmd->add_option("--seed", train_args.cfg.seed, "Random seed")->capture_default_str();
  train_cmd->add_flag("--augment", train_args.augment30, "Apply the 30-fold augmentation");
  train_cmd->add_option("--memory-budget-mb", train_args.memory_budget_mb,
                        "Materialize augmentation up to this budget, stream past it")
      ->capture_default_str();
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  add_train_options(train_cmd, train_args.cfg);

  GenerateArgs gen_args;
  CLI::App* gen_cmd = app.add_subcommand("generate", "Sample images from a checkpoint (Ax export)");
  gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "Checkpoint file")->required();
  gen_cmd->add_option("--n", gen_args.n, "Number of images")->capture_default_str();
  gen_cmd->add_option("--count", gen_args.count, "Fixed leaf count for every image");
  gen_cmd->add_option("--count-range", gen_args.count_range, "LO:HI leaf counts sampled uniformly");
  gen_cmd->add_option("--seed", gen_args.seed, "Random seed")->capture_default_str();
  gen_cmd->add_option("--out-dir", gen_args.out_dir, "Output directory")->required();

  DataArgs export_args;
  CLI::App* export_cmd = app.add_subcommand("export-ax", "Re-export a dataset in plantXXX_rgb.png + CSV form");
  export_cmd->add_option("--data-dir", export_args.data_dir, "Dataset directory")->required();
  export_cmd->add_option("--csv", export_args.csv, "CSV of filename,count");
  export_cmd->add_option("--target", export_args.target, "Preprocess to this square size")
      ->capture_default_str();
  export_cmd->add_flag("--no-masks", export_args.no_masks, "Ignore *_fg.png masks");
  export_cmd->add_option("--out-dir", export_args.out_dir, "Output directory")->required();

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "Leaf-count experiment: real vs real+synthetic training");
  eval_cmd->add_option("--data-dir", eval_args.data.data_dir, "Real dataset directory")->required();
  eval_cmd->add_option("--csv", eval_args.data.csv, "Real dataset CSV");
  eval_cmd->add_option("--synthetic-dir", eval_args.synthetic_dir, "Synthetic dataset directory");
  eval_cmd->add_option("--synthetic-csv", eval_args.synthetic_csv, "Synthetic dataset CSV");
  eval_cmd->add_flag("--no-masks", eval_args.data.no_masks, "Ignore *_fg.png masks");
  eval_cmd->add_option("--folds", eval_args.folds, "Cross-validation folds")->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed, "Random seed for the fold split")->capture_default_str();
  eval_cmd->add_option("--input-size", eval_args.reg.input_size, "Regressor input size")
      ->capture_default_str();
  eval_cmd->add_option("--reg-epochs", eval_args.reg.epochs, "Regressor training epochs")
      ->capture_default_str();
  eval_cmd->add_option("--reg-width", eval_args.reg.width, "Regressor base width")->capture_default_str();
  eval_cmd->add_option("--reg-lr", eval_args.reg.learning_rate, "Regressor learning rate")
      ->capture_default_str();
  eval_cmd->add_option("--reg-seed", eval_args.reg.seed, "Regressor init seed")->capture_default_str();
  eval_cmd->add_option("--real-name", eval_args.real_name, "Label for the real condition")
      ->capture_default_str();
  eval_cmd->add_option("--synthetic-name", eval_args.synthetic_name, "Label for the synthetic condition")
      ->capture_default_str();
  eval_cmd->add_option("--out-dir", eval_args.data.out_dir, "Report directory")->required();

  std::uint64_t gradcheck_seed = 7;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every layer and both networks");
  grad_cmd->add_option("--seed", gradcheck_seed, "Random seed")->capture_default_str();

  std::vector<const char*> argv;
  argv.push_back("rosette-gan");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      return app.exit(e);
    }
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*augment_cmd) return run_augment(augment_args);
    if (*train_cmd) return run_train(train_args);
    if (*gen_cmd) return run_generate(gen_args);
    if (*export_cmd) return run_export_ax(export_args);
    if (*eval_cmd) return run_evaluate(eval_args);
    if (*grad_cmd) return run_gradcheck(gradcheck_seed);
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << "no subcommand given\n" << app.help() << "\n";
  return 1;
}

}  // namespace rgan
