#include "rgan/config.hpp"

#include <sstream>

namespace rgan {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::string fmt_float(float v) {
  std::ostringstream out;
  out.precision(9);
  out << v;
  return out.str();
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ValueError("missing config key '" + key + "'");
  return it->second;
}

}  // namespace

int TrainConfig::num_layers() const {
  int layers = 0;
  for (int r = 4; r < resolution; r *= 2) ++layers;
  return layers;
}

int TrainConfig::effective_batch_size() const {
  if (batch_size > 0) return batch_size;
  return resolution >= 128 ? 32 : 64;
}

void TrainConfig::validate() const {
  if (!power_of_two(resolution) || resolution < 8 || resolution > 512) {
    throw ValueError("resolution must be a power of two in [8, 512], got " +
                     std::to_string(resolution));
  }
  if (z_dim < 1 || fc1_width < 1 || base_width < 1) throw ValueError("layer widths must be positive");
  if (class_count < 0) throw ValueError("class_count must be >= 0");
  if (kernel_size < 3 || kernel_size % 2 == 0) throw ValueError("kernel_size must be odd and >= 3");
  if (stride != 2) throw ValueError("only stride 2 architectures are supported");
  if (!(leaky_alpha > 0.0f && leaky_alpha < 1.0f)) throw ValueError("leaky_alpha must be in (0,1)");
  if (!(bn_momentum >= 0.0f && bn_momentum < 1.0f)) throw ValueError("bn_momentum must be in [0,1)");
  if (!(bn_epsilon > 0.0f)) throw ValueError("bn_epsilon must be positive");
  if (batch_size < 0) throw ValueError("batch_size must be >= 0");
  if (epochs < 0) throw ValueError("epochs must be >= 0");
  if (d_steps < 1) throw ValueError("d_steps must be >= 1");
  if (checkpoint_interval < 1) throw ValueError("checkpoint_interval must be >= 1");
  if (sample_grid < 1) throw ValueError("sample_grid must be >= 1");
}

std::map<std::string, std::string> TrainConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["resolution"] = std::to_string(resolution);
  kv["z_dim"] = std::to_string(z_dim);
  kv["fc1_width"] = std::to_string(fc1_width);
  kv["base_width"] = std::to_string(base_width);
  kv["class_count"] = std::to_string(class_count);
  kv["min_count"] = std::to_string(min_count);
  kv["kernel_size"] = std::to_string(kernel_size);
  kv["stride"] = std::to_string(stride);
  kv["leaky_alpha"] = fmt_float(leaky_alpha);
  kv["bn_momentum"] = fmt_float(bn_momentum);
  kv["bn_epsilon"] = fmt_float(bn_epsilon);
  kv["bn_edge_layers"] = bn_edge_layers ? "1" : "0";
  kv["batch_size"] = std::to_string(batch_size);
  kv["epochs"] = std::to_string(epochs);
  kv["learning_rate"] = fmt_float(learning_rate);
  kv["beta1"] = fmt_float(beta1);
  kv["beta2"] = fmt_float(beta2);
  kv["adam_epsilon"] = fmt_float(adam_epsilon);
  kv["optimizer"] = optimizer == OptimizerKind::adam ? "adam" : "sgd";
  kv["gen_loss"] = gen_loss == GenLossKind::non_saturating ? "non_saturating" : "minimax";
  kv["condition_sampling"] = condition_sampling == ConditionSampling::uniform ? "uniform" : "empirical";
  kv["d_steps"] = std::to_string(d_steps);
  kv["seed"] = std::to_string(seed);
  kv["checkpoint_interval"] = std::to_string(checkpoint_interval);
  kv["sample_grid"] = std::to_string(sample_grid);
  return kv;
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  c.resolution = std::stoi(require(kv, "resolution"));
  c.z_dim = std::stoi(require(kv, "z_dim"));
  c.fc1_width = std::stoi(require(kv, "fc1_width"));
  c.base_width = std::stoi(require(kv, "base_width"));
  c.class_count = std::stoi(require(kv, "class_count"));
  c.min_count = std::stoi(require(kv, "min_count"));
  c.kernel_size = std::stoi(require(kv, "kernel_size"));
  c.stride = std::stoi(require(kv, "stride"));
  c.leaky_alpha = std::stof(require(kv, "leaky_alpha"));
  c.bn_momentum = std::stof(require(kv, "bn_momentum"));
  c.bn_epsilon = std::stof(require(kv, "bn_epsilon"));
  c.bn_edge_layers = require(kv, "bn_edge_layers") == "1";
  c.batch_size = std::stoi(require(kv, "batch_size"));
  c.epochs = std::stoi(require(kv, "epochs"));
  c.learning_rate = std::stof(require(kv, "learning_rate"));
  c.beta1 = std::stof(require(kv, "beta1"));
  c.beta2 = std::stof(require(kv, "beta2"));
  c.adam_epsilon = std::stof(require(kv, "adam_epsilon"));
  const std::string& opt = require(kv, "optimizer");
  if (opt == "adam") {
    c.optimizer = OptimizerKind::adam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::sgd;
  } else {
    throw ValueError("unknown optimizer '" + opt + "'");
  }
  const std::string& gl = require(kv, "gen_loss");
  if (gl == "non_saturating") {
    c.gen_loss = GenLossKind::non_saturating;
  } else if (gl == "minimax") {
    c.gen_loss = GenLossKind::minimax;
  } else {
    throw ValueError("unknown gen_loss '" + gl + "'");
  }
  const std::string& cs = require(kv, "condition_sampling");
  if (cs == "uniform") {
    c.condition_sampling = ConditionSampling::uniform;
  } else if (cs == "empirical") {
    c.condition_sampling = ConditionSampling::empirical;
  } else {
    throw ValueError("unknown condition_sampling '" + cs + "'");
  }
  c.d_steps = std::stoi(require(kv, "d_steps"));
  c.seed = std::stoull(require(kv, "seed"));
  c.checkpoint_interval = std::stoi(require(kv, "checkpoint_interval"));
  c.sample_grid = std::stoi(require(kv, "sample_grid"));
  c.validate();
  return c;
}

}  // namespace rgan
