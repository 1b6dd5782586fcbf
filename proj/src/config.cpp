#include "gprn/config.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace gprn {

using nlohmann::json;

TrainOptions RunConfig::train_options() const {
  TrainOptions options;
  options.adam = adam;
  options.seed = seed;
  options.jitter = jitter;
  options.mean_scale = mean_scale;
  options.cov_scale = cov_scale;
  options.init_hyper.theta_f = {std::log(init_lengthscale), std::log(init_amplitude)};
  options.init_hyper.theta_w = {std::log(init_lengthscale), std::log(init_amplitude)};
  options.init_hyper.log_sigma_f = std::log(init_sigma_f);
  options.init_hyper.log_sigma_y = std::log(init_sigma_y);
  options.diagonal_covariance = diagonal_covariance;
  return options;
}

TensorizationSpec RunConfig::tensorization(Index d_total) const {
  if (!tensor_dims.empty()) {
    const TensorizationSpec spec = TensorizationSpec::explicit_dims(tensor_dims);
    if (spec.D() != d_total)
      throw ConfigError("config: tensor_dims product " + std::to_string(spec.D()) + " != output dimension " +
                        std::to_string(d_total));
    return spec;
  }
  return TensorizationSpec::equal_modes(d_total, tensor_modes);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: malformed JSON in " + path + ": " + e.what());
  }

  RunConfig c;
  try {
    c.dataset_path = j.value("dataset", c.dataset_path);
    c.k = j.value("k", c.k);
    c.tensor_modes = j.value("tensor_modes", c.tensor_modes);
    if (j.contains("tensor_dims")) c.tensor_dims = j.at("tensor_dims").get<std::vector<Index>>();
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
    c.adam.epochs = j.value("epochs", c.adam.epochs);
    c.seed = j.value("seed", c.seed);
    c.train_fraction = j.value("train_fraction", c.train_fraction);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.jitter = j.value("jitter", c.jitter);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.normalize_inputs = j.value("normalize_inputs", c.normalize_inputs);
    c.mean_scale = j.value("mean_scale", c.mean_scale);
    c.cov_scale = j.value("cov_scale", c.cov_scale);
    c.init_lengthscale = j.value("init_lengthscale", c.init_lengthscale);
    c.init_amplitude = j.value("init_amplitude", c.init_amplitude);
    c.init_sigma_f = j.value("init_sigma_f", c.init_sigma_f);
    c.init_sigma_y = j.value("init_sigma_y", c.init_sigma_y);
    c.diagonal_covariance = j.value("diagonal_covariance", c.diagonal_covariance);
    c.predictive_samples = j.value("predictive_samples", c.predictive_samples);
  } catch (const json::exception& e) {
    throw ConfigError("config: bad field in " + path + ": " + e.what());
  }
  return c;
}

void validate(const RunConfig& config) {
  if (config.k < 1) throw ConfigError("config: k must be >= 1");
  validate(config.adam);
  if (config.train_fraction <= 0.0 || config.train_fraction > 1.0)
    throw ConfigError("config: train_fraction must lie in (0, 1]");
  if (config.test_fraction < 0.0 || config.train_fraction + config.test_fraction > 1.0 + 1e-12)
    throw ConfigError("config: fractions must sum to at most 1");
  if (config.tensor_modes < 1) throw ConfigError("config: tensor_modes must be >= 1");
  if (config.init_lengthscale <= 0.0 || config.init_amplitude <= 0.0 || config.init_sigma_f <= 0.0 ||
      config.init_sigma_y <= 0.0)
    throw ConfigError("config: initial kernel and noise parameters must be positive");
  if (config.predictive_samples < 0) throw ConfigError("config: predictive_samples must be >= 0");
}

}  // namespace gprn
