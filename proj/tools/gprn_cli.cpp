// gprn: multi-output GP regression network with Kronecker-structured
// variational inference. Subcommands: train | predict | evaluate |
// gradcheck | oracle | bench | synth.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gprn/checkpoint.hpp"
#include "gprn/config.hpp"
#include "gprn/data_io.hpp"
#include "gprn/oracle.hpp"
#include "gprn/predict.hpp"

namespace {

using nlohmann::json;
using namespace gprn;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitOracle = 5;

void print_error(const std::string& command, int code, const std::string& message) {
  json err = {{"error", {{"code", code}, {"command", command}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

json metrics_json(const MetricsReport& report) {
  json j;
  j["mae"] = report.mae;
  j["rmse"] = report.rmse;
  j["nrmse"] = report.nrmse;
  j["nrmse_normalizer"] = report.normalizer;
  j["nrmse_normalizer_definition"] = "range of test targets";
  j["zero_range"] = report.zero_range;
  j["per_output_mae"] =
      std::vector<double>(report.per_output_mae.data(), report.per_output_mae.data() + report.per_output_mae.size());
  return j;
}

MatrixXd model_inputs(const TrainedModel& model, const MatrixXd& raw_x) {
  return model.normalization ? apply_normalization(*model.normalization, raw_x) : raw_x;
}

struct TrainFlags {
  std::string config_path;
  std::string data_path;
  std::string output_dir;
  int k = -1;
  int epochs = -1;
  double learning_rate = -1.0;
  std::int64_t seed = -1;
  std::vector<Index> dims;
  int modes = -1;
  double jitter = -2.0;
  bool diagonal = false;
  bool no_normalize = false;
};

RunConfig resolve_config(const TrainFlags& flags) {
  RunConfig config;
  if (!flags.config_path.empty()) config = load_run_config(flags.config_path);
  if (!flags.data_path.empty()) config.dataset_path = flags.data_path;
  if (!flags.output_dir.empty()) config.output_dir = flags.output_dir;
  if (flags.k > 0) config.k = flags.k;
  if (flags.epochs >= 0) config.adam.epochs = flags.epochs;
  if (flags.learning_rate > 0) config.adam.learning_rate = flags.learning_rate;
  if (flags.seed >= 0) config.seed = static_cast<std::uint64_t>(flags.seed);
  if (!flags.dims.empty()) config.tensor_dims = flags.dims;
  if (flags.modes > 0) config.tensor_modes = flags.modes;
  if (flags.jitter > -2.0) config.jitter = flags.jitter;
  if (flags.diagonal) config.diagonal_covariance = true;
  if (flags.no_normalize) config.normalize_inputs = false;
  validate(config);
  if (config.dataset_path.empty()) throw ConfigError("train: no dataset given (config `dataset` or --data)");
  return config;
}

int run_train(const TrainFlags& flags) {
  const RunConfig config = resolve_config(flags);
  const Dataset raw = load_csv(config.dataset_path);
  auto [train_raw, test_raw] = split(raw, config.train_fraction, config.test_fraction, config.seed);

  Dataset train_data = config.normalize_inputs ? normalize(train_raw) : train_raw;
  const TensorizationSpec spec = config.tensorization(train_data.output_dim());

  auto [model, trace] = train(train_data, config.k, spec, config.train_options());

  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  const std::string checkpoint_dir = (fs::path(config.output_dir) / "checkpoint").string();
  save_checkpoint(checkpoint_dir, model);
  write_trace_csv((fs::path(config.output_dir) / "trace.csv").string(), trace);
  if (test_raw.n() > 0) save_csv((fs::path(config.output_dir) / "test.csv").string(), test_raw);

  json summary;
  summary["checkpoint"] = checkpoint_dir;
  summary["epochs_run"] = model.epochs_run;
  summary["aborted"] = trace.aborted;
  if (trace.aborted) summary["abort_reason"] = trace.abort_reason;
  summary["final_elbo"] = {{"kl_w", model.final_elbo.kl_w},
                           {"kl_f", model.final_elbo.kl_f},
                           {"exp_loglik", model.final_elbo.exp_loglik},
                           {"total", model.final_elbo.total}};
  summary["train_rows"] = train_data.n();
  summary["test_rows"] = test_raw.n();
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

int run_predict(const std::string& checkpoint_dir, const std::string& data_path, const std::string& out_path) {
  const TrainedModel model = load_checkpoint(checkpoint_dir);
  const Dataset test = load_csv(data_path);
  const ProjectedPosterior proj = project(model, model_inputs(model, test.X));
  const MatrixXd y_pred = predict_mean(proj);

  std::ofstream out(out_path);
  if (!out) throw DataError("predict: cannot open " + out_path);
  for (Index c = 0; c < y_pred.cols(); ++c) out << (c ? "," : "") << "y" << c;
  out << "\n";
  char buf[64];
  for (Index r = 0; r < y_pred.rows(); ++r) {
    for (Index c = 0; c < y_pred.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", y_pred(r, c));
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
  std::cout << json{{"predictions", out_path}, {"rows", y_pred.rows()}, {"outputs", y_pred.cols()}}.dump() << "\n";
  return kExitOk;
}

int run_evaluate(const std::string& checkpoint_dir, const std::string& data_path, const std::string& out_path,
                 int predictive_samples, std::uint64_t predictive_seed, bool per_output) {
  const TrainedModel model = load_checkpoint(checkpoint_dir);
  const Dataset test = load_csv(data_path);
  const MatrixXd x = model_inputs(model, test.X);
  const MatrixXd y_pred = predict_mean(project(model, x));
  MetricsReport report = metrics(y_pred, test.Y);

  json j = metrics_json(report);
  if (predictive_samples > 0) {
    const double value = predictive_loglik(model, x, test.Y, predictive_samples, predictive_seed, per_output);
    j["predictive_loglik"] = {{"T", predictive_samples}, {"seed", predictive_seed}, {"value", value}};
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw DataError("evaluate: cannot open " + out_path);
    out << j.dump(2) << "\n";
  }
  std::cout << j.dump() << "\n";
  return kExitOk;
}

int run_gradcheck(Index n, int k, std::vector<Index> dims, int instances, double h, std::uint64_t seed) {
  if (dims.empty()) dims = {2, 2};
  const TensorizationSpec spec = TensorizationSpec::explicit_dims(dims);
  Rng rng(seed);
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  bool ok = true;
  for (int i = 0; i < instances; ++i) {
    const MatrixXd x = 2.0 * normal_matrix(rng, n, 2);
    const MatrixXd y = normal_matrix(rng, n, spec.D());
    const ParamLayout layout(n, k, spec);
    auto [qf, qw] = init_posteriors(n, k, spec, rng(), 0.5, 0.3);
    GprnHyper hyper;
    hyper.log_sigma_f = -1.5;
    hyper.log_sigma_y = -1.0;
    const VectorXd params = pack(layout, InferenceState{std::move(qf), std::move(qw), hyper});
    const GradCheckReport report = grad_check(layout, params, x, y, h);
    worst_rel = std::max(worst_rel, report.worst_rel);
    worst_abs = std::max(worst_abs, report.worst_abs);
    if (!report.passed()) ok = false;
  }
  json j = {{"instances", instances}, {"h", h},         {"worst_rel", worst_rel},
            {"worst_abs", worst_abs}, {"passed", ok},   {"rel_tolerance", 1e-4},
            {"abs_tolerance", 1e-7},  {"n", n},         {"k", k}};
  std::cout << j.dump() << "\n";
  if (!ok) {
    print_error("gradcheck", kExitNumerical, "finite-difference check failed");
    return kExitNumerical;
  }
  return kExitOk;
}

int run_oracle(int instances, std::uint64_t seed, double tol) {
  const OracleReport report = run_oracle_suite(instances, seed, tol);
  for (const auto& c : report.cases)
    std::cout << (c.passed ? "[pass] " : "[FAIL] ") << c.name << " rel_error=" << c.rel_error << "\n";
  std::cout << json{{"cases", report.cases.size()},
                    {"failures", report.failures},
                    {"worst_rel_error", report.worst_rel_error}}
                   .dump()
            << "\n";
  if (report.failures > 0) {
    print_error("oracle", kExitOracle, std::to_string(report.failures) + " oracle cases failed");
    return kExitOracle;
  }
  return kExitOk;
}

int run_bench(Index n, std::vector<int> k_set, std::vector<Index> d_grid, int modes, int epochs,
              const std::string& out_path, std::uint64_t seed) {
  std::ofstream out(out_path);
  if (!out) throw DataError("bench: cannot open " + out_path);
  out << "d,k,epochs,mean_epoch_seconds,total_seconds\n";
  for (Index d : d_grid) {
    const TensorizationSpec spec = TensorizationSpec::equal_modes(d, modes);
    for (int k : k_set) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(d * 131 + k)));
      const MatrixXd x = normal_matrix(rng, n, 3);
      const MatrixXd y = normal_matrix(rng, n, d);
      Dataset data{x, y, std::nullopt};
      TrainOptions options;
      options.adam.epochs = epochs;
      options.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      auto [model, trace] = train(data, k, spec, options);
      const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      double mean_epoch = 0.0;
      for (const auto& e : trace.epochs) mean_epoch += e.seconds;
      if (!trace.epochs.empty()) mean_epoch /= static_cast<double>(trace.epochs.size());
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%lld,%d,%d,%.6g,%.6g\n", static_cast<long long>(d), k, epochs, mean_epoch,
                    total);
      out << buf;
      std::cout << "bench d=" << d << " k=" << k << " mean epoch " << mean_epoch << " s\n";
    }
  }
  return kExitOk;
}

int run_synth(const std::string& out_path, Index n, int k, std::vector<Index> dims, Index d_flat, int modes,
              Index input_dim, double lengthscale, double amplitude, double sigma_f, double sigma_y,
              std::uint64_t seed) {
  TensorizationSpec spec = dims.empty() ? TensorizationSpec::equal_modes(d_flat, modes)
                                        : TensorizationSpec::explicit_dims(dims);
  GprnHyper hyper;
  hyper.theta_f = {std::log(lengthscale), std::log(amplitude)};
  hyper.theta_w = {std::log(lengthscale), std::log(amplitude)};
  hyper.log_sigma_f = std::log(sigma_f);
  hyper.log_sigma_y = std::log(sigma_y);

  Rng rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  MatrixXd x(n, input_dim);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < input_dim; ++c) x(r, c) = u(rng);

  const GprnSample sample = sample_gprn(x, hyper, k, spec, seed);
  save_csv(out_path, sample.data);

  // Latents sidecar for recovery experiments.
  json sidecar;
  sidecar["tensor_dims"] = spec.dims();
  sidecar["k"] = k;
  sidecar["n"] = n;
  sidecar["seed"] = seed;
  sidecar["latents"] = std::vector<double>(sample.latents.data(), sample.latents.data() + sample.latents.size());
  sidecar["latents_order"] = "column-major N x K";
  sidecar["weights"] = std::vector<double>(sample.weights.data(), sample.weights.data() + sample.weights.size());
  sidecar["weights_order"] = "row-major N x K x d1 x ... x dM";
  std::ofstream side(out_path + ".latents.json");
  if (!side) throw DataError("synth: cannot open " + out_path + ".latents.json");
  side << sidecar.dump() << "\n";

  std::cout << json{{"dataset", out_path}, {"rows", n}, {"outputs", spec.D()}}.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process regression network with structured variational inference"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "fit a model and write a checkpoint");
  train_cmd->add_option("--config", train_flags.config_path, "JSON run configuration");
  train_cmd->add_option("--data", train_flags.data_path, "dataset CSV (overrides config)");
  train_cmd->add_option("--outdir", train_flags.output_dir, "output directory");
  train_cmd->add_option("--k", train_flags.k, "number of latent functions");
  train_cmd->add_option("--epochs", train_flags.epochs, "training epochs");
  train_cmd->add_option("--lr", train_flags.learning_rate, "Adam learning rate");
  train_cmd->add_option("--seed", train_flags.seed, "random seed");
  train_cmd->add_option("--dims", train_flags.dims, "explicit tensorization dims")->delimiter(',');
  train_cmd->add_option("--modes", train_flags.modes, "equal-mode tensorization order");
  train_cmd->add_option("--jitter", train_flags.jitter, "kernel jitter (-1 = auto)");
  train_cmd->add_flag("--diagonal", train_flags.diagonal, "diagonal-covariance ablation");
  train_cmd->add_flag("--no-normalize", train_flags.no_normalize, "skip input normalization");

  std::string checkpoint_dir, data_path, out_path;
  auto* predict_cmd = app.add_subcommand("predict", "posterior-mean predictions to CSV");
  predict_cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  predict_cmd->add_option("--data", data_path, "test CSV")->required();
  predict_cmd->add_option("--out", out_path, "output CSV")->required();

  std::string eval_checkpoint, eval_data, eval_out;
  int eval_samples = 0;
  std::int64_t eval_pred_seed = 0;
  bool eval_per_output = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "metrics report against held-out data");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--data", eval_data, "test CSV")->required();
  eval_cmd->add_option("--out", eval_out, "metrics JSON path");
  eval_cmd->add_option("--predictive-samples", eval_samples, "Monte-Carlo samples for the predictive log likelihood");
  eval_cmd->add_option("--predictive-seed", eval_pred_seed, "seed for the predictive estimate");
  eval_cmd->add_flag("--per-output", eval_per_output, "per-output sampling mode (large D)");

  Index gc_n = 3;
  int gc_k = 2, gc_instances = 20;
  double gc_h = 1e-5;
  std::int64_t gc_seed = 0;
  std::vector<Index> gc_dims;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc_cmd->add_option("--n", gc_n, "training points per instance");
  gc_cmd->add_option("--k", gc_k, "latent functions");
  gc_cmd->add_option("--dims", gc_dims, "tensorization dims")->delimiter(',');
  gc_cmd->add_option("--instances", gc_instances, "number of random instances");
  gc_cmd->add_option("--step", gc_h, "finite-difference step");
  gc_cmd->add_option("--seed", gc_seed, "random seed");

  int oracle_instances = 100;
  std::int64_t oracle_seed = 0;
  double oracle_tol = 1e-9;
  auto* oracle_cmd = app.add_subcommand("oracle", "structured-vs-dense ELBO equivalence suite");
  oracle_cmd->add_option("--instances", oracle_instances, "randomized instances");
  oracle_cmd->add_option("--seed", oracle_seed, "random seed");
  oracle_cmd->add_option("--tol", oracle_tol, "relative tolerance");

  Index bench_n = 64;
  std::vector<int> bench_k{2, 5, 15, 50};
  std::vector<Index> bench_d{1024, 4096};
  int bench_modes = 2, bench_epochs = 20;
  std::string bench_out = "bench.csv";
  std::int64_t bench_seed = 0;
  auto* bench_cmd = app.add_subcommand("bench", "per-epoch timing sweep over K and D");
  bench_cmd->add_option("--n", bench_n, "training points");
  bench_cmd->add_option("--k-set", bench_k, "latent-function counts")->delimiter(',');
  bench_cmd->add_option("--d-grid", bench_d, "output dimensions")->delimiter(',');
  bench_cmd->add_option("--modes", bench_modes, "tensorization order");
  bench_cmd->add_option("--epochs", bench_epochs, "epochs per timing point");
  bench_cmd->add_option("--out", bench_out, "output CSV");
  bench_cmd->add_option("--seed", bench_seed, "random seed");

  std::string synth_out = "synthetic.csv";
  Index synth_n = 100, synth_d = 16, synth_p = 1;
  int synth_k = 2, synth_modes = 2;
  std::vector<Index> synth_dims;
  double synth_l = 1.0, synth_a = 1.0, synth_sf = 0.05, synth_sy = 0.01;
  std::int64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "generate a dataset from the generative model");
  synth_cmd->add_option("--out", synth_out, "output CSV");
  synth_cmd->add_option("--n", synth_n, "rows");
  synth_cmd->add_option("--k", synth_k, "latent functions");
  synth_cmd->add_option("--d", synth_d, "flat output dimension");
  synth_cmd->add_option("--dims", synth_dims, "explicit tensorization dims")->delimiter(',');
  synth_cmd->add_option("--modes", synth_modes, "tensorization order");
  synth_cmd->add_option("--input-dim", synth_p, "input dimension");
  synth_cmd->add_option("--lengthscale", synth_l, "true lengthscale");
  synth_cmd->add_option("--amplitude", synth_a, "true amplitude");
  synth_cmd->add_option("--sigma-f", synth_sf, "latent noise");
  synth_cmd->add_option("--sigma-y", synth_sy, "output noise");
  synth_cmd->add_option("--seed", synth_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("parse", kExitConfig, e.what());
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (train_cmd->parsed()) return run_train(train_flags);
    if (predict_cmd->parsed()) return run_predict(checkpoint_dir, data_path, out_path);
    if (eval_cmd->parsed())
      return run_evaluate(eval_checkpoint, eval_data, eval_out, eval_samples,
                          static_cast<std::uint64_t>(eval_pred_seed), eval_per_output);
    if (gc_cmd->parsed())
      return run_gradcheck(gc_n, gc_k, gc_dims, gc_instances, gc_h, static_cast<std::uint64_t>(gc_seed));
    if (oracle_cmd->parsed())
      return run_oracle(oracle_instances, static_cast<std::uint64_t>(oracle_seed), oracle_tol);
    if (bench_cmd->parsed())
      return run_bench(bench_n, bench_k, bench_d, bench_modes, bench_epochs, bench_out,
                       static_cast<std::uint64_t>(bench_seed));
    if (synth_cmd->parsed())
      return run_synth(synth_out, synth_n, synth_k, synth_dims, synth_d, synth_modes, synth_p, synth_l, synth_a,
                       synth_sf, synth_sy, static_cast<std::uint64_t>(synth_seed));
  } catch (const ConfigError& e) {
    print_error(command, kExitConfig, e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    print_error(command, kExitData, e.what());
    return kExitData;
  } catch (const NumericalError& e) {
    print_error(command, kExitNumerical, e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    print_error(command, kExitNumerical, e.what());
    return kExitNumerical;
  }
  return kExitOk;
}
