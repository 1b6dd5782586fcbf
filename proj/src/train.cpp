#include "gprn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace gprn {

namespace {

// sigma_f, sigma_y are floored at exp(-10): sigma_y -> 0 makes the
// likelihood term singular.
constexpr double kLogSigmaFloor = -10.0;

void clamp_hypers(const ParamLayout& layout, VectorXd& params) {
  double* h = params.data() + layout.hyper().offset;
  h[4] = std::max(h[4], kLogSigmaFloor);
  h[5] = std::max(h[5], kLogSigmaFloor);
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

TrainedModel finalize_model(ParamLayout layout, VectorXd params, MatrixXd x_train,
                            std::optional<NormalizationRecord> normalization, double jitter, std::uint64_t seed,
                            int epochs_run) {
  const InferenceState state = unpack(layout, params);
  const double sf = state.hyper.sigma_f();
  KernelMatrix kf = gram(x_train, state.hyper.theta_f, sf * sf, jitter);
  KernelMatrix kw = gram(x_train, state.hyper.theta_w, 0.0, jitter);
  return TrainedModel{std::move(layout), std::move(params), std::move(x_train), std::move(normalization),
                      jitter,            std::move(kf),     std::move(kw),      seed,
                      epochs_run,        ElboBreakdown{}};
}

std::pair<TrainedModel, TrainTrace> train(const Dataset& data, int k_latent, const TensorizationSpec& spec,
                                          const TrainOptions& options) {
  validate(options.adam);
  validate_dataset(data);
  if (k_latent < 1) throw ConfigError("train: K must be >= 1");
  if (data.output_dim() != spec.D()) throw ConfigError("train: tensorization does not match output dimension");

  const Index n = data.n();
  const ParamLayout layout(n, k_latent, spec);

  // Factors start at cov_scale * I; under diagonal_covariance their
  // strict-lower gradients are masked, so they stay diagonal all run.
  auto [qf, qw] = init_posteriors(n, k_latent, spec, options.seed, options.mean_scale, options.cov_scale);
  VectorXd params = pack(layout, InferenceState{std::move(qf), std::move(qw), options.init_hyper});
  clamp_hypers(layout, params);

  TrainTrace trace;
  trace.epochs.reserve(static_cast<std::size_t>(options.adam.epochs));

  AdamConfig adam_cfg = options.adam;
  AdamState state = AdamState::init(params);
  VectorXd last_good = state.params;
  bool retried = false;

  for (int epoch = 0; epoch < options.adam.epochs; ++epoch) {
    const double t0 = now_seconds();
    ElboGradient eg = elbo_gradient(layout, state.params, data.X, data.Y, options.jitter,
                                    options.diagonal_covariance);
    const bool finite = std::isfinite(eg.value.total) && eg.grad.allFinite();
    if (!finite) {
      if (!retried) {
        // Divergence policy: halve the learning rate once and retry the
        // epoch from the last-good state.
        retried = true;
        adam_cfg.learning_rate *= 0.5;
        state = AdamState::init(last_good);
        --epoch;
        continue;
      }
      trace.aborted = true;
      trace.abort_reason = "non-finite ELBO or gradient at epoch " + std::to_string(epoch);
      state.params = last_good;
      break;
    }
    last_good = state.params;
    state = adam_step(state, eg.grad, adam_cfg);
    clamp_hypers(layout, state.params);
    trace.epochs.push_back(EpochRecord{epoch, eg.value, eg.grad.norm(), now_seconds() - t0});
  }

  TrainedModel model = finalize_model(layout, state.params, data.X, data.normalization, options.jitter,
                                      options.seed, static_cast<int>(trace.epochs.size()));
  model.final_elbo = elbo_with_kernels(model.state(), data.Y, model.kf, model.kw);
  if (!std::isfinite(model.final_elbo.total)) {
    // Fall back to the last state whose ELBO evaluated finite.
    model = finalize_model(model.layout, last_good, data.X, data.normalization, options.jitter, options.seed,
                           static_cast<int>(trace.epochs.size()));
    model.final_elbo = elbo_with_kernels(model.state(), data.Y, model.kf, model.kw);
    trace.aborted = true;
    if (trace.abort_reason.empty()) trace.abort_reason = "non-finite ELBO at final parameters";
  }
  return {std::move(model), std::move(trace)};
}

void write_trace_csv(const std::string& path, const TrainTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataError("write_trace_csv: cannot open " + path);
  out << "epoch,kl_w,kl_f,exp_loglik,total,grad_norm,seconds\n";
  char line[512];
  for (const auto& e : trace.epochs) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.elbo.kl_w, e.elbo.kl_f,
                  e.elbo.exp_loglik, e.elbo.total, e.grad_norm, e.seconds);
    out << line;
  }
}

}  // namespace gprn
