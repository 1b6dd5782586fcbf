#include "gprn/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace gprn {

namespace {

using nlohmann::json;

void atomic_write(const std::filesystem::path& path, const std::string& payload) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot open " + tmp.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw DataError("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json segment_json(const ParamLayout::Segment& seg) {
  return json{{"name", seg.name}, {"offset", seg.offset}, {"length", seg.length}};
}

}  // namespace

void save_checkpoint(const std::string& dir, const TrainedModel& model) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  const InferenceState state = model.state();
  json manifest;
  manifest["format_version"] = 1;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  manifest["n"] = model.layout.n();
  manifest["k"] = model.layout.k();
  manifest["input_dim"] = model.x_train.cols();
  manifest["tensor_dims"] = model.layout.spec().dims();
  json layout = json::array();
  for (const auto& seg : model.layout.segments()) layout.push_back(segment_json(seg));
  manifest["layout"] = layout;
  if (model.normalization) {
    json norm;
    norm["mean"] = std::vector<double>(model.normalization->mean.data(),
                                       model.normalization->mean.data() + model.normalization->mean.size());
    norm["std"] = std::vector<double>(model.normalization->std.data(),
                                      model.normalization->std.data() + model.normalization->std.size());
    norm["clamped_columns"] = model.normalization->clamped_columns;
    manifest["normalization"] = norm;
  } else {
    manifest["normalization"] = nullptr;
  }
  manifest["jitter"] = model.jitter;
  manifest["seed"] = model.seed;
  manifest["epochs_run"] = model.epochs_run;
  manifest["final_elbo"] = {{"kl_w", model.final_elbo.kl_w},
                            {"kl_f", model.final_elbo.kl_f},
                            {"exp_loglik", model.final_elbo.exp_loglik},
                            {"total", model.final_elbo.total}};
  manifest["hyper"] = {{"log_lengthscale_f", state.hyper.theta_f.log_lengthscale},
                       {"log_amplitude_f", state.hyper.theta_f.log_amplitude},
                       {"log_lengthscale_w", state.hyper.theta_w.log_lengthscale},
                       {"log_amplitude_w", state.hyper.theta_w.log_amplitude},
                       {"log_sigma_f", state.hyper.log_sigma_f},
                       {"log_sigma_y", state.hyper.log_sigma_y}};
  manifest["arrays"] = {
      {"params", {{"offset", 0}, {"length", model.params.size()}}},
      {"x_train", {{"offset", model.params.size()}, {"rows", model.x_train.rows()}, {"cols", model.x_train.cols()}}}};

  // Raw little-endian doubles: params, then X row-major.
  std::string blob;
  blob.resize(static_cast<std::size_t>(model.params.size() + model.x_train.size()) * sizeof(double));
  std::memcpy(blob.data(), model.params.data(), static_cast<std::size_t>(model.params.size()) * sizeof(double));
  RowMajorMatrix x_rm = model.x_train;
  std::memcpy(blob.data() + static_cast<std::size_t>(model.params.size()) * sizeof(double), x_rm.data(),
              static_cast<std::size_t>(x_rm.size()) * sizeof(double));

  atomic_write(fs::path(dir) / "params.bin", blob);
  atomic_write(fs::path(dir) / "manifest.json", manifest.dump(2) + "\n");
}

TrainedModel load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf) throw DataError("checkpoint: cannot open manifest in " + dir);
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw DataError("checkpoint: malformed manifest: " + std::string(e.what()));
  }

  const Index n = manifest.at("n").get<Index>();
  const Index k = manifest.at("k").get<Index>();
  const Index p = manifest.at("input_dim").get<Index>();
  const std::vector<Index> dims = manifest.at("tensor_dims").get<std::vector<Index>>();
  const TensorizationSpec spec = TensorizationSpec::explicit_dims(dims);
  ParamLayout layout(n, k, spec);

  const Index param_len = manifest.at("arrays").at("params").at("length").get<Index>();
  if (param_len != layout.total()) throw DataError("checkpoint: parameter array length does not match layout");

  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw DataError("checkpoint: cannot open params.bin in " + dir);
  VectorXd params(param_len);
  bin.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(param_len * sizeof(double)));
  RowMajorMatrix x_rm(n, p);
  bin.read(reinterpret_cast<char*>(x_rm.data()), static_cast<std::streamsize>(n * p * sizeof(double)));
  if (!bin) throw DataError("checkpoint: params.bin truncated");

  std::optional<NormalizationRecord> normalization;
  if (!manifest.at("normalization").is_null()) {
    const auto& norm = manifest.at("normalization");
    NormalizationRecord record;
    const auto mean = norm.at("mean").get<std::vector<double>>();
    const auto sd = norm.at("std").get<std::vector<double>>();
    record.mean = Eigen::Map<const VectorXd>(mean.data(), static_cast<Index>(mean.size()));
    record.std = Eigen::Map<const VectorXd>(sd.data(), static_cast<Index>(sd.size()));
    record.clamped_columns = norm.at("clamped_columns").get<std::vector<Index>>();
    normalization = std::move(record);
  }

  TrainedModel model = finalize_model(layout, std::move(params), MatrixXd(x_rm), std::move(normalization),
                                      manifest.at("jitter").get<double>(), manifest.at("seed").get<std::uint64_t>(),
                                      manifest.at("epochs_run").get<int>());
  const auto& fe = manifest.at("final_elbo");
  model.final_elbo = ElboBreakdown{fe.at("kl_w").get<double>(), fe.at("kl_f").get<double>(),
                                   fe.at("exp_loglik").get<double>(), fe.at("total").get<double>()};
  return model;
}

}  // namespace gprn
