#pragma once

// End-to-end pipelines behind the `wpp` command line tool. Every pipeline
// reads a RunConfig, writes its artifacts into `out_dir` and lists each
// written file in `out_dir/manifest.txt`.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wpp/config.hpp"
#include "wpp/error.hpp"
#include "wpp/exact_transport.hpp"
#include "wpp/forward_operator.hpp"
#include "wpp/image.hpp"
#include "wpp/io.hpp"
#include "wpp/metrics.hpp"
#include "wpp/network.hpp"
#include "wpp/texture.hpp"
#include "wpp/transport.hpp"
#include "wpp/variational.hpp"

namespace wpp::pipelines {

namespace fs = std::filesystem;

inline std::vector<ConfigKey> dual_keys() {
  return {{"dual_steps", "20", "dual ascent iterations per potential update"},
          {"dual_step_size", "1", "dual ascent step size"},
          {"dual_decay", "0", "step t uses dual_step_size / (1 + dual_decay * t)"},
          {"dual_minibatch", "10000", "source patches per ascent step (0 = all)"}};
}

inline DualAscentConfig dual_from(const RunConfig& c, std::uint64_t seed) {
  DualAscentConfig d;
  d.steps = static_cast<int>(c.integer_at_least("dual_steps", 0));
  d.step_size = c.real_at_least("dual_step_size", 0.0, true);
  d.decay = c.real_at_least("dual_decay", 0.0);
  d.minibatch = c.integer_at_least("dual_minibatch", 0);
  d.seed = seed;
  return d;
}

inline std::vector<ConfigKey> with(std::vector<ConfigKey> a, const std::vector<ConfigKey>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

namespace detail {

inline std::string num(double v) { return io::format_double(v); }

inline std::ofstream open_csv(const fs::path& path, const std::string& header) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << header << "\n";
  return out;
}

inline PatchDistribution reference_patches(const Image& ref, Index patch, Index subsample, std::uint64_t seed) {
  return subsample_distribution(extract_patches(ref, patch, patch), subsample, seed);
}

inline ForwardOperator operator_from(const RunConfig& c) {
  ForwardOperator op;
  op.stride = c.integer_at_least("stride", 1);
  op.bias = c.real("bias");
  op.mode = c.choice("mode", {"strided", "fourier"}) == "strided" ? OperatorMode::StridedConv
                                                                  : OperatorMode::FourierDownsample;
  const Index ks = c.integer_at_least("kernel_size", 1);
  op.kernel = c.choice("kernel", {"gaussian", "delta"}) == "gaussian"
                  ? gaussian_kernel(ks, c.real_at_least("kernel_sigma", 0.0, true))
                  : delta_kernel(ks);
  return op;
}

inline std::string image_ext(const RunConfig& c) { return c.choice("format", {"png", "pgm"}) == "png" ? ".png" : ".pgm"; }

}  // namespace detail

// ---------------------------------------------------------------- gen-data

inline std::vector<ConfigKey> gen_data_schema() {
  return {{"out_dir", "", "output directory"},
          {"source_image", "", "high-res source image; empty = procedural texture"},
          {"texture_size", "512", "procedural texture width and training band height"},
          {"texture_cell", "12", "coarsest value-noise lattice spacing"},
          {"texture_seed", "0", "procedural texture seed"},
          {"ref_size", "200", "height of the reference band"},
          {"val_size", "128", "side of the held-out validation image"},
          {"crop_size", "100", "side of each high-res training crop"},
          {"num_train", "64", "number of low-res training images"},
          {"mode", "strided", "strided | fourier"},
          {"stride", "4", "subsampling factor"},
          {"kernel", "gaussian", "gaussian | delta"},
          {"kernel_size", "16", "blur kernel side"},
          {"kernel_sigma", "2", "Gaussian standard deviation"},
          {"bias", "0", "additive bias"},
          {"noise_sigma", "0.01", "white noise standard deviation"},
          {"seed", "0", "crop positions and noise seed"},
          {"format", "png", "png | pgm"}};
}

struct GenDataResult {
  fs::path manifest;
  ForwardOperator op;
  Image reference;
  Image val_hr;
  Image val_lr;
  std::vector<Image> train_hr;
  std::vector<Image> train_lr;
};

inline Image observe(const Image& hr, const ForwardOperator& op, double sigma, std::uint64_t seed) {
  return add_noise(apply_forward(hr, op), NoiseModel{sigma, seed});
}

inline GenDataResult gen_data(const RunConfig& c) {
  const fs::path out = c.str("out_dir");
  const Index ref_size = c.integer_at_least("ref_size", 1);
  const Index val_size = c.integer_at_least("val_size", 1);
  const Index crop_size = c.integer_at_least("crop_size", 1);
  const auto num_train = c.integer_at_least("num_train", 0);
  const double sigma = c.real_at_least("noise_sigma", 0.0);
  const std::uint64_t seed = c.seed("seed");
  const std::string ext = detail::image_ext(c);
  GenDataResult r;
  r.op = detail::operator_from(c);

  Image source;
  const Index band = c.integer_at_least("texture_size", 1);
  if (c.has("source_image")) {
    source = io::load_image(c.str("source_image"));
  } else {
    TextureSpec ts;
    ts.rows = ref_size + val_size + std::max(band, crop_size);
    ts.cols = std::max({band, val_size, crop_size});
    ts.cell = c.real_at_least("texture_cell", 1.0);
    ts.seed = c.seed("texture_seed");
    source = generate_texture(ts);
  }
  if (source.rows() < ref_size + val_size + crop_size || source.cols() < std::max(val_size, crop_size))
    throw DimensionError("source image " + wpp::detail::dims_str(source.rows(), source.cols()) +
                         " too small for reference, validation and training bands");

  // disjoint row bands: reference | validation | training crops
  r.reference = crop(source, 0, 0, ref_size, source.cols());
  r.val_hr = crop(source, ref_size, 0, val_size, val_size);
  r.val_lr = observe(r.val_hr, r.op, sigma, seed);
  const Index train_top = ref_size + val_size;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pr(train_top, source.rows() - crop_size);
  std::uniform_int_distribution<Index> pc(0, source.cols() - crop_size);
  for (long long i = 0; i < num_train; ++i) {
    const Index r0 = pr(rng), c0 = pc(rng);
    r.train_hr.push_back(crop(source, r0, c0, crop_size, crop_size));
    r.train_lr.push_back(observe(r.train_hr.back(), r.op, sigma, seed + 1 + static_cast<std::uint64_t>(i)));
  }

  io::Manifest m(out);
  io::save_image(r.reference, m.add("reference", "reference" + ext));
  io::save_image(r.val_hr, m.add("val_hr", "val_hr" + ext));
  io::save_image(r.val_lr, m.add("val_lr", "val_lr" + ext));
  for (std::size_t i = 0; i < r.train_lr.size(); ++i) {
    std::ostringstream name;
    name << "train/lr_" << std::setw(4) << std::setfill('0') << i << ext;
    io::save_image(r.train_lr[i], m.add("train_lr", name.str()));
  }
  const fs::path sidecar = m.add("operator", "operator.txt");
  io::save_operator(r.op, sidecar, m.add("kernel_image", "kernel.png"));
  m.write();
  r.manifest = out / "manifest.txt";
  return r;
}

// ------------------------------------------------------------- estimate-op

inline std::vector<ConfigKey> estimate_schema() {
  return {{"hr", "", "registered high-res image"},
          {"lr", "", "registered low-res image"},
          {"kernel_size", "15", "side of the estimated kernel"},
          {"stride", "0", "stride recorded in the sidecar; 0 = hr rows / lr rows"},
          {"true_operator", "", "optional sidecar of the true operator for an error report"},
          {"out_dir", "", "output directory"}};
}

struct EstimateResult {
  ForwardOperator op;
  std::optional<double> kernel_error;
  std::optional<double> bias_error;
};

inline EstimateResult run_estimate(const RunConfig& c) {
  const Image hr = io::load_image(c.str("hr"));
  const Image lr = io::load_image(c.str("lr"));
  const Index ks = c.integer_at_least("kernel_size", 1);
  const auto est = estimate_operator(hr, lr, ks);
  EstimateResult r;
  r.op.kernel = est.kernel;
  r.op.bias = est.bias;
  r.op.mode = OperatorMode::FourierDownsample;
  r.op.target_rows = lr.rows();
  r.op.target_cols = lr.cols();
  const auto stride = c.integer_at_least("stride", 0);
  r.op.stride = stride > 0 ? stride : std::max<Index>(1, hr.rows() / lr.rows());

  if (c.has("true_operator")) {
    const auto truth = io::load_operator(c.str("true_operator"));
    if (truth.kernel.rows() > ks || truth.kernel.cols() > ks)
      throw DimensionError("true kernel larger than the estimation window");
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(ks, ks);
    padded.topLeftCorner(truth.kernel.rows(), truth.kernel.cols()) = truth.kernel.matrix();
    r.kernel_error = (padded - est.kernel.matrix()).cwiseAbs().maxCoeff();
    r.bias_error = std::abs(truth.bias - est.bias);
  }

  io::Manifest m(c.str("out_dir"));
  const fs::path sidecar = m.add("operator", "operator.txt");
  io::save_operator(r.op, sidecar, m.add("kernel_image", "kernel.png"));
  {
    auto csv = detail::open_csv(m.add("report", "estimate.csv"),
                                "kernel_size,bias,kernel_sum,kernel_max_abs_error,bias_abs_error");
    csv << ks << "," << detail::num(est.bias) << "," << detail::num(est.kernel.matrix().sum()) << ","
        << (r.kernel_error ? detail::num(*r.kernel_error) : "") << ","
        << (r.bias_error ? detail::num(*r.bias_error) : "") << "\n";
  }
  m.write();
  return r;
}

// ------------------------------------------------------------- reconstruct

inline std::vector<ConfigKey> reconstruct_schema() {
  return with({{"lr", "", "low-res observation"},
               {"reference", "", "high-res reference image"},
               {"operator", "", "operator sidecar"},
               {"truth", "", "optional ground truth for a metrics report"},
               {"out_dir", "", "output directory"},
               {"lambda", "12.5", "prior weight"},
               {"patch_size", "6", "patch side"},
               {"reference_subsample", "10000", "reference patches kept"},
               {"iterations", "200", "Adam iterations"},
               {"learning_rate", "0.01", "Adam step size"},
               {"noise_sigma", "0.01", "noise level (reported rho = lambda / sigma^2)"},
               {"margin", "40", "boundary excluded from metrics"},
               {"seed", "0", "reference subsample and minibatch seed"}},
              dual_keys());
}

struct ReconstructRunResult {
  ReconstructionResult result;
  Image bicubic;
  std::optional<MetricsReport> wpp_metrics;
  std::optional<MetricsReport> bicubic_metrics;
};

inline ReconstructRunResult run_reconstruct(const RunConfig& c) {
  const Image y = io::load_image(c.str("lr"));
  const Image ref_img = io::load_image(c.str("reference"));
  const ForwardOperator op = io::load_operator(c.str("operator"));
  const std::uint64_t seed = c.seed("seed");

  ReconstructionConfig cfg;
  cfg.lambda = c.real_at_least("lambda", 0.0);
  cfg.noise_sigma = c.real_at_least("noise_sigma", 0.0, true);
  cfg.outer_iterations = static_cast<int>(c.integer_at_least("iterations", 0));
  cfg.adam.learning_rate = c.real_at_least("learning_rate", 0.0, true);
  const Index p = c.integer_at_least("patch_size", 1);
  cfg.patch = {p, p};
  cfg.reference_subsample = c.integer_at_least("reference_subsample", 1);
  cfg.dual = dual_from(c, seed);
  const auto ref = detail::reference_patches(ref_img, p, cfg.reference_subsample, seed);

  ReconstructRunResult r{reconstruct(y, op, ref, cfg), bicubic_upsample(y, op.stride), {}, {}};
  io::Manifest m(c.str("out_dir"));
  io::save_image(r.result.x, m.add("reconstruction", "reconstruction.png"));
  io::save_image(r.bicubic, m.add("bicubic", "bicubic.png"));
  {
    auto csv = detail::open_csv(m.add("trace", "trace.csv"), "iteration,total,fidelity,wpp");
    for (std::size_t i = 0; i < r.result.trace.size(); ++i) {
      const auto& t = r.result.trace[i];
      csv << i << "," << detail::num(t.total) << "," << detail::num(t.fidelity) << "," << detail::num(t.wpp) << "\n";
    }
  }
  if (c.has("truth")) {
    const Image truth = io::load_image(c.str("truth"));
    const Index margin = c.integer_at_least("margin", 0);
    r.wpp_metrics = evaluate(r.result.x, truth, margin);
    r.bicubic_metrics = evaluate(r.bicubic, truth, margin);
    auto csv = detail::open_csv(m.add("metrics", "metrics.csv"), "method,image,psnr,blur_effect,crop,zero_mse");
    for (auto [name, rep] : {std::pair{"wpp", *r.wpp_metrics}, std::pair{"bicubic", *r.bicubic_metrics}})
      csv << name << "," << fs::path(c.str("truth")).filename().string() << "," << detail::num(rep.psnr) << ","
          << detail::num(rep.blur_effect) << "," << rep.crop << ",0\n";
  }
  m.write();
  return r;
}

// ------------------------------------------------------------------- train

inline std::vector<ConfigKey> train_schema() {
  return with({{"data", "", "gen-data manifest (train_lr, reference, operator, val_lr entries)"},
               {"reference", "", "reference image; default from the manifest"},
               {"operator", "", "operator sidecar; default from the manifest"},
               {"out_dir", "", "output directory"},
               {"lambda", "12.5", "prior weight"},
               {"batch_size", "25", "images per batch"},
               {"epochs", "20", "passes over the training set"},
               {"learning_rate", "0.0001", "Adam step size"},
               {"depth", "8", "convolution layers"},
               {"channels", "32", "hidden channels"},
               {"patch_size", "6", "patch side"},
               {"reference_subsample", "10000", "reference patches kept"},
               {"seed", "0", "initialisation, batching and minibatch seed"}},
              dual_keys());
}

struct TrainRunResult {
  TrainResult result;
  std::optional<Image> val_reconstruction;
};

inline TrainRunResult run_train(const RunConfig& c) {
  const auto entries = io::Manifest::read(c.str("data"));
  std::vector<Image> dataset;
  fs::path ref_path, op_path, val_lr_path;
  for (const auto& [role, path] : entries) {
    if (role == "train_lr") dataset.push_back(io::load_image(path));
    else if (role == "reference") ref_path = path;
    else if (role == "operator") op_path = path;
    else if (role == "val_lr") val_lr_path = path;
  }
  if (c.has("reference")) ref_path = c.str("reference");
  if (c.has("operator")) op_path = c.str("operator");
  if (dataset.empty()) throw ConfigError("manifest lists no train_lr images");
  if (ref_path.empty() || op_path.empty()) throw ConfigError("reference and operator are required");
  const ForwardOperator op = io::load_operator(op_path);
  const std::uint64_t seed = c.seed("seed");

  TrainConfig cfg;
  cfg.lambda = c.real_at_least("lambda", 0.0);
  cfg.batch_size = c.integer_at_least("batch_size", 1);
  cfg.epochs = static_cast<int>(c.integer_at_least("epochs", 0));
  cfg.adam.learning_rate = c.real_at_least("learning_rate", 0.0, true);
  cfg.arch = {static_cast<int>(c.integer_at_least("depth", 1)), static_cast<int>(c.integer_at_least("channels", 1)),
              op.stride};
  const Index p = c.integer_at_least("patch_size", 1);
  cfg.patch = {p, p};
  cfg.dual = dual_from(c, seed);
  cfg.seed = seed;
  const auto ref = detail::reference_patches(io::load_image(ref_path), p, c.integer_at_least("reference_subsample", 1), seed);

  TrainRunResult r{train(dataset, op, ref, cfg), std::nullopt};
  io::Manifest m(c.str("out_dir"));
  io::save_params(r.result.theta, m.add("params", "params.txt"));
  {
    auto csv = detail::open_csv(m.add("loss", "loss.csv"), "epoch,loss,fidelity,wpp");
    for (std::size_t e = 0; e < r.result.trace.size(); ++e) {
      const auto& t = r.result.trace[e];
      csv << e + 1 << "," << detail::num(t.loss) << "," << detail::num(t.fidelity) << "," << detail::num(t.wpp) << "\n";
    }
  }
  if (!val_lr_path.empty()) {
    Image x = forward_net(r.result.theta, io::load_image(val_lr_path));
    x.matrix() = x.matrix().cwiseMax(0.0).cwiseMin(1.0);
    io::save_image(x, m.add("val_reconstruction", "val_reconstruction.png"));
    r.val_reconstruction = std::move(x);
  }
  m.write();
  return r;
}

// -------------------------------------------------------------------- eval

inline std::vector<ConfigKey> eval_schema() {
  return {{"truth", "", "ground-truth high-res image"},
          {"methods", "", "comma separated name:path pairs"},
          {"margin", "40", "boundary excluded from all metrics"},
          {"out_dir", "", "output directory"}};
}

struct EvalRow {
  std::string method;
  std::optional<double> psnr;  // empty when the MSE is zero
  double blur_effect = 0.0;
};

inline std::vector<EvalRow> run_eval(const RunConfig& c) {
  const fs::path truth_path = c.str("truth");
  const Image truth = io::load_image(truth_path);
  const Index margin = c.integer_at_least("margin", 0);
  const Image truth_c = crop_boundary(truth, margin);
  std::vector<EvalRow> rows;
  std::stringstream list(c.str("methods"));
  std::string item;
  while (std::getline(list, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
      throw ConfigError("methods entry '" + item + "' is not name:path");
    const Image x = crop_boundary(io::load_image(item.substr(colon + 1)), margin);
    EvalRow row{item.substr(0, colon), std::nullopt, blur_effect(x)};
    try {
      row.psnr = psnr(x, truth_c);
    } catch (const ZeroMseError&) {
      row.psnr.reset();
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("no methods to evaluate");

  io::Manifest m(c.str("out_dir"));
  auto csv = detail::open_csv(m.add("metrics", "metrics.csv"), "method,image,psnr,blur_effect,crop,zero_mse");
  for (const auto& r : rows)
    csv << r.method << "," << truth_path.filename().string() << "," << (r.psnr ? detail::num(*r.psnr) : "inf") << ","
        << detail::num(r.blur_effect) << "," << margin << "," << (r.psnr ? 0 : 1) << "\n";
  csv.close();
  m.write();
  return rows;
}

// ---------------------------------------------------------------------- w2

inline std::vector<ConfigKey> w2_schema() {
  return with({{"image_a", "", "source image"},
               {"image_b", "", "reference image"},
               {"patch_size", "6", "patch side"},
               {"reference_subsample", "10000", "reference patches kept"},
               {"exact", "false", "also solve the exact LP (small instances only)"},
               {"seed", "0", "subsample and minibatch seed"},
               {"out_dir", "", "optional output directory for w2.csv"}},
              dual_keys());
}

struct W2Result {
  double semidual = 0.0;
  std::optional<double> exact;
};

inline W2Result run_w2(const RunConfig& c) {
  const Index p = c.integer_at_least("patch_size", 1);
  const std::uint64_t seed = c.seed("seed");
  const auto src = extract_patches(io::load_image(c.str("image_a")), p, p);
  const auto ref = detail::reference_patches(io::load_image(c.str("image_b")), p,
                                             c.integer_at_least("reference_subsample", 1), seed);
  W2Result r;
  r.semidual = w2_semidual(src, ref, dual_from(c, seed)).value;
  if (c.boolean("exact")) r.exact = w2_exact_lp(src, ref).value;
  if (c.has("out_dir")) {
    io::Manifest m(c.str("out_dir"));
    auto csv = detail::open_csv(m.add("w2", "w2.csv"), "method,value");
    csv << "semidual," << detail::num(r.semidual) << "\n";
    if (r.exact) csv << "exact," << detail::num(*r.exact) << "\n";
    csv.close();
    m.write();
  }
  return r;
}

}  // namespace wpp::pipelines
