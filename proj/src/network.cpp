// SPDX-License-Identifier: Apache-2.0
#include "uqr/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace uqr {

std::string to_string(HeadMode mode) {
  return mode == HeadMode::mean_only ? "mean_only" : "mean_variance";
}

HeadMode parse_head_mode(const std::string& text) {
  if (text == "mean_only") return HeadMode::mean_only;
  if (text == "mean_variance") return HeadMode::mean_variance;
  throw std::invalid_argument("unknown head mode '" + text + "'");
}

std::vector<std::size_t> Architecture::layer_widths() const {
  std::vector<std::size_t> widths;
  widths.reserve(hidden_sizes.size() + 2);
  widths.push_back(input_dim);
  widths.insert(widths.end(), hidden_sizes.begin(), hidden_sizes.end());
  widths.push_back(output_dim());
  return widths;
}

std::size_t Architecture::parameter_count() const {
  const auto widths = layer_widths();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) total += widths[l + 1] * widths[l] + widths[l + 1];
  return total;
}

void Architecture::validate() const {
  if (input_dim == 0) throw std::invalid_argument("input_dim must be positive");
  for (auto h : hidden_sizes) {
    if (h == 0) throw std::invalid_argument("hidden layer sizes must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  }
}

NetworkParameters::NetworkParameters(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  widths_ = arch_.layer_widths();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(offset);
    offset += widths_[l + 1] * widths_[l] + widths_[l + 1];
  }
  values_.assign(offset, 0.0);
}

Eigen::Map<const RowMatrix> NetworkParameters::weight(std::size_t layer) const {
  return {values_.data() + offsets_.at(layer), static_cast<Eigen::Index>(rows(layer)),
          static_cast<Eigen::Index>(cols(layer))};
}

Eigen::Map<RowMatrix> NetworkParameters::weight(std::size_t layer) {
  return {values_.data() + offsets_.at(layer), static_cast<Eigen::Index>(rows(layer)),
          static_cast<Eigen::Index>(cols(layer))};
}

Eigen::Map<const Eigen::VectorXd> NetworkParameters::bias(std::size_t layer) const {
  return {values_.data() + offsets_.at(layer) + rows(layer) * cols(layer),
          static_cast<Eigen::Index>(rows(layer))};
}

Eigen::Map<Eigen::VectorXd> NetworkParameters::bias(std::size_t layer) {
  return {values_.data() + offsets_.at(layer) + rows(layer) * cols(layer),
          static_cast<Eigen::Index>(rows(layer))};
}

bool NetworkParameters::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void NetworkParameters::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

namespace {
// Shrinks the head weights so the initial SD logits stay near zero; with
// full-size head weights the dropout-perturbed logits start far enough out
// that the likelihood losses blow up in the first epoch.
constexpr double kOutputInitScale = 0.1;
}  // namespace

NetworkParameters init_parameters(const Architecture& arch, std::uint64_t seed) {
  NetworkParameters params(arch);
  params.seed = seed;
  Random rng(seed, /*stream=*/0x1417);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    auto w = params.weight(l);
    double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    if (l + 1 == params.num_layers()) bound *= kOutputInitScale;
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    params.bias(l).setZero();
  }
  return params;
}

double elu(double z) { return z > 0.0 ? z : std::expm1(z); }

double elu_derivative(double z) { return z > 0.0 ? 1.0 : std::exp(z); }

double neg_softplus(double z) { return -(std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))); }

GaussianPrediction GaussianPrediction::from_logits(double mean_logit) {
  GaussianPrediction p;
  p.mean_logit = mean_logit;
  p.mu_hat = std::tanh(mean_logit);
  return p;
}

GaussianPrediction GaussianPrediction::from_logits(double mean_logit, double sd_logit) {
  GaussianPrediction p = from_logits(mean_logit);
  p.has_sigma = true;
  p.sd_logit = sd_logit;
  p.log_sigma_hat = neg_softplus(sd_logit);
  p.sigma_hat = std::exp(p.log_sigma_hat);
  return p;
}

GaussianPrediction GaussianPrediction::from_values(double mu_hat, double sigma_hat) {
  if (!(sigma_hat > 0.0 && sigma_hat < 1.0)) throw std::invalid_argument("sigma_hat must lie in (0, 1)");
  GaussianPrediction p = from_mean(mu_hat);
  p.has_sigma = true;
  p.sd_logit = std::log((1.0 - sigma_hat) / sigma_hat);
  p.sigma_hat = sigma_hat;
  p.log_sigma_hat = neg_softplus(p.sd_logit);
  return p;
}

GaussianPrediction GaussianPrediction::from_mean(double mu_hat) {
  if (!(mu_hat > -1.0 && mu_hat < 1.0)) throw std::invalid_argument("mu_hat must lie in (-1, 1)");
  GaussianPrediction p;
  p.mean_logit = std::atanh(mu_hat);
  p.mu_hat = mu_hat;
  return p;
}

BatchForward forward_batch(const NetworkParameters& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           ForwardMode mode, Random* rng) {
  const Architecture& arch = params.architecture();
  if (static_cast<std::size_t>(inputs.rows()) != arch.input_dim) {
    throw std::invalid_argument("input has " + std::to_string(inputs.rows()) + " features, network expects " +
                                std::to_string(arch.input_dim));
  }
  const bool stochastic = mode != ForwardMode::eval && arch.dropout_rate > 0.0;
  if (stochastic && rng == nullptr) throw std::invalid_argument("dropout forward pass needs a random stream");

  const Eigen::Index batch = inputs.cols();
  const std::size_t hidden = arch.hidden_sizes.size();
  BatchForward out;
  ForwardTape& tape = out.tape;
  tape.mode = mode;
  tape.input = inputs;
  tape.mask.keep_probability = 1.0 - arch.dropout_rate;

  const double keep = tape.mask.keep_probability;
  const Eigen::MatrixXd* previous = &tape.input;
  for (std::size_t l = 0; l < hidden; ++l) {
    // Products run on aligned copies: Eigen's vectorized reductions split
    // differently depending on the address of unaligned maps.
    const RowMatrix w = params.weight(l);
    Eigen::MatrixXd z = w * (*previous);
    z.colwise() += params.bias(l);
    // exp(v) - 1 instead of expm1 keeps the loop vectorized; the absolute
    // error is below 1e-16.
    Eigen::MatrixXd h = (z.array() > 0.0).select(z.array(), z.array().exp() - 1.0).matrix();
    if (stochastic) {
      Eigen::MatrixXd mask(h.rows(), h.cols());
      // Column-major draw order: one sample's units are contiguous.
      for (Eigen::Index j = 0; j < batch; ++j) {
        for (Eigen::Index i = 0; i < h.rows(); ++i) mask(i, j) = rng->bernoulli(keep) ? 1.0 : 0.0;
      }
      h = h.cwiseProduct(mask) / keep;
      tape.mask.layers.push_back(std::move(mask));
    }
    tape.pre_activations.push_back(std::move(z));
    tape.hidden_outputs.push_back(std::move(h));
    previous = &tape.hidden_outputs.back();
  }
  const RowMatrix w_out = params.weight(hidden);
  tape.logits = w_out * (*previous);
  tape.logits.colwise() += params.bias(hidden);

  out.predictions.reserve(static_cast<std::size_t>(batch));
  for (Eigen::Index j = 0; j < batch; ++j) {
    out.predictions.push_back(arch.head_mode == HeadMode::mean_only
                                  ? GaussianPrediction::from_logits(tape.logits(0, j))
                                  : GaussianPrediction::from_logits(tape.logits(0, j), tape.logits(1, j)));
  }
  return out;
}

std::pair<GaussianPrediction, ForwardTape> forward(const NetworkParameters& params, std::span<const double> x,
                                                   ForwardMode mode, Random* rng) {
  const Eigen::Map<const Eigen::MatrixXd> column(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  auto result = forward_batch(params, column, mode, rng);
  return {result.predictions.front(), std::move(result.tape)};
}

ParameterGradients backward(const NetworkParameters& params, const ForwardTape& tape,
                            const Eigen::Ref<const Eigen::MatrixXd>& upstream) {
  const Architecture& arch = params.architecture();
  const std::size_t hidden = arch.hidden_sizes.size();
  if (tape.hidden_outputs.size() != hidden || tape.logits.rows() != static_cast<Eigen::Index>(arch.output_dim()) ||
      tape.input.rows() != static_cast<Eigen::Index>(arch.input_dim)) {
    throw std::invalid_argument("tape does not match the network parameters");
  }
  if (upstream.rows() != tape.logits.rows() || upstream.cols() != tape.logits.cols()) {
    throw std::invalid_argument("upstream gradient shape does not match the logits");
  }
  const bool masked = !tape.mask.layers.empty();

  ParameterGradients grads(arch);
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = hidden + 1; l-- > 0;) {
    const Eigen::MatrixXd& layer_input = l == 0 ? tape.input : tape.hidden_outputs[l - 1];
    const RowMatrix g = delta * layer_input.transpose();
    grads.weight(l) = g;
    const Eigen::VectorXd gb = delta.rowwise().sum();
    grads.bias(l) = gb;
    if (l == 0) break;
    const RowMatrix w = params.weight(l);
    Eigen::MatrixXd d_hidden = w.transpose() * delta;
    if (masked) d_hidden = d_hidden.cwiseProduct(tape.mask.layers[l - 1]) / tape.mask.keep_probability;
    const auto& z = tape.pre_activations[l - 1].array();
    delta = (z > 0.0).select(d_hidden.array(), d_hidden.array() * z.exp()).matrix();
  }
  return grads;
}

ParameterGradients backward(const NetworkParameters& params, const ForwardTape& tape, double d_mean_logit,
                            double d_sd_logit) {
  Eigen::MatrixXd upstream(params.architecture().output_dim(), 1);
  upstream(0, 0) = d_mean_logit;
  if (upstream.rows() > 1) upstream(1, 0) = d_sd_logit;
  return backward(params, tape, upstream);
}

PointPredictions predict(const NetworkParameters& params, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const auto result = forward_batch(params, inputs, ForwardMode::eval, nullptr);
  PointPredictions out;
  const auto n = static_cast<Eigen::Index>(result.predictions.size());
  out.mu_hat.resize(n);
  if (params.architecture().head_mode == HeadMode::mean_variance) out.sigma_hat.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& p = result.predictions[static_cast<std::size_t>(j)];
    out.mu_hat(j) = p.mu_hat;
    if (p.has_sigma) out.sigma_hat(j) = p.sigma_hat;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr const char* kCheckpointFormat = "uqr-network";
constexpr int kCheckpointVersion = 1;
}  // namespace

std::string checkpoint_to_json(const NetworkParameters& params) {
  const Architecture& arch = params.architecture();
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["input_dim"] = arch.input_dim;
  j["hidden_sizes"] = arch.hidden_sizes;
  j["head_mode"] = to_string(arch.head_mode);
  j["dropout_rate"] = arch.dropout_rate;
  j["seed"] = params.seed;
  std::vector<nlohmann::json> layers;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    const auto w = params.weight(l);
    const auto b = params.bias(l);
    nlohmann::json layer;
    layer["shape"] = {w.rows(), w.cols()};
    layer["weight"] = std::vector<double>(w.data(), w.data() + w.size());
    layer["bias"] = std::vector<double>(b.data(), b.data() + b.size());
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j.dump(1);
}

NetworkParameters checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat) throw CheckpointError("not a network checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
    }
    Architecture arch;
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.hidden_sizes = j.at("hidden_sizes").get<std::vector<std::size_t>>();
    arch.head_mode = parse_head_mode(j.at("head_mode").get<std::string>());
    arch.dropout_rate = j.at("dropout_rate").get<double>();
    NetworkParameters params(arch);
    params.seed = j.at("seed").get<std::uint64_t>();
    const auto& layers = j.at("layers");
    if (layers.size() != params.num_layers()) throw CheckpointError("layer count does not match architecture");
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      auto w = params.weight(l);
      auto b = params.bias(l);
      const auto weight = layers[l].at("weight").get<std::vector<double>>();
      const auto bias = layers[l].at("bias").get<std::vector<double>>();
      if (weight.size() != static_cast<std::size_t>(w.size()) || bias.size() != static_cast<std::size_t>(b.size())) {
        throw CheckpointError("layer " + std::to_string(l) + " has the wrong number of values");
      }
      std::copy(weight.begin(), weight.end(), w.data());
      std::copy(bias.begin(), bias.end(), b.data());
    }
    if (!params.all_finite()) throw CheckpointError("checkpoint contains non-finite parameters");
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const NetworkParameters& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write '" + path.string() + "'");
  out << checkpoint_to_json(params) << '\n';
}

NetworkParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace uqr
