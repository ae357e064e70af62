#pragma once
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "uqr/losses.hpp"
#include "uqr/network.hpp"
#include "uqr/random.hpp"

namespace uqr::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("uqr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

// Mean batch loss of a network on (inputs, mu, sigma); dropout masks come from a
// fixed stream so repeated calls see the same mask.
inline double network_loss(const NetworkParameters& params, const Eigen::MatrixXd& inputs,
                           const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, LossKind kind,
                           ForwardMode mode, std::uint64_t mask_seed) {
  Random rng(mask_seed, 7);
  const auto fwd = forward_batch(params, inputs, mode, &rng);
  return batch_loss(kind, fwd.predictions, mu, sigma).value;
}

struct GradientCheck {
  double max_relative_error = 0.0;    // worst single component
  double norm_relative_error = 0.0;   // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::size_t checked = 0;
};

// Compares backward() against central differences for every parameter.
inline GradientCheck check_gradients(NetworkParameters params, const Eigen::MatrixXd& inputs,
                                     const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma, LossKind kind,
                                     ForwardMode mode, std::uint64_t mask_seed, double step = 1e-5) {
  Random rng(mask_seed, 7);
  const auto fwd = forward_batch(params, inputs, mode, &rng);
  const BatchLoss loss = batch_loss(kind, fwd.predictions, mu, sigma);
  const ParameterGradients grads = backward(params, fwd.tape, loss.upstream);

  GradientCheck out;
  double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
  auto values = params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = network_loss(params, inputs, mu, sigma, kind, mode, mask_seed);
    values[i] = saved - step;
    const double down = network_loss(params, inputs, mu, sigma, kind, mode, mask_seed);
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = grads.values()[i];
    const double scale = std::max(std::abs(numeric) + std::abs(analytic), 1e-7);
    out.max_relative_error = std::max(out.max_relative_error, std::abs(numeric - analytic) / scale);
    diff_sq += (numeric - analytic) * (numeric - analytic);
    analytic_sq += analytic * analytic;
    numeric_sq += numeric * numeric;
    ++out.checked;
  }
  const double norm = std::sqrt(std::max(analytic_sq, numeric_sq));
  out.norm_relative_error = norm > 0.0 ? std::sqrt(diff_sq) / norm : std::sqrt(diff_sq);
  return out;
}

}  // namespace uqr::testing
