#pragma once

#include "medi/diffusion/tensor.hpp"

#include <span>
#include <vector>

namespace medi::diffusion {

// Discrete forward-process coefficients. Index 0 is the noiseless
// convention (alpha_bar = 1); timesteps used for training run 1..T.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int num_timesteps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  int num_timesteps() const { return static_cast<int>(betas_.size()) - 1; }
  double beta(int t) const { return betas_.at(static_cast<std::size_t>(t)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(static_cast<std::size_t>(t)); }

  double beta_start() const { return betas_.size() > 1 ? betas_[1] : 0.0; }
  double beta_end() const { return betas_.empty() ? 0.0 : betas_.back(); }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, for t in [0, T].
std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& schedule);

}  // namespace medi::diffusion
