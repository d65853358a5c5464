#include "medi/diffusion/schedule.hpp"

#include "medi/error.hpp"

#include <cmath>

namespace medi::diffusion {

NoiseSchedule NoiseSchedule::linear(int num_timesteps, double beta_start, double beta_end) {
  if (num_timesteps < 1) throw ConfigError("noise schedule needs at least one timestep");
  if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
    throw ConfigError("noise schedule requires 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.betas_.assign(static_cast<std::size_t>(num_timesteps) + 1, 0.0);
  s.alpha_bars_.assign(static_cast<std::size_t>(num_timesteps) + 1, 1.0);
  for (int t = 1; t <= num_timesteps; ++t) {
    const double frac = num_timesteps == 1 ? 0.0 : static_cast<double>(t - 1) / (num_timesteps - 1);
    s.betas_[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bars_[static_cast<std::size_t>(t)] =
        s.alpha_bars_[static_cast<std::size_t>(t) - 1] * (1.0 - s.betas_[static_cast<std::size_t>(t)]);
  }
  return s;
}

std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& schedule) {
  if (t < 0 || t > schedule.num_timesteps())
    throw Error("timestep " + std::to_string(t) + " outside [0, " + std::to_string(schedule.num_timesteps()) + "]");
  if (x0.size() != eps.size()) throw Error("noise shape does not match image shape");
  const double ab = schedule.alpha_bar(t);
  const float a = static_cast<float>(std::sqrt(ab));
  const float b = static_cast<float>(std::sqrt(1.0 - ab));
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

}  // namespace medi::diffusion
