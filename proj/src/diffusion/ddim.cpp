#include "medi/diffusion/ddim.hpp"

#include "medi/error.hpp"

#include <cmath>
#include <random>

namespace medi::diffusion {

std::vector<int> ddim_timesteps(int num_train_timesteps, int num_inference_steps) {
  if (num_inference_steps < 1 || num_inference_steps > num_train_timesteps)
    throw Error("DDIM needs 1 <= inference steps (" + std::to_string(num_inference_steps) + ") <= T (" +
                std::to_string(num_train_timesteps) + ")");
  std::vector<int> out(static_cast<std::size_t>(num_inference_steps));
  const double ratio = static_cast<double>(num_train_timesteps) / num_inference_steps;
  for (int i = 0; i < num_inference_steps; ++i)
    out[static_cast<std::size_t>(i)] = num_train_timesteps - static_cast<int>(std::floor(i * ratio));
  return out;
}

std::vector<float> initial_noise(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> out(count);
  for (auto& v : out) v = gauss(rng);
  return out;
}

FeatureMap<float> ddim_sample(const Denoiser& model, const NoiseSchedule& schedule, std::span<const Condition> conds,
                              std::span<const std::uint64_t> seeds, int channels, int image_size,
                              const DdimOptions& options) {
  if (conds.size() != seeds.size()) throw Error("ddim_sample: one seed per conditioning tuple required");
  const auto& spec = model.conditioning();
  for (const auto& c : conds)
    if (static_cast<int>(c.meta_ids.size()) != spec.k())
      throw Error("ddim_sample: model expects " + std::to_string(spec.k()) + " metadata ids per tuple, got " +
                  std::to_string(c.meta_ids.size()));

  const int n = static_cast<int>(conds.size());
  FeatureMap<float> x(channels, n, image_size, image_size);
  const std::size_t per_image = static_cast<std::size_t>(channels) * image_size * image_size;
  for (int i = 0; i < n; ++i) x.set_sample(i, initial_noise(seeds[static_cast<std::size_t>(i)], per_image));
  if (n == 0) return x;

  const auto steps = ddim_timesteps(schedule.num_timesteps(), options.num_inference_steps);
  std::vector<int> tvec(static_cast<std::size_t>(n));
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const int t = steps[s];
    const int t_prev = s + 1 < steps.size() ? steps[s + 1] : 0;
    std::fill(tvec.begin(), tvec.end(), t);
    const FeatureMap<float> eps = model.predict(x, tvec, conds);

    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    const float sqrt_ab = static_cast<float>(std::sqrt(ab));
    const float sqrt_1m_ab = static_cast<float>(std::sqrt(1.0 - ab));
    Mat<float> x0 = (x.data - sqrt_1m_ab * eps.data) / sqrt_ab;
    if (options.clip_sample) x0 = x0.cwiseMax(-options.clip_range).cwiseMin(options.clip_range);
    // With eta = 0 the direction term reuses the predicted noise.
    x.data = static_cast<float>(std::sqrt(ab_prev)) * x0 + static_cast<float>(std::sqrt(1.0 - ab_prev)) * eps.data;
  }
  if (options.clip_sample) x.data = x.data.cwiseMax(-options.clip_range).cwiseMin(options.clip_range);
  return x;
}

std::vector<float> ddim_sample(const Denoiser& model, const NoiseSchedule& schedule, const Condition& cond,
                               std::uint64_t seed, int channels, int image_size, const DdimOptions& options) {
  const Condition conds[1] = {cond};
  const std::uint64_t seeds[1] = {seed};
  return ddim_sample(model, schedule, conds, seeds, channels, image_size, options).sample(0);
}

}  // namespace medi::diffusion
