#pragma once

#include "medi/diffusion/schedule.hpp"
#include "medi/diffusion/unet.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace medi::diffusion {

struct DdimOptions {
  int num_inference_steps = 100;
  // Clamp the predicted x0 (and hence the output) to [-clip_range, clip_range].
  bool clip_sample = true;
  float clip_range = 1.0f;
};

// Uniformly strided descending subsequence of [1, T]; first entry is T.
std::vector<int> ddim_timesteps(int num_train_timesteps, int num_inference_steps);

// Unit Gaussian starting noise for one image, fully determined by `seed`.
std::vector<float> initial_noise(std::uint64_t seed, std::size_t count);

// Deterministic (eta = 0) DDIM sampling of a batch; image i starts from
// initial_noise(seeds[i]). Returns images in the data range.
FeatureMap<float> ddim_sample(const Denoiser& model, const NoiseSchedule& schedule, std::span<const Condition> conds,
                              std::span<const std::uint64_t> seeds, int channels, int image_size,
                              const DdimOptions& options = {});

// Single-image convenience wrapper returning CHW values.
std::vector<float> ddim_sample(const Denoiser& model, const NoiseSchedule& schedule, const Condition& cond,
                               std::uint64_t seed, int channels, int image_size, const DdimOptions& options = {});

}  // namespace medi::diffusion
