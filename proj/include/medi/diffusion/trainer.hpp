#pragma once

#include "medi/diffusion/schedule.hpp"
#include "medi/diffusion/unet.hpp"
#include "medi/error.hpp"

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace medi::diffusion {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

// Adam with lazy rows for embedding tables: a row that received no gradient
// in a step keeps its value and its moment estimates.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(std::span<nn::Param<float>* const> params);
  long steps_taken() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Mat<float>> m_, v_;
  long steps_ = 0;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainingExample {
  std::string id;
  std::vector<float> image;  // CHW, values in [-1, 1]
  Condition cond;
};

// One optimisation step on `batch`: uniform t in [1, T] and unit Gaussian
// noise per example, MSE between predicted and true noise, one Adam update.
// Returns the pre-update loss. Throws TrainingDiverged on a non-finite loss.
double train_step(std::span<const TrainingExample* const> batch, TrainableDenoiser& model,
                  const NoiseSchedule& schedule, Adam& optimizer, std::mt19937_64& rng, int channels,
                  int image_size);

struct TrainingSpec {
  long steps = 1000;
  double lr = 1e-4;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
};

// Full-scale protocol for 256px patches on GPU: 800k steps, lr 1e-4, batch 64.
inline TrainingSpec full_scale_training_spec() { return {800'000, 1e-4, 64, 0, 1.0}; }

using StepCallback = std::function<void(long step, double loss)>;

// Runs `spec.steps` train_step calls with minibatches drawn uniformly with
// replacement. Returns the per-step loss history.
std::vector<double> train(TrainableDenoiser& model, std::span<const TrainingExample> data,
                          const NoiseSchedule& schedule, const TrainingSpec& spec, int channels, int image_size,
                          const StepCallback& on_step = {});

}  // namespace medi::diffusion
