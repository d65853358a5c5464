#pragma once

#include "medi/diffusion/conditioning.hpp"
#include "medi/diffusion/layers.hpp"

#include <memory>
#include <span>

namespace medi::diffusion {

struct UNetConfig {
  int in_channels = 3;
  int image_size = 32;
  int base_channels = 32;
  int channel_multiplier = 2;  // width of the downsampled level
  int groups = 8;

  bool operator==(const UNetConfig&) const = default;
};

// Sinusoidal timestep features, one column per timestep (dim x N).
template <typename T>
Mat<T> timestep_features(std::span<const int> timesteps, int dim);

// Two-level noise-prediction UNet. The conditioning vector built from the
// embedding tables is added to the timestep embedding and the sum is fed
// to every residual block on the way down, through the middle and up.
template <typename T>
class UNet {
 public:
  struct Ctx;

  UNet(const UNetConfig& config, const ConditioningSpec& spec);

  const UNetConfig& config() const { return config_; }
  const ConditioningSpec& spec() const { return tables_.spec(); }

  // Weights get fan-in uniform init, embeddings N(0, 0.02); the output
  // convolution starts at zero unless `zero_output` is false.
  void init(std::mt19937_64& rng, bool zero_output = true);

  // Returns predicted noise with the shape of `x`. Pass `ctx` to record
  // activations for a subsequent backward().
  FeatureMap<T> forward(const FeatureMap<T>& x, std::span<const int> timesteps, std::span<const Condition> conds,
                        Ctx* ctx) const;
  // Accumulates parameter gradients for d(loss)/d(output) = grad_out.
  void backward(const Ctx& ctx, const FeatureMap<T>& grad_out);

  std::vector<nn::Param<T>*> params();
  std::vector<const nn::Param<T>*> params() const;
  void zero_grad();
  std::size_t parameter_count() const;

  EmbeddingTables<T>& tables() { return tables_; }
  const EmbeddingTables<T>& tables() const { return tables_; }

 private:
  UNetConfig config_;
  EmbeddingTables<T> tables_;
  nn::Linear<T> time1_, time2_;
  nn::Conv2d<T> conv_in_, conv_out_;
  nn::ResBlock<T> down0_, down1_, mid_, up1_, up0_;
  nn::GroupNorm<T> norm_out_;
};

template <typename T>
struct UNet<T>::Ctx {
  std::vector<Condition> conds;
  Mat<T> time_feat, time_hidden, z_final, emb_act;
  typename nn::Conv2d<T>::Ctx conv_in, conv_out;
  typename nn::ResBlock<T>::Ctx down0, down1, mid, up1, up0;
  typename nn::GroupNorm<T>::Ctx norm_out;
  FeatureMap<T> norm_out_pre;
  int skip0_channels = 0, skip1_channels = 0, mid_channels = 0, up_channels = 0;
};

// Anything that predicts noise for a batch at given timesteps and
// conditioning tuples. Implementations must be safe to call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual const ConditioningSpec& conditioning() const = 0;
  virtual FeatureMap<float> predict(const FeatureMap<float>& x_t, std::span<const int> timesteps,
                                    std::span<const Condition> conds) const = 0;
};

class TrainableDenoiser : public Denoiser {
 public:
  virtual FeatureMap<float> forward_train(const FeatureMap<float>& x_t, std::span<const int> timesteps,
                                          std::span<const Condition> conds) = 0;
  virtual void backward(const FeatureMap<float>& grad_out) = 0;
  virtual std::vector<nn::Param<float>*> parameters() = 0;
};

// The production denoiser: a float UNet plus the activation record of the
// most recent training forward pass.
class DenoiserModel : public TrainableDenoiser {
 public:
  DenoiserModel(const UNetConfig& config, const ConditioningSpec& spec, std::uint64_t seed);
  explicit DenoiserModel(UNet<float> net);

  const ConditioningSpec& conditioning() const override { return net_.spec(); }
  FeatureMap<float> predict(const FeatureMap<float>& x_t, std::span<const int> timesteps,
                            std::span<const Condition> conds) const override;
  FeatureMap<float> forward_train(const FeatureMap<float>& x_t, std::span<const int> timesteps,
                                  std::span<const Condition> conds) override;
  void backward(const FeatureMap<float>& grad_out) override;
  std::vector<nn::Param<float>*> parameters() override { return net_.params(); }

  UNet<float>& net() { return net_; }
  const UNet<float>& net() const { return net_; }

 private:
  UNet<float> net_;
  std::unique_ptr<UNet<float>::Ctx> ctx_;
};

}  // namespace medi::diffusion
