#pragma once

#include "medi/diffusion/tensor.hpp"

#include <random>
#include <span>
#include <string>
#include <vector>

namespace medi::diffusion::nn {

// A trainable tensor and its accumulated gradient. Embedding tables set
// `sparse_rows`; backward then marks which rows received gradient so the
// optimizer can leave untouched rows alone.
template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool sparse_rows = false;
  std::vector<char> touched;

  Param() = default;
  Param(std::string n, int rows, int cols);
  void zero_grad();
  Eigen::Index size() const { return value.size(); }
};

template <typename T>
void init_uniform(Param<T>& p, T bound, std::mt19937_64& rng);
template <typename T>
void init_normal(Param<T>& p, T stddev, std::mt19937_64& rng);

// 1x1 or 3x3 convolution, stride 1, "same" padding. Weight columns are laid
// out tap-major: column (tap * in_channels + c).
template <typename T>
class Conv2d {
 public:
  struct Ctx {
    Mat<T> col;
    int n = 0, h = 0, w = 0;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel);

  FeatureMap<T> forward(const FeatureMap<T>& x, Ctx* ctx) const;
  FeatureMap<T> backward(const Ctx& ctx, const FeatureMap<T>& grad_out);

  void init(std::mt19937_64& rng);
  std::vector<Param<T>*> params() { return {&weight, &bias}; }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Param<T> weight;
  Param<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
};

template <typename T>
class GroupNorm {
 public:
  struct Ctx {
    Mat<T> xhat;
    std::vector<T> inv_std;
    int n = 0, pixels = 0;
  };

  GroupNorm() = default;
  GroupNorm(const std::string& name, int channels, int groups);

  FeatureMap<T> forward(const FeatureMap<T>& x, Ctx* ctx) const;
  FeatureMap<T> backward(const Ctx& ctx, const FeatureMap<T>& grad_out);
  std::vector<Param<T>*> params() { return {&gamma, &beta}; }

  Param<T> gamma;
  Param<T> beta;

 private:
  int channels_ = 0;
  int groups_ = 1;
  T eps_ = T(1e-5);
};

// y = W x + b on column-batched vectors (in x N).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  Mat<T> forward(const Mat<T>& x) const;
  Mat<T> backward(const Mat<T>& x, const Mat<T>& grad_out);
  void init(std::mt19937_64& rng);
  std::vector<Param<T>*> params() { return {&weight, &bias}; }

  Param<T> weight;
  Param<T> bias;
};

// Lookup table mapping category ids to rows; output is (dim x N).
template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(const std::string& name, int cardinality, int dim);

  Mat<T> forward(std::span<const int> ids) const;
  void backward(std::span<const int> ids, const Mat<T>& grad_out);
  int cardinality() const { return static_cast<int>(table.value.rows()); }
  int dim() const { return static_cast<int>(table.value.cols()); }

  Param<T> table;
};

template <typename T>
Mat<T> silu(const Mat<T>& x);
template <typename T>
Mat<T> silu_backward(const Mat<T>& x, const Mat<T>& grad_out);

template <typename T>
FeatureMap<T> silu(const FeatureMap<T>& x);
template <typename T>
FeatureMap<T> silu_backward(const FeatureMap<T>& x, const FeatureMap<T>& grad_out);

template <typename T>
FeatureMap<T> avg_pool2(const FeatureMap<T>& x);
template <typename T>
FeatureMap<T> avg_pool2_backward(const FeatureMap<T>& grad_out);

template <typename T>
FeatureMap<T> upsample2(const FeatureMap<T>& x);
template <typename T>
FeatureMap<T> upsample2_backward(const FeatureMap<T>& grad_out);

template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b);

// Adds a per-(channel, sample) bias, `bias` is (channels x N).
template <typename T>
void add_channel_bias(FeatureMap<T>& x, const Mat<T>& bias);
// Reduces grad over pixels to (channels x N).
template <typename T>
Mat<T> channel_bias_backward(const FeatureMap<T>& grad_out);

// Pre-activation residual block with an additive embedding projection:
// h = conv1(silu(gn1(x))) + proj(emb); out = conv2(silu(gn2(h))) + skip(x).
template <typename T>
class ResBlock {
 public:
  struct Ctx {
    FeatureMap<T> x;
    typename GroupNorm<T>::Ctx gn1, gn2;
    FeatureMap<T> a1, a2;
    typename Conv2d<T>::Ctx conv1, conv2, skip;
  };

  ResBlock() = default;
  ResBlock(const std::string& name, int in_channels, int out_channels, int emb_dim, int groups);

  // `emb_act` is silu(z_final), shared by every block.
  FeatureMap<T> forward(const FeatureMap<T>& x, const Mat<T>& emb_act, Ctx* ctx) const;
  // Returns grad wrt x; accumulates grad wrt emb_act into `grad_emb_act`.
  FeatureMap<T> backward(const Ctx& ctx, const Mat<T>& emb_act, const FeatureMap<T>& grad_out,
                         Mat<T>& grad_emb_act);

  void init(std::mt19937_64& rng);
  std::vector<Param<T>*> params();

 private:
  GroupNorm<T> gn1_, gn2_;
  Conv2d<T> conv1_, conv2_, skip_;
  Linear<T> proj_;
  bool has_skip_ = false;
};

}  // namespace medi::diffusion::nn
