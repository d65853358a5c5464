#include "medi/diffusion/layers.hpp"

#include "medi/error.hpp"

#include <cmath>
#include <numeric>

namespace medi::diffusion::nn {

template <typename T>
Param<T>::Param(std::string n, int rows, int cols)
    : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}

template <typename T>
void Param<T>::zero_grad() {
  grad.setZero();
  if (sparse_rows) touched.assign(static_cast<std::size_t>(value.rows()), 0);
}

template <typename T>
void init_uniform(Param<T>& p, T bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(dist(rng));
}

template <typename T>
void init_normal(Param<T>& p, T stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
    : weight(name + ".weight", out_channels, in_channels * kernel * kernel),
      bias(name + ".bias", out_channels, 1),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel) {
  if (kernel != 1 && kernel != 3) throw Error("Conv2d: only 1x1 and 3x3 kernels are supported");
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
  const T bound = T(1) / std::sqrt(static_cast<T>(in_ * kernel_ * kernel_));
  init_uniform(weight, bound, rng);
  init_uniform(bias, bound, rng);
}

namespace {

template <typename T>
void im2col3(const FeatureMap<T>& x, Mat<T>& col) {
  const int c = x.channels();
  col.resize(9 * c, x.data.cols());
  for (int i = 0; i < x.n; ++i) {
    for (int y = 0; y < x.h; ++y) {
      for (int xx = 0; xx < x.w; ++xx) {
        const Eigen::Index p = (static_cast<Eigen::Index>(i) * x.h + y) * x.w + xx;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            auto dst = col.col(p).segment((ky * 3 + kx) * c, c);
            if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) {
              dst.setZero();
            } else {
              dst = x.data.col((static_cast<Eigen::Index>(i) * x.h + sy) * x.w + sx);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3(const Mat<T>& col, FeatureMap<T>& gx) {
  const int c = gx.channels();
  for (int i = 0; i < gx.n; ++i) {
    for (int y = 0; y < gx.h; ++y) {
      for (int xx = 0; xx < gx.w; ++xx) {
        const Eigen::Index p = (static_cast<Eigen::Index>(i) * gx.h + y) * gx.w + xx;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= gx.h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= gx.w) continue;
            gx.data.col((static_cast<Eigen::Index>(i) * gx.h + sy) * gx.w + sx) +=
                col.col(p).segment((ky * 3 + kx) * c, c);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
FeatureMap<T> Conv2d<T>::forward(const FeatureMap<T>& x, Ctx* ctx) const {
  if (x.channels() != in_) throw Error("Conv2d " + weight.name + ": channel mismatch");
  FeatureMap<T> y;
  y.n = x.n;
  y.h = x.h;
  y.w = x.w;
  if (kernel_ == 1) {
    y.data.noalias() = weight.value * x.data;
    if (ctx) ctx->col = x.data;
  } else {
    Mat<T> local;
    Mat<T>& col = ctx ? ctx->col : local;
    im2col3(x, col);
    y.data.noalias() = weight.value * col;
  }
  y.data.colwise() += bias.value.col(0);
  if (ctx) {
    ctx->n = x.n;
    ctx->h = x.h;
    ctx->w = x.w;
  }
  return y;
}

template <typename T>
FeatureMap<T> Conv2d<T>::backward(const Ctx& ctx, const FeatureMap<T>& grad_out) {
  weight.grad.noalias() += grad_out.data * ctx.col.transpose();
  bias.grad.col(0) += grad_out.data.rowwise().sum();
  FeatureMap<T> gx(in_, ctx.n, ctx.h, ctx.w);
  if (kernel_ == 1) {
    gx.data.noalias() = weight.value.transpose() * grad_out.data;
  } else {
    Mat<T> gcol;
    gcol.noalias() = weight.value.transpose() * grad_out.data;
    col2im3(gcol, gx);
  }
  return gx;
}

// ------------------------------------------------------------- GroupNorm

template <typename T>
GroupNorm<T>::GroupNorm(const std::string& name, int channels, int groups)
    : gamma(name + ".gamma", channels, 1), beta(name + ".beta", channels, 1), channels_(channels), groups_(groups) {
  if (groups <= 0 || channels % groups != 0)
    throw Error("GroupNorm " + name + ": " + std::to_string(channels) + " channels not divisible into " +
                std::to_string(groups) + " groups");
  gamma.value.setOnes();
}

template <typename T>
FeatureMap<T> GroupNorm<T>::forward(const FeatureMap<T>& x, Ctx* ctx) const {
  const int cg = channels_ / groups_;
  const int hw = x.pixels();
  FeatureMap<T> y(channels_, x.n, x.h, x.w);
  Mat<T> local;
  Mat<T>& xhat = ctx ? ctx->xhat : local;
  xhat.resize(x.data.rows(), x.data.cols());
  if (ctx) {
    ctx->inv_std.assign(static_cast<std::size_t>(x.n) * groups_, T(0));
    ctx->n = x.n;
    ctx->pixels = hw;
  }
  for (int i = 0; i < x.n; ++i) {
    for (int g = 0; g < groups_; ++g) {
      auto blk = x.data.block(g * cg, static_cast<Eigen::Index>(i) * hw, cg, hw);
      const T mean = blk.mean();
      const T var = (blk.array() - mean).square().mean();
      const T inv = T(1) / std::sqrt(var + eps_);
      xhat.block(g * cg, static_cast<Eigen::Index>(i) * hw, cg, hw) = (blk.array() - mean) * inv;
      if (ctx) ctx->inv_std[static_cast<std::size_t>(i) * groups_ + g] = inv;
    }
  }
  y.data = (xhat.array().colwise() * gamma.value.col(0).array()).colwise() + beta.value.col(0).array();
  return y;
}

template <typename T>
FeatureMap<T> GroupNorm<T>::backward(const Ctx& ctx, const FeatureMap<T>& grad_out) {
  const int cg = channels_ / groups_;
  const int hw = ctx.pixels;
  gamma.grad.col(0) += (grad_out.data.array() * ctx.xhat.array()).rowwise().sum().matrix();
  beta.grad.col(0) += grad_out.data.rowwise().sum();
  Mat<T> gxhat = (grad_out.data.array().colwise() * gamma.value.col(0).array()).matrix();
  FeatureMap<T> gx(channels_, ctx.n, grad_out.h, grad_out.w);
  const T m = static_cast<T>(cg * hw);
  for (int i = 0; i < ctx.n; ++i) {
    for (int g = 0; g < groups_; ++g) {
      const Eigen::Index c0 = g * cg;
      const Eigen::Index p0 = static_cast<Eigen::Index>(i) * hw;
      auto gb = gxhat.block(c0, p0, cg, hw).array();
      auto xb = ctx.xhat.block(c0, p0, cg, hw).array();
      const T s1 = gb.sum();
      const T s2 = (gb * xb).sum();
      const T inv = ctx.inv_std[static_cast<std::size_t>(i) * groups_ + g];
      gx.data.block(c0, p0, cg, hw) = ((m * gb - s1 - xb * s2) * (inv / m)).matrix();
    }
  }
  return gx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const std::string& name, int in, int out)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng) {
  const T bound = T(1) / std::sqrt(static_cast<T>(weight.value.cols()));
  init_uniform(weight, bound, rng);
  init_uniform(bias, bound, rng);
}

template <typename T>
Mat<T> Linear<T>::forward(const Mat<T>& x) const {
  Mat<T> y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

template <typename T>
Mat<T> Linear<T>::backward(const Mat<T>& x, const Mat<T>& grad_out) {
  weight.grad.noalias() += grad_out * x.transpose();
  bias.grad.col(0) += grad_out.rowwise().sum();
  return weight.value.transpose() * grad_out;
}

// ------------------------------------------------------------- Embedding

template <typename T>
Embedding<T>::Embedding(const std::string& name, int cardinality, int dim) : table(name, cardinality, dim) {
  table.sparse_rows = true;
  table.touched.assign(static_cast<std::size_t>(cardinality), 0);
}

template <typename T>
Mat<T> Embedding<T>::forward(std::span<const int> ids) const {
  Mat<T> out(dim(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= cardinality())
      throw Error("embedding " + table.name + ": id " + std::to_string(ids[j]) + " outside [0, " +
                  std::to_string(cardinality()) + ")");
    out.col(static_cast<Eigen::Index>(j)) = table.value.row(ids[j]).transpose();
  }
  return out;
}

template <typename T>
void Embedding<T>::backward(std::span<const int> ids, const Mat<T>& grad_out) {
  for (std::size_t j = 0; j < ids.size(); ++j) {
    table.grad.row(ids[j]) += grad_out.col(static_cast<Eigen::Index>(j)).transpose();
    table.touched[static_cast<std::size_t>(ids[j])] = 1;
  }
}

// ----------------------------------------------------------- activations

template <typename T>
Mat<T> silu(const Mat<T>& x) {
  return (x.array() / (T(1) + (-x.array()).exp())).matrix();
}

template <typename T>
Mat<T> silu_backward(const Mat<T>& x, const Mat<T>& grad_out) {
  auto s = (T(1) / (T(1) + (-x.array()).exp()));
  return (grad_out.array() * (s * (T(1) + x.array() * (T(1) - s)))).matrix();
}

template <typename T>
FeatureMap<T> silu(const FeatureMap<T>& x) {
  FeatureMap<T> y;
  y.n = x.n;
  y.h = x.h;
  y.w = x.w;
  y.data = silu<T>(x.data);
  return y;
}

template <typename T>
FeatureMap<T> silu_backward(const FeatureMap<T>& x, const FeatureMap<T>& grad_out) {
  FeatureMap<T> g;
  g.n = x.n;
  g.h = x.h;
  g.w = x.w;
  g.data = silu_backward<T>(x.data, grad_out.data);
  return g;
}

// ------------------------------------------------------ spatial plumbing

template <typename T>
FeatureMap<T> avg_pool2(const FeatureMap<T>& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw Error("avg_pool2: spatial size must be even");
  FeatureMap<T> y(x.channels(), x.n, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i)
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx) {
        const Eigen::Index base = static_cast<Eigen::Index>(i) * x.h;
        auto c00 = x.data.col((base + 2 * yy) * x.w + 2 * xx);
        auto c01 = x.data.col((base + 2 * yy) * x.w + 2 * xx + 1);
        auto c10 = x.data.col((base + 2 * yy + 1) * x.w + 2 * xx);
        auto c11 = x.data.col((base + 2 * yy + 1) * x.w + 2 * xx + 1);
        y.data.col((static_cast<Eigen::Index>(i) * y.h + yy) * y.w + xx) = (c00 + c01 + c10 + c11) * T(0.25);
      }
  return y;
}

template <typename T>
FeatureMap<T> avg_pool2_backward(const FeatureMap<T>& grad_out) {
  FeatureMap<T> g(grad_out.channels(), grad_out.n, grad_out.h * 2, grad_out.w * 2);
  for (int i = 0; i < g.n; ++i)
    for (int yy = 0; yy < g.h; ++yy)
      for (int xx = 0; xx < g.w; ++xx)
        g.data.col((static_cast<Eigen::Index>(i) * g.h + yy) * g.w + xx) =
            grad_out.data.col((static_cast<Eigen::Index>(i) * grad_out.h + yy / 2) * grad_out.w + xx / 2) * T(0.25);
  return g;
}

template <typename T>
FeatureMap<T> upsample2(const FeatureMap<T>& x) {
  FeatureMap<T> y(x.channels(), x.n, x.h * 2, x.w * 2);
  for (int i = 0; i < y.n; ++i)
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx)
        y.data.col((static_cast<Eigen::Index>(i) * y.h + yy) * y.w + xx) =
            x.data.col((static_cast<Eigen::Index>(i) * x.h + yy / 2) * x.w + xx / 2);
  return y;
}

template <typename T>
FeatureMap<T> upsample2_backward(const FeatureMap<T>& grad_out) {
  FeatureMap<T> g(grad_out.channels(), grad_out.n, grad_out.h / 2, grad_out.w / 2);
  for (int i = 0; i < grad_out.n; ++i)
    for (int yy = 0; yy < grad_out.h; ++yy)
      for (int xx = 0; xx < grad_out.w; ++xx)
        g.data.col((static_cast<Eigen::Index>(i) * g.h + yy / 2) * g.w + xx / 2) +=
            grad_out.data.col((static_cast<Eigen::Index>(i) * grad_out.h + yy) * grad_out.w + xx);
  return g;
}

template <typename T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  FeatureMap<T> y;
  y.n = a.n;
  y.h = a.h;
  y.w = a.w;
  y.data.resize(a.data.rows() + b.data.rows(), a.data.cols());
  y.data.topRows(a.data.rows()) = a.data;
  y.data.bottomRows(b.data.rows()) = b.data;
  return y;
}

template <typename T>
void add_channel_bias(FeatureMap<T>& x, const Mat<T>& bias) {
  const int hw = x.pixels();
  for (int i = 0; i < x.n; ++i)
    x.data.middleCols(static_cast<Eigen::Index>(i) * hw, hw).colwise() += bias.col(i);
}

template <typename T>
Mat<T> channel_bias_backward(const FeatureMap<T>& grad_out) {
  const int hw = grad_out.pixels();
  Mat<T> g(grad_out.channels(), grad_out.n);
  for (int i = 0; i < grad_out.n; ++i)
    g.col(i) = grad_out.data.middleCols(static_cast<Eigen::Index>(i) * hw, hw).rowwise().sum();
  return g;
}

// -------------------------------------------------------------- ResBlock

template <typename T>
ResBlock<T>::ResBlock(const std::string& name, int in_channels, int out_channels, int emb_dim, int groups)
    : gn1_(name + ".norm1", in_channels, std::gcd(groups, in_channels)),
      gn2_(name + ".norm2", out_channels, std::gcd(groups, out_channels)),
      conv1_(name + ".conv1", in_channels, out_channels, 3),
      conv2_(name + ".conv2", out_channels, out_channels, 3),
      proj_(name + ".emb_proj", emb_dim, out_channels),
      has_skip_(in_channels != out_channels) {
  if (has_skip_) skip_ = Conv2d<T>(name + ".skip", in_channels, out_channels, 1);
}

template <typename T>
void ResBlock<T>::init(std::mt19937_64& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  proj_.init(rng);
  if (has_skip_) skip_.init(rng);
}

template <typename T>
std::vector<Param<T>*> ResBlock<T>::params() {
  std::vector<Param<T>*> out;
  for (auto* p : gn1_.params()) out.push_back(p);
  for (auto* p : conv1_.params()) out.push_back(p);
  for (auto* p : proj_.params()) out.push_back(p);
  for (auto* p : gn2_.params()) out.push_back(p);
  for (auto* p : conv2_.params()) out.push_back(p);
  if (has_skip_)
    for (auto* p : skip_.params()) out.push_back(p);
  return out;
}

template <typename T>
FeatureMap<T> ResBlock<T>::forward(const FeatureMap<T>& x, const Mat<T>& emb_act, Ctx* ctx) const {
  FeatureMap<T> a1 = gn1_.forward(x, ctx ? &ctx->gn1 : nullptr);
  FeatureMap<T> h = conv1_.forward(silu(a1), ctx ? &ctx->conv1 : nullptr);
  add_channel_bias(h, proj_.forward(emb_act));
  FeatureMap<T> a2 = gn2_.forward(h, ctx ? &ctx->gn2 : nullptr);
  FeatureMap<T> out = conv2_.forward(silu(a2), ctx ? &ctx->conv2 : nullptr);
  if (has_skip_) {
    out.data += skip_.forward(x, ctx ? &ctx->skip : nullptr).data;
  } else {
    out.data += x.data;
  }
  if (ctx) {
    ctx->x = x;
    ctx->a1 = std::move(a1);
    ctx->a2 = std::move(a2);
  }
  return out;
}

template <typename T>
FeatureMap<T> ResBlock<T>::backward(const Ctx& ctx, const Mat<T>& emb_act, const FeatureMap<T>& grad_out,
                                    Mat<T>& grad_emb_act) {
  FeatureMap<T> g = conv2_.backward(ctx.conv2, grad_out);
  g = silu_backward(ctx.a2, g);
  g = gn2_.backward(ctx.gn2, g);
  grad_emb_act += proj_.backward(emb_act, channel_bias_backward(g));
  g = conv1_.backward(ctx.conv1, g);
  g = silu_backward(ctx.a1, g);
  FeatureMap<T> gx = gn1_.backward(ctx.gn1, g);
  if (has_skip_) {
    gx.data += skip_.backward(ctx.skip, grad_out).data;
  } else {
    gx.data += grad_out.data;
  }
  return gx;
}

#define MEDI_INSTANTIATE(T)                                                                      \
  template struct Param<T>;                                                                      \
  template void init_uniform<T>(Param<T>&, T, std::mt19937_64&);                                 \
  template void init_normal<T>(Param<T>&, T, std::mt19937_64&);                                  \
  template class Conv2d<T>;                                                                      \
  template class GroupNorm<T>;                                                                   \
  template class Linear<T>;                                                                      \
  template class Embedding<T>;                                                                   \
  template class ResBlock<T>;                                                                    \
  template Mat<T> silu<T>(const Mat<T>&);                                                        \
  template Mat<T> silu_backward<T>(const Mat<T>&, const Mat<T>&);                                \
  template FeatureMap<T> silu<T>(const FeatureMap<T>&);                                          \
  template FeatureMap<T> silu_backward<T>(const FeatureMap<T>&, const FeatureMap<T>&);           \
  template FeatureMap<T> avg_pool2<T>(const FeatureMap<T>&);                                     \
  template FeatureMap<T> avg_pool2_backward<T>(const FeatureMap<T>&);                            \
  template FeatureMap<T> upsample2<T>(const FeatureMap<T>&);                                     \
  template FeatureMap<T> upsample2_backward<T>(const FeatureMap<T>&);                            \
  template FeatureMap<T> concat_channels<T>(const FeatureMap<T>&, const FeatureMap<T>&);         \
  template void add_channel_bias<T>(FeatureMap<T>&, const Mat<T>&);                              \
  template Mat<T> channel_bias_backward<T>(const FeatureMap<T>&);

MEDI_INSTANTIATE(float)
MEDI_INSTANTIATE(double)

#undef MEDI_INSTANTIATE

}  // namespace medi::diffusion::nn
