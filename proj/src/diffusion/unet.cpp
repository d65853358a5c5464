#include "medi/diffusion/unet.hpp"

#include "medi/error.hpp"

#include <cmath>

namespace medi::diffusion {

template <typename T>
Mat<T> timestep_features(std::span<const int> timesteps, int dim) {
  // an odd width leaves the last row at zero
  const int half = dim / 2;
  Mat<T> out = Mat<T>::Zero(dim, static_cast<Eigen::Index>(timesteps.size()));
  for (std::size_t j = 0; j < timesteps.size(); ++j) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(half, 1));
      const double arg = timesteps[j] * freq;
      out(i, static_cast<Eigen::Index>(j)) = static_cast<T>(std::sin(arg));
      out(half + i, static_cast<Eigen::Index>(j)) = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

namespace {

void check_config(const UNetConfig& c, const ConditioningSpec& spec) {
  spec.validate();
  if (c.in_channels <= 0 || c.base_channels <= 0 || c.channel_multiplier <= 0 || c.groups <= 0)
    throw ConfigError("UNet widths must be positive");
  if (c.image_size < 2 || c.image_size % 2 != 0) throw ConfigError("UNet image size must be even");
}

}  // namespace

template <typename T>
UNet<T>::UNet(const UNetConfig& config, const ConditioningSpec& spec) : config_(config) {
  check_config(config, spec);
  const int c0 = config.base_channels;
  const int c1 = config.base_channels * config.channel_multiplier;
  const int d = spec.d_t;
  const int g = config.groups;
  tables_ = EmbeddingTables<T>(spec);
  time1_ = nn::Linear<T>("time.linear1", d, d);
  time2_ = nn::Linear<T>("time.linear2", d, d);
  conv_in_ = nn::Conv2d<T>("conv_in", config.in_channels, c0, 3);
  down0_ = nn::ResBlock<T>("down0", c0, c0, d, g);
  down1_ = nn::ResBlock<T>("down1", c0, c1, d, g);
  mid_ = nn::ResBlock<T>("mid", c1, c1, d, g);
  up1_ = nn::ResBlock<T>("up1", 2 * c1, c1, d, g);
  up0_ = nn::ResBlock<T>("up0", c1 + c0, c0, d, g);
  norm_out_ = nn::GroupNorm<T>("norm_out", c0, std::gcd(g, c0));
  conv_out_ = nn::Conv2d<T>("conv_out", c0, config.in_channels, 3);
}

template <typename T>
void UNet<T>::init(std::mt19937_64& rng, bool zero_output) {
  tables_.init(rng);
  time1_.init(rng);
  time2_.init(rng);
  conv_in_.init(rng);
  down0_.init(rng);
  down1_.init(rng);
  mid_.init(rng);
  up1_.init(rng);
  up0_.init(rng);
  conv_out_.init(rng);
  if (zero_output) {
    conv_out_.weight.value.setZero();
    conv_out_.bias.value.setZero();
  }
}

template <typename T>
FeatureMap<T> UNet<T>::forward(const FeatureMap<T>& x, std::span<const int> timesteps,
                               std::span<const Condition> conds, Ctx* ctx) const {
  if (x.channels() != config_.in_channels || x.h != config_.image_size || x.w != config_.image_size)
    throw Error("UNet input must be " + std::to_string(config_.in_channels) + "x" +
                std::to_string(config_.image_size) + "x" + std::to_string(config_.image_size));
  if (static_cast<int>(timesteps.size()) != x.n || static_cast<int>(conds.size()) != x.n)
    throw Error("UNet: batch size mismatch between images, timesteps and conditioning");

  Mat<T> time_feat = timestep_features<T>(timesteps, spec().d_t);
  Mat<T> time_hidden = time1_.forward(time_feat);
  Mat<T> z_t = time2_.forward(nn::silu<T>(time_hidden));
  Mat<T> z_final = combine_with_timestep<T>(z_t, tables_.build(conds));
  Mat<T> emb = nn::silu<T>(z_final);

  FeatureMap<T> h = conv_in_.forward(x, ctx ? &ctx->conv_in : nullptr);
  FeatureMap<T> s0 = down0_.forward(h, emb, ctx ? &ctx->down0 : nullptr);
  FeatureMap<T> s1 = down1_.forward(nn::avg_pool2(s0), emb, ctx ? &ctx->down1 : nullptr);
  FeatureMap<T> m = mid_.forward(s1, emb, ctx ? &ctx->mid : nullptr);
  FeatureMap<T> u1 = up1_.forward(nn::concat_channels(m, s1), emb, ctx ? &ctx->up1 : nullptr);
  FeatureMap<T> u = nn::upsample2(u1);
  FeatureMap<T> u0 = up0_.forward(nn::concat_channels(u, s0), emb, ctx ? &ctx->up0 : nullptr);
  FeatureMap<T> a = norm_out_.forward(u0, ctx ? &ctx->norm_out : nullptr);
  FeatureMap<T> out = conv_out_.forward(nn::silu(a), ctx ? &ctx->conv_out : nullptr);

  if (ctx) {
    ctx->conds.assign(conds.begin(), conds.end());
    ctx->time_feat = std::move(time_feat);
    ctx->time_hidden = std::move(time_hidden);
    ctx->z_final = std::move(z_final);
    ctx->emb_act = std::move(emb);
    ctx->norm_out_pre = std::move(a);
    ctx->skip0_channels = s0.channels();
    ctx->skip1_channels = s1.channels();
    ctx->mid_channels = m.channels();
    ctx->up_channels = u.channels();
  }
  return out;
}

template <typename T>
void UNet<T>::backward(const Ctx& ctx, const FeatureMap<T>& grad_out) {
  Mat<T> g_emb = Mat<T>::Zero(ctx.emb_act.rows(), ctx.emb_act.cols());

  FeatureMap<T> g = conv_out_.backward(ctx.conv_out, grad_out);
  g = nn::silu_backward(ctx.norm_out_pre, g);
  g = norm_out_.backward(ctx.norm_out, g);

  FeatureMap<T> g_cat0 = up0_.backward(ctx.up0, ctx.emb_act, g, g_emb);
  FeatureMap<T> g_u;
  g_u.n = g_cat0.n;
  g_u.h = g_cat0.h;
  g_u.w = g_cat0.w;
  g_u.data = g_cat0.data.topRows(ctx.up_channels);
  FeatureMap<T> g_s0 = g_u;
  g_s0.data = g_cat0.data.bottomRows(ctx.skip0_channels);

  FeatureMap<T> g_cat1 = up1_.backward(ctx.up1, ctx.emb_act, nn::upsample2_backward(g_u), g_emb);
  FeatureMap<T> g_m;
  g_m.n = g_cat1.n;
  g_m.h = g_cat1.h;
  g_m.w = g_cat1.w;
  g_m.data = g_cat1.data.topRows(ctx.mid_channels);
  FeatureMap<T> g_s1 = g_m;
  g_s1.data = g_cat1.data.bottomRows(ctx.skip1_channels);

  g_s1.data += mid_.backward(ctx.mid, ctx.emb_act, g_m, g_emb).data;
  FeatureMap<T> g_pool = down1_.backward(ctx.down1, ctx.emb_act, g_s1, g_emb);
  g_s0.data += nn::avg_pool2_backward(g_pool).data;
  FeatureMap<T> g_h = down0_.backward(ctx.down0, ctx.emb_act, g_s0, g_emb);
  conv_in_.backward(ctx.conv_in, g_h);

  Mat<T> g_final = nn::silu_backward<T>(ctx.z_final, g_emb);
  tables_.backward(ctx.conds, g_final);
  Mat<T> g_hidden = time2_.backward(nn::silu<T>(ctx.time_hidden), g_final);
  time1_.backward(ctx.time_feat, nn::silu_backward<T>(ctx.time_hidden, g_hidden));
}

template <typename T>
std::vector<nn::Param<T>*> UNet<T>::params() {
  std::vector<nn::Param<T>*> out = tables_.params();
  auto append = [&out](std::vector<nn::Param<T>*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  append(time1_.params());
  append(time2_.params());
  append(conv_in_.params());
  append(down0_.params());
  append(down1_.params());
  append(mid_.params());
  append(up1_.params());
  append(up0_.params());
  append(norm_out_.params());
  append(conv_out_.params());
  return out;
}

template <typename T>
std::vector<const nn::Param<T>*> UNet<T>::params() const {
  auto ps = const_cast<UNet*>(this)->params();
  return {ps.begin(), ps.end()};
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += static_cast<std::size_t>(p->size());
  return n;
}

template Mat<float> timestep_features<float>(std::span<const int>, int);
template Mat<double> timestep_features<double>(std::span<const int>, int);
template class UNet<float>;
template class UNet<double>;

// ------------------------------------------------------- DenoiserModel

DenoiserModel::DenoiserModel(const UNetConfig& config, const ConditioningSpec& spec, std::uint64_t seed)
    : net_(config, spec) {
  std::mt19937_64 rng(seed);
  net_.init(rng);
}

DenoiserModel::DenoiserModel(UNet<float> net) : net_(std::move(net)) {}

FeatureMap<float> DenoiserModel::predict(const FeatureMap<float>& x_t, std::span<const int> timesteps,
                                         std::span<const Condition> conds) const {
  return net_.forward(x_t, timesteps, conds, nullptr);
}

FeatureMap<float> DenoiserModel::forward_train(const FeatureMap<float>& x_t, std::span<const int> timesteps,
                                               std::span<const Condition> conds) {
  if (!ctx_) ctx_ = std::make_unique<UNet<float>::Ctx>();
  return net_.forward(x_t, timesteps, conds, ctx_.get());
}

void DenoiserModel::backward(const FeatureMap<float>& grad_out) {
  if (!ctx_) throw Error("DenoiserModel::backward called before forward_train");
  net_.backward(*ctx_, grad_out);
}

}  // namespace medi::diffusion
