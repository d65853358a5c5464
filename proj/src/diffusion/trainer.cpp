#include "medi/diffusion/trainer.hpp"

#include <cmath>
#include <sstream>

namespace medi::diffusion {

void Adam::step(std::span<nn::Param<float>* const> params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (auto* p : params) {
      m_.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<float>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  ++steps_;

  float scale = 1.0f;
  if (config_.grad_clip > 0.0) {
    double sq = 0.0;
    for (auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sq);
    if (norm > config_.grad_clip) scale = static_cast<float>(config_.grad_clip / norm);
  }

  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float bc1 = static_cast<float>(1.0 - std::pow(config_.beta1, static_cast<double>(steps_)));
  const float bc2 = static_cast<float>(1.0 - std::pow(config_.beta2, static_cast<double>(steps_)));
  const float lr = static_cast<float>(config_.lr);
  const float eps = static_cast<float>(config_.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto update_rows = [&](Eigen::Index r0, Eigen::Index rows) {
      auto g = (p.grad.middleRows(r0, rows) * scale).eval();
      auto m = m_[i].middleRows(r0, rows);
      auto v = v_[i].middleRows(r0, rows);
      m = b1 * m + (1.0f - b1) * g;
      v = (b2 * v.array() + (1.0f - b2) * g.array().square()).matrix();
      p.value.middleRows(r0, rows).array() -=
          lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
    };
    if (p.sparse_rows) {
      for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        if (p.touched[static_cast<std::size_t>(r)]) update_rows(r, 1);
    } else {
      update_rows(0, p.value.rows());
    }
  }
}

double train_step(std::span<const TrainingExample* const> batch, TrainableDenoiser& model,
                  const NoiseSchedule& schedule, Adam& optimizer, std::mt19937_64& rng, int channels,
                  int image_size) {
  if (batch.empty()) throw Error("train_step: empty batch");
  const int n = static_cast<int>(batch.size());
  const int pixels = image_size * image_size;
  const std::size_t per_image = static_cast<std::size_t>(channels) * pixels;

  std::uniform_int_distribution<int> pick_t(1, schedule.num_timesteps());
  std::normal_distribution<float> gauss(0.0f, 1.0f);

  FeatureMap<float> x_t(channels, n, image_size, image_size);
  FeatureMap<float> eps(channels, n, image_size, image_size);
  std::vector<int> timesteps(static_cast<std::size_t>(n));
  std::vector<Condition> conds(static_cast<std::size_t>(n));
  std::vector<float> noise(per_image);
  for (int i = 0; i < n; ++i) {
    const auto& ex = *batch[static_cast<std::size_t>(i)];
    if (ex.image.size() != per_image) throw Error("train_step: example '" + ex.id + "' has the wrong image size");
    const int t = pick_t(rng);
    for (auto& e : noise) e = gauss(rng);
    timesteps[static_cast<std::size_t>(i)] = t;
    conds[static_cast<std::size_t>(i)] = ex.cond;
    eps.set_sample(i, noise);
    x_t.set_sample(i, forward_diffuse(ex.image, t, noise, schedule));
  }

  for (auto* p : model.parameters()) p->zero_grad();
  FeatureMap<float> pred = model.forward_train(x_t, timesteps, conds);
  Mat<float> diff = pred.data - eps.data;
  const double count = static_cast<double>(diff.size());
  const double loss = static_cast<double>(diff.cast<double>().squaredNorm()) / count;

  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "non-finite training loss at step " << optimizer.steps_taken() + 1 << " (lr " << optimizer.config().lr
        << "); batch ids:";
    for (const auto* ex : batch) msg << ' ' << ex->id;
    throw TrainingDiverged(msg.str());
  }

  FeatureMap<float> grad = pred;
  grad.data = diff * static_cast<float>(2.0 / count);
  model.backward(grad);
  auto params = model.parameters();
  optimizer.step(params);
  return loss;
}

std::vector<double> train(TrainableDenoiser& model, std::span<const TrainingExample> data,
                          const NoiseSchedule& schedule, const TrainingSpec& spec, int channels, int image_size,
                          const StepCallback& on_step) {
  if (data.empty()) throw Error("train: no training examples");
  if (spec.batch_size <= 0) throw ConfigError("train: batch size must be positive");
  Adam adam({spec.lr, 0.9, 0.999, 1e-8, spec.grad_clip});
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(spec.steps));
  std::vector<const TrainingExample*> batch(static_cast<std::size_t>(spec.batch_size));
  for (long step = 0; step < spec.steps; ++step) {
    for (auto& b : batch) b = &data[pick(rng)];
    const double loss = train_step(batch, model, schedule, adam, rng, channels, image_size);
    history.push_back(loss);
    if (on_step) on_step(step + 1, loss);
  }
  return history;
}

}  // namespace medi::diffusion
