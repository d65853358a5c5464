#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace medi::diffusion {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// A batch of images or activations in channel-major layout: one row per
// channel, columns enumerate (sample, y, x) with x fastest. Convolutions
// become a single GEMM over the whole batch in this layout.
template <typename T>
struct FeatureMap {
  Mat<T> data;
  int n = 0;
  int h = 0;
  int w = 0;

  FeatureMap() = default;
  FeatureMap(int channels, int batch, int height, int width)
      : data(Mat<T>::Zero(channels, static_cast<Eigen::Index>(batch) * height * width)),
        n(batch),
        h(height),
        w(width) {}

  int channels() const { return static_cast<int>(data.rows()); }
  int pixels() const { return h * w; }
  bool same_shape(const FeatureMap& o) const {
    return channels() == o.channels() && n == o.n && h == o.h && w == o.w;
  }

  T& at(int c, int i, int y, int x) { return data(c, (static_cast<Eigen::Index>(i) * h + y) * w + x); }
  T at(int c, int i, int y, int x) const { return data(c, (static_cast<Eigen::Index>(i) * h + y) * w + x); }

  // Copies sample i out as a CHW vector.
  std::vector<T> sample(int i) const {
    std::vector<T> out(static_cast<std::size_t>(channels()) * pixels());
    for (int c = 0; c < channels(); ++c)
      for (int p = 0; p < pixels(); ++p) out[static_cast<std::size_t>(c) * pixels() + p] = data(c, static_cast<Eigen::Index>(i) * pixels() + p);
    return out;
  }

  void set_sample(int i, const std::vector<T>& chw) {
    for (int c = 0; c < channels(); ++c)
      for (int p = 0; p < pixels(); ++p) data(c, static_cast<Eigen::Index>(i) * pixels() + p) = chw[static_cast<std::size_t>(c) * pixels() + p];
  }

  template <typename U>
  FeatureMap<U> cast() const {
    FeatureMap<U> out;
    out.data = data.template cast<U>();
    out.n = n;
    out.h = h;
    out.w = w;
    return out;
  }
};

}  // namespace medi::diffusion
