#include "medi/eval/extractor.hpp"

#include "medi/error.hpp"
#include "medi/image_io.hpp"

#include <cmath>
#include <random>

namespace medi::eval {

using diffusion::FeatureMap;

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, int channels1, int channels2, int in_channels)
    : seed_(seed),
      channels1_(channels1),
      channels2_(channels2),
      conv1_("extractor.conv1", in_channels, channels1, 3),
      conv2_("extractor.conv2", channels1, channels2, 3) {
  std::mt19937_64 rng(seed);
  diffusion::nn::init_normal(conv1_.weight, std::sqrt(2.0f / (9.0f * in_channels)), rng);
  diffusion::nn::init_normal(conv2_.weight, std::sqrt(2.0f / (9.0f * channels1)), rng);
}

std::string RandomConvExtractor::name() const {
  return "random-conv-" + std::to_string(channels1_) + "-" + std::to_string(channels2_) + "-seed" +
         std::to_string(seed_);
}

Eigen::MatrixXd RandomConvExtractor::extract(const FeatureMap<float>& images) const {
  FeatureMap<float> h1 = conv1_.forward(images, nullptr);
  h1.data = h1.data.cwiseMax(0.0f);
  FeatureMap<float> h2 = conv2_.forward(diffusion::nn::avg_pool2(h1), nullptr);
  h2.data = h2.data.cwiseMax(0.0f);
  Eigen::MatrixXd out(images.n, width());
  for (int i = 0; i < images.n; ++i) {
    out.row(i).head(channels1_) =
        h1.data.middleCols(static_cast<Eigen::Index>(i) * h1.pixels(), h1.pixels()).rowwise().mean().cast<double>().transpose();
    out.row(i).tail(channels2_) =
        h2.data.middleCols(static_cast<Eigen::Index>(i) * h2.pixels(), h2.pixels()).rowwise().mean().cast<double>().transpose();
  }
  return out;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed) {
  if (name == "random-conv") return std::make_unique<RandomConvExtractor>(seed);
  throw ConfigError("unknown feature extractor '" + name + "'");
}

Eigen::MatrixXd extract_manifest(const registry::DatasetManifest& manifest, const FeatureExtractor& extractor,
                                 int batch_size) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(manifest.size()), extractor.width());
  std::size_t i = 0;
  while (i < manifest.size()) {
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(batch_size), manifest.size() - i);
    FeatureMap<float> batch;
    for (std::size_t j = 0; j < n; ++j) {
      const auto img = image::read_ppm(manifest.image_path(manifest.records[i + j]));
      if (j == 0) batch = FeatureMap<float>(3, static_cast<int>(n), img.height, img.width);
      if (img.width != batch.w || img.height != batch.h) throw Error("images in a manifest must share one size");
      batch.set_sample(static_cast<int>(j), image::to_chw(img));
    }
    out.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = extractor.extract(batch);
    i += n;
  }
  return out;
}

std::vector<std::string> class_labels(const registry::DatasetManifest& manifest) {
  std::vector<std::string> out;
  out.reserve(manifest.size());
  for (const auto& r : manifest.records) out.push_back(r.class_label);
  return out;
}

FIDResult per_class_fid(const registry::DatasetManifest& real, const registry::DatasetManifest& syn,
                        const FeatureExtractor& extractor, std::size_t min_samples) {
  return per_class_fid(extract_manifest(real, extractor), class_labels(real), extract_manifest(syn, extractor),
                       class_labels(syn), min_samples);
}

}  // namespace medi::eval
