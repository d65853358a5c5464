#pragma once

#include "medi/diffusion/layers.hpp"
#include "medi/eval/fid.hpp"
#include "medi/registry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>

namespace medi::eval {

// Frozen image -> vector map. Must be deterministic and thread-safe.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual int width() const = 0;
  // One row per image in the batch.
  virtual Eigen::MatrixXd extract(const diffusion::FeatureMap<float>& images) const = 0;
};

// Small convolutional encoder with weights drawn once from a fixed seed:
// conv3x3 -> ReLU -> avgpool -> conv3x3 -> ReLU, then per-channel global
// means of both stages concatenated.
class RandomConvExtractor : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 0, int channels1 = 16, int channels2 = 32, int in_channels = 3);

  std::string name() const override;
  int width() const override { return channels1_ + channels2_; }
  Eigen::MatrixXd extract(const diffusion::FeatureMap<float>& images) const override;

 private:
  std::uint64_t seed_;
  int channels1_, channels2_;
  diffusion::nn::Conv2d<float> conv1_, conv2_;
};

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& name, std::uint64_t seed);

// Loads every image of `manifest` (in record order) and extracts features.
Eigen::MatrixXd extract_manifest(const registry::DatasetManifest& manifest, const FeatureExtractor& extractor,
                                 int batch_size = 128);

std::vector<std::string> class_labels(const registry::DatasetManifest& manifest);

// Per-class FID between two manifests through `extractor`.
FIDResult per_class_fid(const registry::DatasetManifest& real, const registry::DatasetManifest& syn,
                        const FeatureExtractor& extractor, std::size_t min_samples = 2);

}  // namespace medi::eval
