#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace medi::eval {

struct ProbeOptions {
  double l2 = 1e-3;       // on standardized features, weights and biases
  double tolerance = 1e-6;  // max-abs gradient at convergence
  int max_iterations = 100;
};

// Multinomial logistic regression on frozen embeddings. Class 0 is the
// reference class (its logit is fixed at zero).
struct LinearProbe {
  std::vector<std::string> classes;  // sorted
  Eigen::VectorXd feature_mean, feature_scale;
  Eigen::MatrixXd weights;  // (classes - 1) x dim
  Eigen::VectorXd bias;
  std::vector<std::size_t> support;  // row indices used for fitting
  int iterations = 0;
  double final_gradient = 0.0;

  Eigen::MatrixXd logits(const Eigen::MatrixXd& embeddings) const;
  std::vector<std::string> predict(const Eigen::MatrixXd& embeddings) const;
};

// Draws exactly `n_per_class` rows per class without replacement (seeded
// per class) and fits the probe by damped Newton iterations.
LinearProbe train_linear_probe(const Eigen::MatrixXd& embeddings, const std::vector<std::string>& labels,
                               std::size_t n_per_class, std::uint64_t seed, const ProbeOptions& options = {});

}  // namespace medi::eval
