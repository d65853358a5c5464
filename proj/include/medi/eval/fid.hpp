#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace medi::eval {

struct GaussianSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased sample covariance
  std::size_t count = 0;
};

// Rows are samples, columns feature dimensions. Needs >= 2 finite rows.
GaussianSummary summarize_features(const Eigen::MatrixXd& features);

// ||mu_a - mu_b||^2 + Tr(A + B - 2 (A B)^{1/2}) with `regularization` * I
// added to both covariances. The trace of the square root is taken from the
// eigenvalues of the symmetric product A^{1/2} B A^{1/2}.
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b, double regularization = 1e-6);

double fid(const Eigen::MatrixXd& features_real, const Eigen::MatrixXd& features_syn);

struct FIDResult {
  double overall = 0.0;
  std::map<std::string, double> per_class;
  double macro_average = 0.0;
  // Classes that could not be scored, with the reason.
  std::map<std::string, std::string> skipped;
};

// Per-class FID from pre-extracted features; rows of `real`/`syn` line up
// with the label vectors. Classes with fewer than `min_samples` rows on
// either side, or present on one side only, are reported in `skipped`.
FIDResult per_class_fid(const Eigen::MatrixXd& real, const std::vector<std::string>& real_labels,
                        const Eigen::MatrixXd& syn, const std::vector<std::string>& syn_labels,
                        std::size_t min_samples = 2);

}  // namespace medi::eval
