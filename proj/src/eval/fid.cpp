#include "medi/eval/fid.hpp"

#include "medi/error.hpp"

#include <cmath>
#include <set>

namespace medi::eval {

GaussianSummary summarize_features(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw Error("FID needs at least 2 samples per set");
  if (!features.allFinite()) throw Error("FID: non-finite feature values");
  GaussianSummary s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  return s;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b, double regularization) {
  if (a.mean.size() != b.mean.size())
    throw Error("FID: feature widths differ (" + std::to_string(a.mean.size()) + " vs " +
                std::to_string(b.mean.size()) + ")");
  const auto d = a.mean.size();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd ca = a.cov + regularization * eye;
  const Eigen::MatrixXd cb = b.cov + regularization * eye;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(0.5 * (ca + ca.transpose()));
  if (ea.info() != Eigen::Success) throw Error("FID: eigendecomposition of covariance failed");
  const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();

  Eigen::MatrixXd prod = sqrt_a * cb * sqrt_a;
  prod = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(prod, Eigen::EigenvaluesOnly);
  if (ep.info() != Eigen::Success) throw Error("FID: covariance square root failed");
  const double tr_sqrt = ep.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double value = mean_term + ca.trace() + cb.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(value)) throw Error("FID: non-finite result");
  return std::max(value, 0.0);
}

double fid(const Eigen::MatrixXd& features_real, const Eigen::MatrixXd& features_syn) {
  if (features_real.cols() != features_syn.cols())
    throw Error("FID: feature widths differ (" + std::to_string(features_real.cols()) + " vs " +
                std::to_string(features_syn.cols()) + ")");
  return frechet_distance(summarize_features(features_real), summarize_features(features_syn));
}

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<std::string>& labels, const std::string& cls) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cls) idx.push_back(static_cast<Eigen::Index>(i));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

FIDResult per_class_fid(const Eigen::MatrixXd& real, const std::vector<std::string>& real_labels,
                        const Eigen::MatrixXd& syn, const std::vector<std::string>& syn_labels,
                        std::size_t min_samples) {
  if (static_cast<std::size_t>(real.rows()) != real_labels.size() ||
      static_cast<std::size_t>(syn.rows()) != syn_labels.size())
    throw Error("per_class_fid: feature rows and labels disagree");
  FIDResult out;
  out.overall = fid(real, syn);
  const std::set<std::string> real_classes(real_labels.begin(), real_labels.end());
  const std::set<std::string> syn_classes(syn_labels.begin(), syn_labels.end());
  std::set<std::string> all = real_classes;
  all.insert(syn_classes.begin(), syn_classes.end());
  const std::size_t floor_n = std::max<std::size_t>(min_samples, 2);
  double sum = 0.0;
  for (const auto& cls : all) {
    if (!real_classes.contains(cls)) {
      out.skipped[cls] = "no real samples";
      continue;
    }
    if (!syn_classes.contains(cls)) {
      out.skipped[cls] = "no synthetic samples";
      continue;
    }
    const Eigen::MatrixXd r = rows_of(real, real_labels, cls);
    const Eigen::MatrixXd s = rows_of(syn, syn_labels, cls);
    if (static_cast<std::size_t>(r.rows()) < floor_n || static_cast<std::size_t>(s.rows()) < floor_n) {
      out.skipped[cls] = "fewer than " + std::to_string(floor_n) + " samples";
      continue;
    }
    const double v = fid(r, s);
    out.per_class[cls] = v;
    sum += v;
  }
  out.macro_average = out.per_class.empty() ? 0.0 : sum / static_cast<double>(out.per_class.size());
  return out;
}

}  // namespace medi::eval
