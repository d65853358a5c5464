#include "medi/eval/probe.hpp"

#include "medi/error.hpp"
#include "medi/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace medi::eval {

namespace {

// Softmax probabilities with the reference class logit fixed at 0.
Eigen::MatrixXd probabilities(const Eigen::MatrixXd& z_free) {
  const Eigen::Index n = z_free.rows(), k = z_free.cols() + 1;
  Eigen::MatrixXd p(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = 0.0;
    for (Eigen::Index c = 0; c + 1 < k; ++c) m = std::max(m, z_free(i, c));
    p(i, 0) = std::exp(-m);
    for (Eigen::Index c = 1; c < k; ++c) p(i, c) = std::exp(z_free(i, c - 1) - m);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

struct Objective {
  const Eigen::MatrixXd& x;  // n x (d+1), last column is 1
  const std::vector<int>& y;
  double l2;
  int k;

  Eigen::MatrixXd unpack(const Eigen::VectorXd& theta) const {
    return Eigen::Map<const Eigen::MatrixXd>(theta.data(), x.cols(), k - 1);
  }

  double value(const Eigen::VectorXd& theta) const {
    const Eigen::MatrixXd z = x * unpack(theta);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double m = 0.0;
      for (int c = 0; c + 1 < k; ++c) m = std::max(m, z(i, c));
      double s = std::exp(-m);
      for (int c = 0; c + 1 < k; ++c) s += std::exp(z(i, c) - m);
      const double zy = y[i] == 0 ? 0.0 : z(i, y[i] - 1);
      loss += m + std::log(s) - zy;
    }
    return loss / static_cast<double>(x.rows()) + 0.5 * l2 * theta.squaredNorm();
  }

  void gradient_hessian(const Eigen::VectorXd& theta, Eigen::VectorXd& g, Eigen::MatrixXd& h) const {
    const Eigen::Index n = x.rows(), d = x.cols();
    const Eigen::MatrixXd p = probabilities(x * unpack(theta));
    Eigen::MatrixXd resid = p.rightCols(k - 1);
    for (Eigen::Index i = 0; i < n; ++i)
      if (y[i] > 0) resid(i, y[i] - 1) -= 1.0;
    const Eigen::MatrixXd gm = x.transpose() * resid / static_cast<double>(n);
    g = Eigen::Map<const Eigen::VectorXd>(gm.data(), gm.size()) + l2 * theta;

    h = Eigen::MatrixXd::Zero(d * (k - 1), d * (k - 1));
    for (int a = 0; a < k - 1; ++a) {
      for (int b = a; b < k - 1; ++b) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i)
          w(i) = p(i, a + 1) * ((a == b ? 1.0 : 0.0) - p(i, b + 1));
        const Eigen::MatrixXd block = x.transpose() * w.asDiagonal() * x / static_cast<double>(n);
        h.block(a * d, b * d, d, d) = block;
        if (a != b) h.block(b * d, a * d, d, d) = block.transpose();
      }
    }
    h.diagonal().array() += l2;
  }
};

}  // namespace

Eigen::MatrixXd LinearProbe::logits(const Eigen::MatrixXd& embeddings) const {
  if (embeddings.cols() != feature_mean.size())
    throw Error("probe: embedding width " + std::to_string(embeddings.cols()) + " does not match fitted width " +
                std::to_string(feature_mean.size()));
  const Eigen::MatrixXd xs =
      (embeddings.rowwise() - feature_mean.transpose()).array().rowwise() / feature_scale.transpose().array();
  Eigen::MatrixXd out(embeddings.rows(), static_cast<Eigen::Index>(classes.size()));
  out.col(0).setZero();
  out.rightCols(out.cols() - 1) = (xs * weights.transpose()).rowwise() + bias.transpose();
  return out;
}

std::vector<std::string> LinearProbe::predict(const Eigen::MatrixXd& embeddings) const {
  const Eigen::MatrixXd z = logits(embeddings);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    z.row(i).maxCoeff(&best);
    out.push_back(classes[static_cast<std::size_t>(best)]);
  }
  return out;
}

LinearProbe train_linear_probe(const Eigen::MatrixXd& embeddings, const std::vector<std::string>& labels,
                               std::size_t n_per_class, std::uint64_t seed, const ProbeOptions& options) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size())
    throw Error("probe: embedding rows and labels disagree");
  if (n_per_class == 0) throw Error("probe: n_per_class must be positive");
  if (!embeddings.allFinite()) throw Error("probe: non-finite embeddings");

  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw Error("probe: need at least 2 classes");

  LinearProbe probe;
  std::vector<int> y;
  for (auto& [cls, rows] : by_class) {
    if (rows.size() < n_per_class)
      throw Error("probe: class '" + cls + "' has " + std::to_string(rows.size()) + " samples, needs " +
                  std::to_string(n_per_class));
    std::mt19937_64 rng(derive_seed(seed, cls));
    std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<std::size_t> chosen(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_per_class));
    std::sort(chosen.begin(), chosen.end());
    for (auto r : chosen) {
      probe.support.push_back(r);
      y.push_back(static_cast<int>(probe.classes.size()));
    }
    probe.classes.push_back(cls);
  }

  const Eigen::Index n = static_cast<Eigen::Index>(probe.support.size()), d = embeddings.cols();
  Eigen::MatrixXd raw(n, d);
  for (Eigen::Index i = 0; i < n; ++i) raw.row(i) = embeddings.row(static_cast<Eigen::Index>(probe.support[i]));
  probe.feature_mean = raw.colwise().mean().transpose();
  const Eigen::MatrixXd centered = raw.rowwise() - probe.feature_mean.transpose();
  probe.feature_scale = (centered.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < d; ++j)
    if (probe.feature_scale(j) < 1e-12) probe.feature_scale(j) = 1.0;

  Eigen::MatrixXd x(n, d + 1);
  x.leftCols(d) = centered.array().rowwise() / probe.feature_scale.transpose().array();
  x.col(d).setOnes();

  const int k = static_cast<int>(probe.classes.size());
  const Objective obj{x, y, options.l2, k};
  Eigen::VectorXd theta = Eigen::VectorXd::Zero((d + 1) * (k - 1));
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  double f = obj.value(theta);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    obj.gradient_hessian(theta, g, h);
    if (g.cwiseAbs().maxCoeff() < options.tolerance) break;
    const Eigen::VectorXd step = h.llt().solve(g);
    double t = 1.0;
    const double slope = g.dot(step);
    Eigen::VectorXd next = theta - step;
    double fn = obj.value(next);
    while (fn > f - 1e-4 * t * slope && t > 1e-10) {
      t *= 0.5;
      next = theta - t * step;
      fn = obj.value(next);
    }
    theta = next;
    f = fn;
  }
  obj.gradient_hessian(theta, g, h);
  probe.iterations = it;
  probe.final_gradient = g.cwiseAbs().maxCoeff();

  const Eigen::MatrixXd w = obj.unpack(theta);  // (d+1) x (k-1)
  probe.weights = w.topRows(d).transpose();
  probe.bias = w.row(d).transpose();
  return probe;
}

}  // namespace medi::eval
