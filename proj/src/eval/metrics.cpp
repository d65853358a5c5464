#include "medi/eval/metrics.hpp"

#include "medi/error.hpp"

#include <cmath>
#include <set>

namespace medi::eval {

double balanced_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                         std::vector<std::string>* excluded) {
  if (predictions.size() != labels.size())
    throw Error("balanced_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw Error("balanced_accuracy: empty label set");
  std::map<std::string, std::pair<long, long>> tally;  // class -> (correct, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& t = tally[labels[i]];
    ++t.second;
    if (predictions[i] == labels[i]) ++t.first;
  }
  if (excluded) {
    excluded->clear();
    const std::set<std::string> predicted(predictions.begin(), predictions.end());
    for (const auto& p : predicted)
      if (!tally.contains(p)) excluded->push_back(p);
  }
  double sum = 0.0;
  for (const auto& [cls, t] : tally) sum += static_cast<double>(t.first) / static_cast<double>(t.second);
  return 100.0 * sum / static_cast<double>(tally.size());
}

SiteAccuracy tss_averaged_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                                   const std::vector<std::string>& sites) {
  if (sites.size() != labels.size() || predictions.size() != labels.size())
    throw Error("tss_averaged_accuracy: predictions, labels and sites must have equal length");
  std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& g = groups[sites[i]];
    g.first.push_back(predictions[i]);
    g.second.push_back(labels[i]);
  }
  SiteAccuracy out;
  double sum = 0.0;
  for (const auto& [site, g] : groups) {
    const double v = balanced_accuracy(g.first, g.second);
    out.per_site[site] = v;
    sum += v;
    if (std::set<std::string>(g.second.begin(), g.second.end()).size() == 1) out.single_class_sites.push_back(site);
  }
  out.mean = groups.empty() ? 0.0 : sum / static_cast<double>(groups.size());
  return out;
}

ProbeResult score_predictions(std::string run_id, const std::vector<std::string>& predictions,
                              const std::vector<std::string>& labels, const std::vector<std::string>& sites) {
  ProbeResult r;
  r.run_id = std::move(run_id);
  r.overall = balanced_accuracy(predictions, labels);
  auto tss = tss_averaged_accuracy(predictions, labels, sites);
  r.per_site = std::move(tss.per_site);
  r.tss_avg = tss.mean;
  r.single_class_sites = std::move(tss.single_class_sites);
  return r;
}

MeanSE mean_se(const std::vector<double>& values) {
  if (values.empty()) throw Error("mean_se: no values");
  MeanSE out;
  out.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    // population deviation (divide by n), so [70, 80] gives 5 / sqrt(2)
    out.se = std::sqrt(ss / static_cast<double>(out.n)) / std::sqrt(static_cast<double>(out.n));
  }
  return out;
}

RunAggregate aggregate_runs(const std::vector<ProbeResult>& runs) {
  if (runs.empty()) throw Error("aggregate_runs: no runs");
  std::vector<double> overall, tss;
  for (const auto& r : runs) {
    overall.push_back(r.overall);
    tss.push_back(r.tss_avg);
  }
  return {mean_se(overall), mean_se(tss)};
}

}  // namespace medi::eval
