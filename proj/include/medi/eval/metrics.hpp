#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace medi::eval {

// Mean of per-class recall over the classes present in `labels`, x100.
// Predictions of classes absent from `labels` count as errors; such
// classes are listed in `excluded` when given.
double balanced_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                         std::vector<std::string>* excluded = nullptr);

struct SiteAccuracy {
  std::map<std::string, double> per_site;
  // Sites where the test data holds a single class; their value is that
  // class's recall.
  std::vector<std::string> single_class_sites;
  double mean = 0.0;
};

SiteAccuracy tss_averaged_accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& labels,
                                   const std::vector<std::string>& sites);

struct ProbeResult {
  std::string run_id;
  double overall = 0.0;
  std::map<std::string, double> per_site;
  double tss_avg = 0.0;
  std::vector<std::string> single_class_sites;
};

ProbeResult score_predictions(std::string run_id, const std::vector<std::string>& predictions,
                              const std::vector<std::string>& labels, const std::vector<std::string>& sites);

struct MeanSE {
  double mean = 0.0;
  std::optional<double> se;  // absent for a single value
  std::size_t n = 0;
};

// Mean and sd / sqrt(n), where sd is the population standard deviation
// (divisor n).
MeanSE mean_se(const std::vector<double>& values);

struct RunAggregate {
  MeanSE overall;
  MeanSE tss_avg;
};

RunAggregate aggregate_runs(const std::vector<ProbeResult>& runs);

}  // namespace medi::eval
