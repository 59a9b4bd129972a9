#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "carepred/preprocess.hpp"
#include "carepred/train.hpp"

namespace carepred {

struct SampleScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int exact = 0;
};

/// Set-overlap scores for one sample. An empty prediction scores precision 0.
SampleScore sample_metrics(const ActivityList& predicted, const ActivityList& actual);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t n_samples = 0;
};

/// Unweighted means of per-sample scores, reduced in index order.
MetricsReport mean_report(const std::vector<SampleScore>& scores);

/// Runs the checkpoint in eval mode over every sample and scores the
/// thresholded predictions.
MetricsReport evaluate(const ModelCheckpoint& checkpoint, const std::vector<ActivitySample>& dataset,
                       double threshold = 0.5);

/// Activity ids the checkpoint predicts for one sample.
ActivityList predict_activities(const ModelCheckpoint& checkpoint, const ActivitySample& sample,
                                double threshold = 0.5);

/// Each metric weighted by its report's n_samples.
MetricsReport weighted_average(const std::vector<MetricsReport>& reports);

/// Per-user rows, keyed by user id.
using UserReports = std::map<UserId, MetricsReport>;

std::string metrics_csv(const UserReports& per_user, const MetricsReport& average);
std::string metrics_json(const UserReports& per_user, const MetricsReport& average);

}  // namespace carepred
