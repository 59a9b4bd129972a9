#include "carepred/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <iterator>

#include "carepred/encoder.hpp"
#include "carepred/errors.hpp"
#include "json.hpp"

namespace carepred {

SampleScore sample_metrics(const ActivityList& predicted, const ActivityList& actual) {
  const auto pred = unique_sorted(predicted);
  const auto act = unique_sorted(actual);
  if (act.empty()) throw ContractError("sample_metrics: actual set is empty");
  ActivityList common;
  std::set_intersection(pred.begin(), pred.end(), act.begin(), act.end(),
                        std::back_inserter(common));
  const auto hits = static_cast<double>(common.size());

  SampleScore s;
  s.precision = pred.empty() ? 0.0 : hits / static_cast<double>(pred.size());
  s.recall = hits / static_cast<double>(act.size());
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                      : 0.0;
  s.exact = pred == act ? 1 : 0;
  return s;
}

MetricsReport mean_report(const std::vector<SampleScore>& scores) {
  if (scores.empty()) throw ConfigError("cannot average metrics over zero samples");
  MetricsReport r;
  for (const auto& s : scores) {
    r.accuracy += s.exact;
    r.precision += s.precision;
    r.recall += s.recall;
    r.f1 += s.f1;
  }
  const auto n = static_cast<double>(scores.size());
  r.accuracy /= n;
  r.precision /= n;
  r.recall /= n;
  r.f1 /= n;
  r.n_samples = static_cast<std::int64_t>(scores.size());
  return r;
}

ActivityList predict_activities(const ModelCheckpoint& checkpoint, const ActivitySample& sample,
                                double threshold) {
  const auto ex = encode_example(sample, encoder_options(checkpoint.config, checkpoint.train_config));
  const auto logits = predict_logits(ex.tokens, checkpoint.params, checkpoint.config);
  const auto labels = predict_labels(as_span(logits), threshold);
  ActivityList out;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] == 1) out.emplace_back(static_cast<int>(j) + 1);
  }
  return out;
}

MetricsReport evaluate(const ModelCheckpoint& checkpoint, const std::vector<ActivitySample>& dataset,
                       double threshold) {
  if (dataset.empty()) throw ConfigError("evaluation dataset is empty");
  checkpoint.params.check_shapes(checkpoint.config);
  std::vector<SampleScore> scores;
  scores.reserve(dataset.size());
  for (const auto& s : dataset) {
    scores.push_back(sample_metrics(predict_activities(checkpoint, s, threshold), s.next_activities));
  }
  return mean_report(scores);
}

MetricsReport weighted_average(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw ConfigError("weighted_average needs at least one report");
  MetricsReport out;
  double total = 0.0;
  for (const auto& r : reports) {
    if (r.n_samples <= 0) throw ContractError("report with non-positive n_samples");
    const auto w = static_cast<double>(r.n_samples);
    out.accuracy += r.accuracy * w;
    out.precision += r.precision * w;
    out.recall += r.recall * w;
    out.f1 += r.f1 * w;
    out.n_samples += r.n_samples;
    total += w;
  }
  out.accuracy /= total;
  out.precision /= total;
  out.recall /= total;
  out.f1 /= total;
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_row(const std::string& label, const MetricsReport& r) {
  return label + ',' + fmt(r.accuracy) + ',' + fmt(r.precision) + ',' + fmt(r.recall) + ',' +
         fmt(r.f1) + ',' + std::to_string(r.n_samples) + '\n';
}

nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["n_samples"] = r.n_samples;
  return j;
}

}  // namespace

std::string metrics_csv(const UserReports& per_user, const MetricsReport& average) {
  std::string out = "user_id,accuracy,precision,recall,f1,n_samples\n";
  for (const auto& [user, report] : per_user) out += csv_row(std::to_string(user), report);
  out += csv_row("avg", average);
  return out;
}

std::string metrics_json(const UserReports& per_user, const MetricsReport& average) {
  nlohmann::ordered_json doc;
  auto users = nlohmann::ordered_json::array();
  for (const auto& [user, report] : per_user) {
    auto j = report_json(report);
    j["user_id"] = user;
    users.push_back(std::move(j));
  }
  doc["users"] = std::move(users);
  doc["avg"] = report_json(average);
  return doc.dump(2) + '\n';
}

}  // namespace carepred
