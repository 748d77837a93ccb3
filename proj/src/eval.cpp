#include "cknn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

namespace cknn {

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw InvalidInput("auroc: " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(labels.size()) + " labels");
  }
  std::uint64_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw InvalidInput("auroc: non-finite score");
    if (labels[i] > 1) throw InvalidInput("auroc: labels must be 0 or 1");
    pos += labels[i];
  }
  const std::uint64_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("auroc is undefined for single-class labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Twice the Mann-Whitney statistic, kept integral so the result is exact.
  std::uint64_t twice_wins = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? gp : gn)++;
      ++j;
    }
    twice_wins += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

AurocReport mean_video_auroc(std::span<const ScoreSeries> series, const DatasetManifest& labelled) {
  AurocReport rep;
  double sum = 0.0;
  for (const auto& s : series) {
    const auto* v = labelled.find_video(s.video_id);
    if (!v) throw InvalidInput("no labelled video '" + s.video_id + "'");
    if (!v->labels) throw InvalidInput("video '" + s.video_id + "' has no frame labels");
    try {
      const double a = auroc(s.smoothed, *v->labels);
      rep.per_video.push_back({s.video_id, a});
      sum += a;
    } catch (const MetricError&) {
      rep.skipped.push_back(s.video_id);
    }
  }
  if (rep.per_video.empty()) {
    throw MetricError("no video has both normal and abnormal frames (" +
                      std::to_string(rep.skipped.size()) + " skipped)");
  }
  rep.mean = sum / static_cast<double>(rep.per_video.size());
  return rep;
}

std::string_view to_string(ProtocolMode m) {
  switch (m) {
    case ProtocolMode::Partial: return "partial";
    case ProtocolMode::Merge: return "merge";
    case ProtocolMode::MergePlus: return "merge_plus";
  }
  return "?";
}

ProtocolMode parse_protocol_mode(std::string_view s) {
  if (s == "partial") return ProtocolMode::Partial;
  if (s == "merge") return ProtocolMode::Merge;
  if (s == "merge_plus" || s == "merge+") return ProtocolMode::MergePlus;
  throw InvalidInput("unknown mode '" + std::string(s) + "' (expected partial|merge|merge_plus)");
}

namespace {

std::vector<std::string> ids_of(const DatasetManifest& m) {
  std::vector<std::string> ids;
  for (const auto& v : m.videos) ids.push_back(v.video_id);
  return ids;
}

}  // namespace

ProtocolPlan build_protocol(const DatasetManifest& train, const DatasetManifest& test,
                            ProtocolMode mode) {
  if (test.videos.empty()) throw InvalidInput("test split has no videos");
  std::set<std::string> test_ids;
  for (const auto& v : test.videos) test_ids.insert(v.video_id);
  for (const auto& v : train.videos) {
    if (test_ids.count(v.video_id)) {
      throw InvalidInput("video '" + v.video_id + "' appears in both the train and test splits");
    }
  }
  if (mode != ProtocolMode::Partial && !train.videos.empty() &&
      (train.d_app != test.d_app || train.d_mot != test.d_mot)) {
    throw InvalidInput("train and test splits have different feature dims");
  }

  ProtocolPlan plan;
  plan.mode = mode;
  const auto test_list = ids_of(test);
  auto merged = ids_of(train);
  merged.insert(merged.end(), test_list.begin(), test_list.end());

  switch (mode) {
    case ProtocolMode::Partial:
      plan.runs.push_back({"partial", test_list, test_list});
      break;
    case ProtocolMode::Merge:
      plan.runs.push_back({"merge", merged, test_list});
      break;
    case ProtocolMode::MergePlus:
      for (const auto& held : test_list) {
        ProtocolRun run{"merge_plus:" + held, {}, {held}};
        for (const auto& id : merged) {
          if (id != held) run.train_videos.push_back(id);
        }
        plan.runs.push_back(std::move(run));
      }
      break;
  }
  return plan;
}

TrainingView run_training_view(const ProtocolRun& run, const DatasetManifest& train,
                               const DatasetManifest& test) {
  std::unordered_set<std::string> wanted(run.train_videos.begin(), run.train_videos.end());
  TrainingView view;
  view.d_app = test.d_app;
  view.d_mot = test.d_mot;
  for (const DatasetManifest* m : {&train, &test}) {
    for (const auto& v : m->videos) {
      if (wanted.count(v.video_id)) view.videos.push_back({v.video_id, v.frame_count});
    }
    for (const auto& o : m->objects) {
      if (wanted.count(o.video_id)) view.objects.push_back(o);
    }
  }
  if (view.videos.size() != wanted.size()) {
    throw InvalidInput("run '" + run.name + "' names videos missing from both splits");
  }
  return view;
}

DatasetManifest run_eval_manifest(const ProtocolRun& run, const DatasetManifest& test) {
  std::unordered_set<std::string> wanted(run.eval_videos.begin(), run.eval_videos.end());
  DatasetManifest out;
  out.d_app = test.d_app;
  out.d_mot = test.d_mot;
  for (const auto& v : test.videos) {
    if (wanted.count(v.video_id)) out.videos.push_back(v);
  }
  for (const auto& o : test.objects) {
    if (wanted.count(o.video_id)) out.objects.push_back(o);
  }
  return out;
}

}  // namespace cknn
