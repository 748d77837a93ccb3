// Frame-level AUROC per video and the partial / merge / merge_plus training
// protocols.

#pragma once

#include "cknn/core.hpp"
#include "cknn/infer.hpp"

#include <span>
#include <string>
#include <vector>

namespace cknn {

// Tie-aware rank AUROC: P(s_pos > s_neg) + 0.5 P(s_pos == s_neg).
// MetricError if labels are single-class.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct VideoAuroc {
  std::string video_id;
  double auroc = 0.0;
};

struct AurocReport {
  std::vector<VideoAuroc> per_video;
  std::vector<std::string> skipped;  // single-class videos
  double mean = 0.0;
};

// AUROC of each series' smoothed scores against its video's labels in
// `labelled`, then the mean over videos that have both classes.
AurocReport mean_video_auroc(std::span<const ScoreSeries> series,
                             const DatasetManifest& labelled);

enum class ProtocolMode { Partial, Merge, MergePlus };

std::string_view to_string(ProtocolMode m);
ProtocolMode parse_protocol_mode(std::string_view s);

struct ProtocolRun {
  std::string name;
  std::vector<std::string> train_videos;  // drawn from either split
  std::vector<std::string> eval_videos;   // always test-split videos
};

struct ProtocolPlan {
  ProtocolMode mode = ProtocolMode::Merge;
  std::vector<ProtocolRun> runs;
};

// `train` may be empty (no videos) for partial mode.
ProtocolPlan build_protocol(const DatasetManifest& train, const DatasetManifest& test,
                            ProtocolMode mode);

// Unlabelled objects of the run's training videos: train-split objects first,
// then test-split objects, each in manifest order.
TrainingView run_training_view(const ProtocolRun& run, const DatasetManifest& train,
                               const DatasetManifest& test);

// The test manifest restricted to the run's evaluation videos.
DatasetManifest run_eval_manifest(const ProtocolRun& run, const DatasetManifest& test);

}  // namespace cknn
