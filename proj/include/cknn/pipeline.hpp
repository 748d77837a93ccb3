// End-to-end drivers used by the CLI and the acceptance suite: fit a bundle
// from a training view, score manifests, and run a whole evaluation protocol.

#pragma once

#include "cknn/cleanse.hpp"
#include "cknn/eval.hpp"
#include "cknn/infer.hpp"
#include "cknn/io.hpp"

#include <functional>
#include <string>
#include <vector>

namespace cknn {

struct FitReport {
  std::size_t source_objects = 0;
  std::size_t app_removed = 0;
  std::size_t mot_removed = 0;
  std::size_t app_bank_rows = 0;
  std::size_t mot_bank_rows = 0;
  double seconds = 0.0;
};

struct FitResult {
  ModelBundle bundle;
  FitReport report;
};

FitResult fit_bundle(const TrainingView& view, const CleanseConfig& config);

// Packs an already computed build into a bundle.
ModelBundle make_bundle(const TrainingView& view, const CleanseConfig& config,
                        const CleanseResult& built);

std::vector<ScoreSeries> score_manifest(const ModelBundle& bundle, const DatasetManifest& m,
                                        const InferOptions& options);

struct RunResult {
  std::string name;
  std::vector<std::string> eval_videos;
  FitReport fit;
  AurocReport auroc;
  // Bank rows (both modalities) whose provenance is one of the run's
  // evaluation videos. Always zero for merge_plus.
  std::size_t eval_rows_in_banks = 0;
};

struct ProtocolResult {
  ProtocolMode mode = ProtocolMode::Merge;
  std::vector<RunResult> runs;
  std::vector<VideoAuroc> per_video;  // across all runs
  std::vector<std::string> skipped;
  double mean_auroc = 0.0;
};

struct ProtocolOptions {
  CleanseConfig cleanse;
  InferOptions infer;  // k and sigma are taken from cleanse.hyperparams
  std::function<void(const RunResult&)> on_run;  // progress hook, may be empty
};

// Throws InvalidInput if the plan would put an evaluated video into its own
// banks under merge_plus (checked on the fitted banks' provenance).
ProtocolResult run_protocol(const DatasetManifest& train, const DatasetManifest& test,
                            ProtocolMode mode, const ProtocolOptions& options);

}  // namespace cknn
