#include "cknn/pipeline.hpp"

#include <chrono>
#include <unordered_set>

namespace cknn {

ModelBundle make_bundle(const TrainingView& view, const CleanseConfig& config,
                        const CleanseResult& built) {
  ModelBundle b;
  b.hyperparams = config.hyperparams;
  b.app_scorer = config.app_scorer;
  b.mot_scorer = config.mot_scorer;
  b.compression = config.compression;
  b.d_app = view.d_app;
  b.d_mot = view.d_mot;
  b.app_bank = built.app.bank;
  b.mot_bank = built.mot.bank;
  b.app_stats = built.app.stats;
  b.mot_stats = built.mot.stats;
  b.app_gmm = built.app.gmm;
  b.mot_gmm = built.mot.gmm;
  return b;
}

FitResult fit_bundle(const TrainingView& view, const CleanseConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const CleanseResult built = cleanse_and_build(view, config);
  FitResult r;
  r.bundle = make_bundle(view, config, built);
  r.report.source_objects = view.objects.size();
  r.report.app_removed = built.app.removed.size();
  r.report.mot_removed = built.mot.removed.size();
  r.report.app_bank_rows = built.app.bank.size();
  r.report.mot_bank_rows = built.mot.bank.size();
  r.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<ScoreSeries> score_manifest(const ModelBundle& bundle, const DatasetManifest& m,
                                        const InferOptions& options) {
  if (m.d_app != bundle.d_app || m.d_mot != bundle.d_mot) {
    throw InvalidInput("manifest dims (" + std::to_string(m.d_app) + ", " +
                       std::to_string(m.d_mot) + ") do not match the bundle (" +
                       std::to_string(bundle.d_app) + ", " + std::to_string(bundle.d_mot) + ")");
  }
  BundleScorer scorer(bundle);
  return scorer.score_manifest(m, options);
}

ProtocolResult run_protocol(const DatasetManifest& train, const DatasetManifest& test,
                            ProtocolMode mode, const ProtocolOptions& options) {
  if (!test.has_labels()) throw InvalidInput("the test manifest has no frame labels");
  const ProtocolPlan plan = build_protocol(train, test, mode);
  InferOptions infer = options.infer;
  infer.k = options.cleanse.hyperparams.k;
  infer.sigma = options.cleanse.hyperparams.smoothing_sigma;

  ProtocolResult out;
  out.mode = mode;
  double sum = 0.0;
  for (const auto& run : plan.runs) {
    const TrainingView view = run_training_view(run, train, test);
    FitResult fit = fit_bundle(view, options.cleanse);

    RunResult rr;
    rr.name = run.name;
    rr.eval_videos = run.eval_videos;
    rr.fit = fit.report;
    const std::unordered_set<std::string> eval_ids(run.eval_videos.begin(), run.eval_videos.end());
    for (const auto* bank : {&fit.bundle.app_bank, &fit.bundle.mot_bank}) {
      for (const auto& k : bank->provenance) rr.eval_rows_in_banks += eval_ids.count(k.video_id);
    }
    if (mode == ProtocolMode::MergePlus && rr.eval_rows_in_banks != 0) {
      throw InvalidInput("run '" + run.name + "' leaked " + std::to_string(rr.eval_rows_in_banks) +
                         " evaluated-video rows into its banks");
    }

    const DatasetManifest eval_m = run_eval_manifest(run, test);
    const auto series = score_manifest(fit.bundle, eval_m, infer);
    try {
      rr.auroc = mean_video_auroc(series, eval_m);
    } catch (const MetricError&) {
      // merge_plus evaluates one video per run; a single-class video is
      // reported as skipped and the protocol continues.
      if (mode != ProtocolMode::MergePlus) throw;
      for (const auto& s : series) rr.auroc.skipped.push_back(s.video_id);
    }
    for (const auto& v : rr.auroc.per_video) {
      out.per_video.push_back(v);
      sum += v.auroc;
    }
    out.skipped.insert(out.skipped.end(), rr.auroc.skipped.begin(), rr.auroc.skipped.end());
    if (options.on_run) options.on_run(rr);
    out.runs.push_back(std::move(rr));
  }
  if (out.per_video.empty()) throw MetricError("no evaluable video in the test split");
  out.mean_auroc = sum / static_cast<double>(out.per_video.size());
  return out;
}

}  // namespace cknn
