#include "cknn/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace cknn {

InferOptions InferOptions::from(const Hyperparams& hp) {
  InferOptions o;
  o.k = hp.k;
  o.sigma = hp.smoothing_sigma;
  return o;
}

double normalize_score(double s, const ScoreStats& stats) {
  if (stats.degenerate || stats.stddev < kDegenerateStd) return s - stats.mean;
  return (s - stats.mean) / stats.stddev;
}

BundleScorer::BundleScorer(const ModelBundle& bundle)
    : bundle_(&bundle), app_index_(bundle.app_bank.matrix), mot_index_(bundle.mot_bank.matrix) {}

ScoreSeries BundleScorer::score_video(const VideoInfo& video,
                                      std::span<const ObjectRecord> objects,
                                      const InferOptions& opt) const {
  if (!opt.use_app && !opt.use_mot) throw InvalidInput("at least one modality must be enabled");
  if (!(opt.sigma > 0.0)) throw InvalidInput("smoothing sigma must be positive");
  const auto& b = *bundle_;
  for (const auto& o : objects) {
    if (o.video_id != video.video_id) {
      throw InvalidInput("object of video '" + o.video_id + "' passed for video '" +
                         video.video_id + "'");
    }
    if (o.frame_idx >= video.frame_count) {
      throw InvalidInput("object frame " + std::to_string(o.frame_idx) + " outside video '" +
                         video.video_id + "'");
    }
    if (o.app_feature.size() != b.d_app || o.mot_feature.size() != b.d_mot) {
      throw InvalidInput("object feature dims (" + std::to_string(o.app_feature.size()) + ", " +
                         std::to_string(o.mot_feature.size()) + ") do not match the bundle (" +
                         std::to_string(b.d_app) + ", " + std::to_string(b.d_mot) + ")");
    }
  }

  ScoreSeries out;
  out.video_id = video.video_id;
  const std::size_t n = objects.size();
  std::vector<double> s_app(n, 0.0), s_mot(n, 0.0);
  if (n > 0) {
    if (opt.use_app) {
      s_app = knn_score_batch(app_index_, stack_features(objects, Modality::App, b.d_app), opt.k,
                              opt.exclude_exact);
    }
    if (opt.use_mot) {
      s_mot = knn_score_batch(mot_index_, stack_features(objects, Modality::Mot, b.d_mot), opt.k,
                              opt.exclude_exact);
    }
  }

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  out.raw.assign(video.frame_count, kNone);
  for (std::size_t i = 0; i < n; ++i) {
    double c = 0.0;
    if (opt.use_app) c += normalize_score(s_app[i], b.app_stats);
    if (opt.use_mot) c += normalize_score(s_mot[i], b.mot_stats);
    auto& slot = out.raw[objects[i].frame_idx];
    slot = std::max(slot, c);
    if (opt.keep_object_detail) {
      out.objects.push_back({objects[i].frame_idx, objects[i].object_idx, s_app[i], s_mot[i], c});
    }
  }
  // Empty frames take the lowest observed frame score of the video.
  double floor_score = std::numeric_limits<double>::infinity();
  for (double v : out.raw) {
    if (v != kNone) floor_score = std::min(floor_score, v);
  }
  if (!std::isfinite(floor_score)) floor_score = 0.0;
  for (double& v : out.raw) {
    if (v == kNone) v = floor_score;
  }
  out.smoothed = out.raw.empty() ? std::vector<double>{} : gaussian_smooth(out.raw, opt.sigma);
  return out;
}

std::vector<ScoreSeries> BundleScorer::score_manifest(const DatasetManifest& manifest,
                                                      const InferOptions& opt) const {
  std::unordered_map<std::string, std::vector<ObjectRecord>> by_video;
  for (const auto& o : manifest.objects) by_video[o.video_id].push_back(o);
  std::vector<ScoreSeries> out;
  out.reserve(manifest.videos.size());
  static const std::vector<ObjectRecord> kEmpty;
  for (const auto& v : manifest.videos) {
    auto it = by_video.find(v.video_id);
    out.push_back(score_video(v, it == by_video.end() ? kEmpty : it->second, opt));
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("sigma must be positive");
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> w(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (std::ptrdiff_t j = -r; j <= r; ++j) {
    const double v = std::exp(-0.5 * static_cast<double>(j * j) / (sigma * sigma));
    w[static_cast<std::size_t>(j + r)] = v;
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> gaussian_smooth(std::span<const double> x, double sigma) {
  if (x.empty()) throw InvalidInput("cannot smooth an empty series");
  const auto w = gaussian_kernel(sigma);
  const auto r = static_cast<std::ptrdiff_t>(w.size() / 2);
  const auto t_len = static_cast<std::ptrdiff_t>(x.size());
  auto at = [&](std::ptrdiff_t i) {
    const std::ptrdiff_t period = 2 * t_len;
    i %= period;
    if (i < 0) i += period;
    if (i >= t_len) i = period - 1 - i;
    return x[static_cast<std::size_t>(i)];
  };
  std::vector<double> y(x.size());
  for (std::ptrdiff_t t = 0; t < t_len; ++t) {
    // Accumulate deviations from the centre sample so a constant input is
    // reproduced bit for bit.
    const double c = x[static_cast<std::size_t>(t)];
    double acc = 0.0;
    for (std::ptrdiff_t j = -r; j <= r; ++j) {
      acc += w[static_cast<std::size_t>(j + r)] * (at(t + j) - c);
    }
    y[static_cast<std::size_t>(t)] = c + acc;
  }
  return y;
}

}  // namespace cknn
