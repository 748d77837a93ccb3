// Frame scoring: per-object kNN distances against both banks, z-normalised
// with the bundle's frozen training statistics, summed, max-pooled per frame
// and smoothed over time with a Gaussian kernel.

#pragma once

#include "cknn/bank_search.hpp"
#include "cknn/io.hpp"

#include <span>
#include <string>
#include <vector>

namespace cknn {

struct ObjectScore {
  std::uint32_t frame_idx = 0;
  std::uint32_t object_idx = 0;
  double s_app = 0.0;  // raw kNN distances
  double s_mot = 0.0;
  double combined = 0.0;  // sum of the normalised scores of the enabled modalities
};

struct ScoreSeries {
  std::string video_id;
  std::vector<double> raw;       // one per frame, before smoothing
  std::vector<double> smoothed;  // one per frame
  std::vector<ObjectScore> objects;  // filled when detail is requested
};

struct InferOptions {
  std::size_t k = 4;
  double sigma = 5.0;
  bool exclude_exact = true;
  bool use_app = true;
  bool use_mot = true;
  bool keep_object_detail = false;

  static InferOptions from(const Hyperparams& hp);
};

// Normalised contribution of one modality: (s - mean) / std, or s - mean when
// the statistics are degenerate.
double normalize_score(double s, const ScoreStats& stats);

// Owns the search indices over a bundle's banks. The bundle must outlive it.
class BundleScorer {
 public:
  explicit BundleScorer(const ModelBundle& bundle);

  const ModelBundle& bundle() const { return *bundle_; }

  // Objects may come in any order; each must belong to `video`.
  ScoreSeries score_video(const VideoInfo& video, std::span<const ObjectRecord> objects,
                          const InferOptions& options) const;

  // Every video in the manifest, in manifest order.
  std::vector<ScoreSeries> score_manifest(const DatasetManifest& manifest,
                                          const InferOptions& options) const;

 private:
  const ModelBundle* bundle_;
  SearchIndex app_index_;
  SearchIndex mot_index_;
};

// Normalised kernel exp(-j^2 / (2 sigma^2)) for j in [-r, r], r = ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

// Convolution with gaussian_kernel(sigma) under whole-sample symmetric
// ("reflect": d c b a | a b c d | d c b a) boundary extension.
std::vector<double> gaussian_smooth(std::span<const double> series, double sigma);

}  // namespace cknn
