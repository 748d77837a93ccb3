// Domain types, error classes, deterministic RNG and rank selection shared by
// every cknn module.

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cknn {

// Row-major so that a bank row is contiguous and can be viewed as a span.
using FeatureMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const FeatureMatrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind {
  InvalidInput,     // caller passed something that violates a precondition
  Parse,            // malformed file or bundle
  Build,            // cleansing/compression produced an unusable bank
  Compute,          // numerical failure (e.g. GMM collapse)
  UndefinedMetric,  // AUROC on single-class labels
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what)
      : Error(ErrorKind::InvalidInput, what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorKind::Parse, what) {}
};

class BuildError : public Error {
 public:
  explicit BuildError(const std::string& what) : Error(ErrorKind::Build, what) {}
};

class ComputeError : public Error {
 public:
  explicit ComputeError(const std::string& what)
      : Error(ErrorKind::Compute, what) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what)
      : Error(ErrorKind::UndefinedMetric, what) {}
};

// ---------------------------------------------------------------------------
// Modalities

enum class Modality : std::uint32_t { App = 0, Mot = 1 };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

// ---------------------------------------------------------------------------
// Dataset records

struct BoundingBox {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const BoundingBox&) const = default;
};

// Identifies an object within a manifest; also used as bank provenance.
struct ObjectKey {
  std::string video_id;
  std::uint32_t frame_idx = 0;
  std::uint32_t object_idx = 0;
  auto operator<=>(const ObjectKey&) const = default;
};

struct ObjectRecord {
  std::string video_id;
  std::uint32_t frame_idx = 0;
  std::uint32_t object_idx = 0;  // order within the frame
  std::optional<BoundingBox> bbox;
  std::vector<float> app_feature;
  std::vector<float> mot_feature;

  ObjectKey key() const { return {video_id, frame_idx, object_idx}; }
  const std::vector<float>& feature(Modality m) const {
    return m == Modality::App ? app_feature : mot_feature;
  }
  bool operator==(const ObjectRecord&) const = default;
};

struct VideoInfo {
  std::string video_id;
  std::uint32_t frame_count = 0;
  std::optional<std::vector<std::uint8_t>> labels;  // one {0,1} per frame
  bool operator==(const VideoInfo&) const = default;
};

struct TrainingVideo {
  std::string video_id;
  std::uint32_t frame_count = 0;
};

// The only input the cleansing stage sees. It has no label field, so label
// leakage into training is impossible by construction.
struct TrainingView {
  std::uint32_t d_app = 0;
  std::uint32_t d_mot = 0;
  std::vector<TrainingVideo> videos;
  std::vector<ObjectRecord> objects;

  std::uint32_t dim(Modality m) const { return m == Modality::App ? d_app : d_mot; }
};

struct DatasetManifest {
  std::uint32_t d_app = 0;
  std::uint32_t d_mot = 0;
  std::vector<VideoInfo> videos;
  std::vector<ObjectRecord> objects;

  // Throws InvalidInput describing the first violated invariant.
  void validate() const;
  bool has_labels() const;
  const VideoInfo* find_video(std::string_view id) const;
  // Same videos and objects with labels stripped.
  TrainingView training_view() const;

  bool operator==(const DatasetManifest&) const = default;
};

// Stacks one modality of the given records into an N x d double matrix.
FeatureMatrix stack_features(std::span<const ObjectRecord> objects, Modality m,
                             std::size_t dim);

// ---------------------------------------------------------------------------
// Hyperparameters

struct Hyperparams {
  std::size_t k = 4;
  std::size_t n_components = 8;
  double tau = 25.0;             // percent of objects removed per modality
  double p = 1.0;                // percent of cleansed objects kept in the bank
  double smoothing_sigma = 5.0;  // frames
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. Streams for different purposes are derived from the root
// seed and a purpose label, never from the parent's consumption state, so
// adding draws to one stage does not perturb another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::string_view purpose) const;
  std::uint64_t seed() const { return seed_; }

  std::mt19937_64& engine() { return engine_; }
  double uniform();                  // [0, 1)
  double normal();                   // N(0, 1)
  std::uint64_t below(std::uint64_t n);  // uniform in [0, n)
  std::uint64_t poisson(double mean);
  std::uint64_t geometric(double mean);  // support {1, 2, ...}, given mean >= 1

  // m distinct indices from [0, n), returned in increasing order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t m);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view purpose);

// ---------------------------------------------------------------------------
// Rank selection

// floor(tau / 100 * n), the number of items removed by select_top_fraction.
std::size_t removal_count(std::size_t n, double tau);

// Indices of the floor(tau/100 * N) highest scores, returned ascending. Among
// equal scores the later index is removed first.
std::vector<std::size_t> select_top_fraction(std::span<const double> scores,
                                             double tau);

}  // namespace cknn
