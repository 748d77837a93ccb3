// Training-set cleansing and feature-bank construction.
//
// Each modality is cleansed independently: its pseudo-anomaly scores decide
// which objects are dropped, the survivors form a bank in manifest order, and
// the bank is then compressed to p percent of its rows.

#pragma once

#include "cknn/core.hpp"
#include "cknn/scorers.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cknn {

enum class Compression { Random, Coreset };

std::string_view to_string(Compression c);
Compression parse_compression(std::string_view s);

struct BankMetadata {
  double tau = 0.0;
  double p = 100.0;
  std::string scorer;  // PseudoScorerConfig::describe()
  std::uint64_t seed = 0;
  Compression compression = Compression::Random;
  std::size_t source_objects = 0;  // objects before cleansing
  std::size_t removed = 0;         // objects dropped by cleansing

  bool operator==(const BankMetadata&) const = default;
};

struct FeatureBank {
  Modality modality = Modality::App;
  FeatureMatrix matrix;
  std::vector<ObjectKey> provenance;  // one per matrix row
  BankMetadata meta;

  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(matrix.cols()); }
  void validate() const;
  bool operator==(const FeatureBank& o) const;
};

// Mean and population standard deviation of the leave-self-out kNN scores of
// a bank's rows against the bank itself.
struct ScoreStats {
  double mean = 0.0;
  double stddev = 0.0;
  bool degenerate = false;  // stddev below kDegenerateStd

  bool operator==(const ScoreStats&) const = default;
};

inline constexpr double kDegenerateStd = 1e-12;

ScoreStats bank_score_stats(const FeatureBank& bank, std::size_t k);

// Number of rows kept when compressing m rows to p percent (at least one).
std::size_t compressed_size(std::size_t m, double p);

// Uniform sampling without replacement; kept rows stay in bank order.
FeatureBank random_compress(const FeatureBank& bank, double p, std::uint64_t seed);

// Greedy farthest-point order: first_row, then repeatedly the row farthest
// from everything selected so far (lowest index on ties).
std::vector<std::size_t> coreset_select(const FeatureMatrix& x, std::size_t count,
                                        std::size_t first_row);

// Greedy farthest-point (k-center) selection. The first row is drawn from the
// seed; rows are returned in selection order.
FeatureBank coreset_compress(const FeatureBank& bank, double p, std::uint64_t seed);

struct CleanseConfig {
  Hyperparams hyperparams;
  PseudoScorerConfig app_scorer = PseudoScorerConfig::gmm(Modality::App, 8);
  PseudoScorerConfig mot_scorer = PseudoScorerConfig::gmm(Modality::Mot, 8);
  Compression compression = Compression::Random;
};

struct ModalityBuild {
  FeatureBank bank;
  ScoreStats stats;
  std::vector<double> pseudo_scores;  // empty when tau == 0 (nothing to rank)
  std::vector<std::size_t> removed;   // indices into TrainingView::objects
  std::optional<GmmModel> gmm;
};

struct CleanseResult {
  ModalityBuild app;
  ModalityBuild mot;
};

// Full build: cleanse each modality, then compress and compute stats.
CleanseResult cleanse_and_build(const TrainingView& view, const CleanseConfig& config);

// The two halves of the build, for callers that compress one cleansed bank at
// several p values.
struct CleansedModality {
  FeatureBank bank;  // retained objects in view order, uncompressed
  std::vector<double> pseudo_scores;
  std::vector<std::size_t> removed;
  std::optional<GmmModel> gmm;
};

// Throws InvalidInput unless the view can support k and n_components.
void check_training_size(const TrainingView& view, const Hyperparams& hp);
CleansedModality cleanse_modality(const TrainingView& view, Modality modality,
                                  const PseudoScorerConfig& scorer, const CleanseConfig& config);
// Uses config.hyperparams.p/k/seed and config.compression only.
ModalityBuild finalize_modality(const CleansedModality& cleansed, const CleanseConfig& config);

struct TauSuggestion {
  std::vector<std::size_t> histogram;  // 100 bins over [lo, hi]
  double lo = 0.0;
  double hi = 0.0;
  std::size_t modal_bin = 0;
  std::size_t tail_bin = 0;  // first bin at or past the mode under 1% of its count
  double tau_star = 0.0;     // percent of scores at or beyond the tail bin
  bool degenerate = false;   // all scores equal
};

inline constexpr std::size_t kTauHistogramBins = 100;

// Advisory only: locates where the long tail of the pseudo-score histogram
// starts and reports the share of objects in that tail as a tau suggestion.
TauSuggestion suggest_tau(std::span<const double> pseudo_scores);

}  // namespace cknn
