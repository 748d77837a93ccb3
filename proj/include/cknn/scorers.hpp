// Pseudo-anomaly scorers used to decide which training objects to discard.
// Both backends follow the "higher = more anomalous" convention.

#pragma once

#include "cknn/core.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace cknn {

struct GmmFitInfo {
  int iterations = 0;
  double log_likelihood = 0.0;           // total over the training rows
  std::vector<double> log_likelihood_trace;  // one entry per E-step
  int reseeds = 0;
};

/// Full-covariance Gaussian mixture. Immutable once constructed; the Cholesky
/// factors used for scoring are computed by the constructor.
class GmmModel {
 public:
  using FitInfo = GmmFitInfo;

  GmmModel() = default;
  GmmModel(std::vector<double> weights, Eigen::MatrixXd means,
           std::vector<Eigen::MatrixXd> covariances, FitInfo info = {});

  std::size_t components() const { return weights_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(means_.cols()); }
  const std::vector<double>& weights() const { return weights_; }
  const Eigen::MatrixXd& means() const { return means_; }
  const std::vector<Eigen::MatrixXd>& covariances() const { return covariances_; }
  const FitInfo& info() const { return info_; }

  // log w_j + log N(x; mu_j, Sigma_j) for every component.
  void component_log_densities(std::span<const double> x, std::vector<double>& out) const;

  bool operator==(const GmmModel& o) const;

 private:
  std::vector<double> weights_;
  Eigen::MatrixXd means_;
  std::vector<Eigen::MatrixXd> covariances_;
  FitInfo info_;
  std::vector<Eigen::MatrixXd> chol_;  // lower factors
  std::vector<double> log_norm_;       // log w_j - d/2 log 2pi - 1/2 log|Sigma_j|
};

struct GmmFitOptions {
  int max_iterations = 200;
  double tolerance = 1e-6;  // relative log-likelihood improvement
  double reg_eps = 1e-6;    // added to covariance diagonals every M-step
  int max_reseeds = 3;
  int kmeans_iterations = 10;
  double collapse_weight = 1e-12;
};

GmmModel gmm_fit(const FeatureMatrix& x, std::size_t n_components, std::uint64_t seed,
                 const GmmFitOptions& options = {});

// -log sum_j w_j N(x; mu_j, Sigma_j), evaluated with log-sum-exp.
double gmm_score(const GmmModel& model, std::span<const double> x);
std::vector<double> gmm_score_all(const GmmModel& model, const FeatureMatrix& x);

// Leave-self-out kNN: mean distance from each row to its k nearest rows of the
// (optionally subsampled) reference set, skipping at most one exact match.
std::vector<double> knn_pseudo_score_all(const FeatureMatrix& x, std::size_t k,
                                         double reference_subsample_percent,
                                         std::uint64_t seed);

struct PseudoScorerConfig {
  enum class Backend { Gmm, Knn };

  Backend backend = Backend::Gmm;
  Modality modality = Modality::App;
  std::size_t n_components = 8;                // gmm
  std::size_t k = 4;                           // knn
  double reference_subsample_percent = 100.0;  // knn

  static PseudoScorerConfig gmm(Modality m, std::size_t n);
  static PseudoScorerConfig knn(Modality m, std::size_t k, double subsample_percent = 100.0);

  // "gmm:8" or "knn:4:100"
  std::string describe() const;
  static PseudoScorerConfig parse(Modality m, std::string_view text);

  bool operator==(const PseudoScorerConfig&) const = default;
};

struct PseudoScores {
  std::vector<double> scores;
  std::optional<GmmModel> gmm;  // set for the gmm backend
};

PseudoScores pseudo_score(const PseudoScorerConfig& config, const FeatureMatrix& x,
                          std::uint64_t seed);

}  // namespace cknn
