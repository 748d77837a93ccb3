#include "cknn/cleanse.hpp"

#include "cknn/bank_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cknn {

std::string_view to_string(Compression c) {
  return c == Compression::Random ? "random" : "coreset";
}

Compression parse_compression(std::string_view s) {
  if (s == "random") return Compression::Random;
  if (s == "coreset") return Compression::Coreset;
  throw InvalidInput("unknown compression '" + std::string(s) + "' (expected random|coreset)");
}

void FeatureBank::validate() const {
  if (matrix.rows() < 1) throw BuildError(std::string(to_string(modality)) + " bank is empty");
  if (provenance.size() != size()) {
    throw InvalidInput(std::string(to_string(modality)) + " bank has " +
                       std::to_string(provenance.size()) + " provenance entries for " +
                       std::to_string(size()) + " rows");
  }
  if (!matrix.allFinite()) {
    throw InvalidInput(std::string(to_string(modality)) + " bank contains non-finite values");
  }
}

bool FeatureBank::operator==(const FeatureBank& o) const {
  return modality == o.modality && matrix.rows() == o.matrix.rows() &&
         matrix.cols() == o.matrix.cols() && matrix == o.matrix && provenance == o.provenance &&
         meta == o.meta;
}

ScoreStats bank_score_stats(const FeatureBank& bank, std::size_t k) {
  if (k == 0) throw InvalidInput("k must be positive");
  const std::size_t m = bank.size();
  if (m == 0) throw BuildError("cannot compute score statistics of an empty bank");
  if (m == 1) return {0.0, 0.0, true};
  SearchIndex index(bank.matrix);
  auto scores = knn_score_batch(index, bank.matrix, std::min(k, m - 1), true);
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / static_cast<double>(m));
  return {mean, sd, sd < kDegenerateStd};
}

std::size_t compressed_size(std::size_t m, double p) {
  if (!(p > 0.0 && p <= 100.0)) throw InvalidInput("p must lie in (0, 100]");
  auto kept = static_cast<std::size_t>(std::floor(p * static_cast<double>(m) / 100.0 + 1e-9));
  return std::clamp<std::size_t>(kept, 1, std::max<std::size_t>(m, 1));
}

namespace {

FeatureBank take_rows(const FeatureBank& bank, const std::vector<std::size_t>& rows) {
  FeatureBank out;
  out.modality = bank.modality;
  out.meta = bank.meta;
  out.matrix.resize(static_cast<Eigen::Index>(rows.size()), bank.matrix.cols());
  out.provenance.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.matrix.row(static_cast<Eigen::Index>(i)) = bank.matrix.row(static_cast<Eigen::Index>(rows[i]));
    out.provenance.push_back(bank.provenance[rows[i]]);
  }
  return out;
}

}  // namespace

FeatureBank random_compress(const FeatureBank& bank, double p, std::uint64_t seed) {
  if (bank.size() == 0) throw BuildError("cannot compress an empty bank");
  const std::size_t m = compressed_size(bank.size(), p);
  auto rows = Rng(seed).split("random-compress").sample_without_replacement(bank.size(), m);
  FeatureBank out = take_rows(bank, rows);
  out.meta.p = p;
  out.meta.compression = Compression::Random;
  return out;
}

std::vector<std::size_t> coreset_select(const FeatureMatrix& x, std::size_t count,
                                        std::size_t first_row) {
  const auto m = static_cast<std::size_t>(x.rows());
  if (first_row >= m) throw InvalidInput("coreset first row out of range");
  count = std::min(count, m);
  std::vector<std::size_t> picked{first_row};
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::size_t last = first_row;
  while (picked.size() < count) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d2 = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(last))).squaredNorm();
      nearest[i] = std::min(nearest[i], d2);
      if (nearest[i] > best) {
        best = nearest[i];
        arg = i;
      }
    }
    picked.push_back(arg);
    last = arg;
  }
  return picked;
}

FeatureBank coreset_compress(const FeatureBank& bank, double p, std::uint64_t seed) {
  if (bank.size() == 0) throw BuildError("cannot compress an empty bank");
  const std::size_t m = compressed_size(bank.size(), p);
  const auto first = static_cast<std::size_t>(Rng(seed).split("coreset").below(bank.size()));
  FeatureBank out = take_rows(bank, coreset_select(bank.matrix, m, first));
  out.meta.p = p;
  out.meta.compression = Compression::Coreset;
  return out;
}

CleansedModality cleanse_modality(const TrainingView& view, Modality modality,
                                  const PseudoScorerConfig& scorer, const CleanseConfig& config) {
  const auto& hp = config.hyperparams;
  const std::size_t n = view.objects.size();
  FeatureMatrix x = stack_features(view.objects, modality, view.dim(modality));

  CleansedModality out;
  if (removal_count(n, hp.tau) > 0) {
    PseudoScores ps = pseudo_score(scorer, x, mix_seed(hp.seed, "pseudo-score"));
    out.pseudo_scores = std::move(ps.scores);
    out.gmm = std::move(ps.gmm);
    out.removed = select_top_fraction(out.pseudo_scores, hp.tau);
  }

  auto& bank = out.bank;
  bank.modality = modality;
  bank.meta = {hp.tau, 100.0, scorer.describe(), hp.seed, config.compression, n,
               out.removed.size()};
  const std::size_t kept = n - out.removed.size();
  if (kept == 0) {
    throw BuildError(std::string(to_string(modality)) + " bank is empty after removing " +
                     std::to_string(out.removed.size()) + " of " + std::to_string(n) +
                     " objects; use a smaller tau or a larger p");
  }
  bank.matrix.resize(static_cast<Eigen::Index>(kept), x.cols());
  bank.provenance.reserve(kept);
  std::size_t next_removed = 0;
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (next_removed < out.removed.size() && out.removed[next_removed] == i) {
      ++next_removed;
      continue;
    }
    bank.matrix.row(r++) = x.row(static_cast<Eigen::Index>(i));
    bank.provenance.push_back(view.objects[i].key());
  }
  return out;
}

ModalityBuild finalize_modality(const CleansedModality& cleansed, const CleanseConfig& config) {
  const auto& hp = config.hyperparams;
  const Modality modality = cleansed.bank.modality;
  const std::uint64_t compress_seed =
      mix_seed(hp.seed, std::string("compress-") + std::string(to_string(modality)));
  ModalityBuild out;
  if (config.compression == Compression::Coreset) {
    out.bank = coreset_compress(cleansed.bank, hp.p, compress_seed);
  } else if (hp.p < 100.0) {
    out.bank = random_compress(cleansed.bank, hp.p, compress_seed);
  } else {
    out.bank = cleansed.bank;
  }
  out.bank.meta.p = hp.p;
  out.bank.meta.compression = config.compression;
  out.bank.validate();
  out.stats = bank_score_stats(out.bank, hp.k);
  out.pseudo_scores = cleansed.pseudo_scores;
  out.removed = cleansed.removed;
  out.gmm = cleansed.gmm;
  return out;
}

void check_training_size(const TrainingView& view, const Hyperparams& hp) {
  hp.validate();
  if (view.d_app == 0 || view.d_mot == 0) throw InvalidInput("training view has zero feature dims");
  const std::size_t need = std::max(hp.k + 1, hp.n_components);
  if (view.objects.size() < need) {
    throw InvalidInput("training needs at least " + std::to_string(need) + " objects, got " +
                       std::to_string(view.objects.size()));
  }
}

CleanseResult cleanse_and_build(const TrainingView& view, const CleanseConfig& config) {
  check_training_size(view, config.hyperparams);
  CleanseResult res;
  res.app = finalize_modality(cleanse_modality(view, Modality::App, config.app_scorer, config), config);
  res.mot = finalize_modality(cleanse_modality(view, Modality::Mot, config.mot_scorer, config), config);
  return res;
}

// ---------------------------------------------------------------------------

TauSuggestion suggest_tau(std::span<const double> scores) {
  if (scores.size() < 100) {
    throw InvalidInput("suggest_tau needs at least 100 scores, got " + std::to_string(scores.size()));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidInput("suggest_tau received a non-finite score");
  }
  TauSuggestion out;
  out.histogram.assign(kTauHistogramBins, 0);
  auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  out.lo = *mn;
  out.hi = *mx;
  if (out.hi == out.lo) {
    out.histogram[0] = scores.size();
    out.degenerate = true;
    out.tail_bin = kTauHistogramBins;
    return out;
  }
  const double width = (out.hi - out.lo) / static_cast<double>(kTauHistogramBins);
  for (double s : scores) {
    auto b = static_cast<std::size_t>((s - out.lo) / width);
    out.histogram[std::min(b, kTauHistogramBins - 1)]++;
  }
  out.modal_bin = static_cast<std::size_t>(
      std::max_element(out.histogram.begin(), out.histogram.end()) - out.histogram.begin());
  const double cutoff = 0.01 * static_cast<double>(out.histogram[out.modal_bin]);
  out.tail_bin = kTauHistogramBins;
  for (std::size_t b = out.modal_bin; b < kTauHistogramBins; ++b) {
    if (static_cast<double>(out.histogram[b]) < cutoff) {
      out.tail_bin = b;
      break;
    }
  }
  std::size_t tail = 0;
  for (std::size_t b = out.tail_bin; b < kTauHistogramBins; ++b) tail += out.histogram[b];
  out.tau_star = 100.0 * static_cast<double>(tail) / static_cast<double>(scores.size());
  return out;
}

}  // namespace cknn
