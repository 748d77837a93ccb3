// Slow, obviously-correct reference implementations used as test oracles, and
// random fixture builders shared by the test binaries.
#pragma once

#include "cknn/core.hpp"
#include "cknn/io.hpp"
#include "cknn/scorers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows to_rows(const cknn::FeatureMatrix& m) {
  Rows r(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) r[i][j] = m(i, j);
  }
  return r;
}

inline cknn::FeatureMatrix to_matrix(const Rows& r) {
  cknn::FeatureMatrix m(static_cast<Eigen::Index>(r.size()),
                        r.empty() ? 0 : static_cast<Eigen::Index>(r[0].size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < r[i].size(); ++j) m(i, j) = r[i][j];
  }
  return m;
}

inline double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Sort every distance, drop one exact match if asked, average the first k.
inline double knn_score(const Rows& bank, const std::vector<double>& q, std::size_t k,
                        bool exclude_exact) {
  std::vector<double> d;
  for (const auto& b : bank) d.push_back(l2(q, b));
  std::sort(d.begin(), d.end());
  std::size_t start = (exclude_exact && !d.empty() && d[0] <= 1e-12) ? 1 : 0;
  double s = 0;
  for (std::size_t i = start; i < start + k; ++i) s += d.at(i);
  return s / static_cast<double>(k);
}

// Counts every (positive, negative) pair.
inline double auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      if (s[i] > s[j]) wins += 1;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Pads with mirrored samples explicitly, then convolves directly.
inline std::vector<double> smooth(const std::vector<double>& x, double sigma) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> w;
  for (int j = -r; j <= r; ++j) w.push_back(std::exp(-(j * j) / (2 * sigma * sigma)));
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  const int n = static_cast<int>(x.size());
  // sequence ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2} ...
  std::vector<double> ext;
  auto mirror = [&](int i) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return x[i];
  };
  for (int i = -r; i < n + r; ++i) ext.push_back(mirror(i));
  std::vector<double> y(n, 0.0);
  for (int t = 0; t < n; ++t) {
    for (int j = 0; j < 2 * r + 1; ++j) y[t] += w[j] * ext[t + j];
  }
  return y;
}

// -log sum_j w_j N(x; mu_j, S_j) with an explicit inverse and determinant.
inline double gmm_nll(const std::vector<double>& weights, const Eigen::MatrixXd& means,
                      const std::vector<Eigen::MatrixXd>& covs, const std::vector<double>& x) {
  const auto d = means.cols();
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), d);
  double dens = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    Eigen::VectorXd diff = xv - means.row(j).transpose();
    const double q = diff.dot(covs[j].inverse() * diff);
    dens += weights[j] * std::exp(-0.5 * q) /
            std::sqrt(std::pow(2 * std::numbers::pi, static_cast<double>(d)) * covs[j].determinant());
  }
  return -std::log(dens);
}

// Stable sort by descending score, later index first among ties.
inline std::vector<std::size_t> top_fraction(const std::vector<double>& s, double tau) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return s[a] != s[b] ? s[a] > s[b] : a > b;
  });
  const auto n = static_cast<std::size_t>(std::floor(tau * static_cast<double>(s.size()) / 100.0 + 1e-9));
  std::vector<std::size_t> out(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(out.begin(), out.end());
  return out;
}

inline Rows random_rows(std::mt19937_64& g, std::size_t n, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Rows r(n, std::vector<double>(d));
  for (auto& row : r) {
    for (auto& v : row) v = nd(g);
  }
  return r;
}

// Random valid manifest; features are float so every encoding is exact.
inline cknn::DatasetManifest random_manifest(std::mt19937_64& g, bool labelled,
                                             std::uint32_t d_app = 0, std::uint32_t d_mot = 0) {
  std::uniform_int_distribution<int> small(1, 6);
  std::uniform_real_distribution<float> uf(-100.f, 100.f);
  cknn::DatasetManifest m;
  m.d_app = d_app ? d_app : static_cast<std::uint32_t>(small(g));
  m.d_mot = d_mot ? d_mot : static_cast<std::uint32_t>(small(g));
  const int videos = small(g);
  for (int v = 0; v < videos; ++v) {
    cknn::VideoInfo info;
    info.video_id = "vid_" + std::to_string(v) + (v % 2 ? "_\xc3\xa9" : "");
    info.frame_count = static_cast<std::uint32_t>(small(g) * 3);
    if (labelled) {
      std::vector<std::uint8_t> l(info.frame_count);
      for (auto& x : l) x = static_cast<std::uint8_t>(g() & 1);
      info.labels = l;
    }
    for (std::uint32_t f = 0; f < info.frame_count; ++f) {
      const int objs = static_cast<int>(g() % 3);
      for (int o = 0; o < objs; ++o) {
        cknn::ObjectRecord r;
        r.video_id = info.video_id;
        r.frame_idx = f;
        r.object_idx = static_cast<std::uint32_t>(o);
        if (g() & 1) r.bbox = cknn::BoundingBox{uf(g), uf(g), uf(g), uf(g)};
        for (std::uint32_t i = 0; i < m.d_app; ++i) r.app_feature.push_back(uf(g));
        for (std::uint32_t i = 0; i < m.d_mot; ++i) r.mot_feature.push_back(uf(g));
        m.objects.push_back(std::move(r));
      }
    }
    m.videos.push_back(std::move(info));
  }
  return m;
}

// Random valid bundle; banks hold float-exact values so blobs round-trip.
inline cknn::FeatureBank random_bank(std::mt19937_64& g, cknn::Modality m, std::size_t rows, std::size_t d) {
  std::normal_distribution<float> nd;
  cknn::FeatureBank b;
  b.modality = m;
  b.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < b.matrix.size(); ++i) b.matrix.data()[i] = nd(g);
  for (std::size_t i = 0; i < rows; ++i) {
    b.provenance.push_back({"video_" + std::to_string(g() % 4), static_cast<std::uint32_t>(i),
                            static_cast<std::uint32_t>(g() % 3)});
  }
  b.meta = {25.0, 10.0, "gmm:2", g(), cknn::Compression::Random, rows * 3, rows};
  return b;
}

inline cknn::ModelBundle random_bundle(std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.1, 3.0);
  cknn::ModelBundle b;
  b.hyperparams.k = 1 + g() % 5;
  b.hyperparams.tau = u(g) * 10;
  b.hyperparams.p = u(g);
  b.hyperparams.seed = g();
  b.hyperparams.smoothing_sigma = u(g);
  b.d_app = 1 + g() % 6;
  b.d_mot = 1 + g() % 4;
  b.app_scorer = cknn::PseudoScorerConfig::gmm(cknn::Modality::App, 2);
  b.mot_scorer = cknn::PseudoScorerConfig::knn(cknn::Modality::Mot, 3, 50);
  b.app_bank = random_bank(g, cknn::Modality::App, 1 + g() % 40, b.d_app);
  b.mot_bank = random_bank(g, cknn::Modality::Mot, 1 + g() % 40, b.d_mot);
  b.app_stats = {u(g), u(g), false};
  b.mot_stats = {u(g), 0.0, true};
  if (g() % 2) {
    Eigen::MatrixXd means = Eigen::MatrixXd::Random(2, b.d_app);
    std::vector<Eigen::MatrixXd> covs(2, Eigen::MatrixXd::Identity(b.d_app, b.d_app) * u(g));
    cknn::GmmFitInfo info{7, -u(g) * 100, {-300.0, -200.0, -150.5}, 1};
    b.app_gmm = cknn::GmmModel({0.25, 0.75}, means, covs, info);
  }
  return b;
}


}  // namespace oracle
