#include "cknn/scorers.hpp"

#include "cknn/bank_search.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace cknn {

std::vector<double> knn_pseudo_score_all(const FeatureMatrix& x, std::size_t k,
                                         double reference_subsample_percent,
                                         std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k == 0) throw InvalidInput("k must be positive");
  if (n <= k) {
    throw InvalidInput("kNN pseudo-scoring needs more than k=" + std::to_string(k) +
                       " rows, got " + std::to_string(n));
  }
  if (!(reference_subsample_percent > 0.0 && reference_subsample_percent <= 100.0)) {
    throw InvalidInput("reference subsample percent must lie in (0, 100]");
  }
  if (reference_subsample_percent >= 100.0) {
    SearchIndex index(x);
    return knn_score_batch(index, x, k, true);
  }
  auto m = static_cast<std::size_t>(
      std::ceil(reference_subsample_percent / 100.0 * static_cast<double>(n)));
  m = std::clamp(m, k + 1, n);
  auto rows = Rng(seed).split("knn-reference").sample_without_replacement(n, m);
  FeatureMatrix ref(static_cast<Eigen::Index>(m), x.cols());
  for (std::size_t i = 0; i < m; ++i) ref.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  SearchIndex index(ref);
  return knn_score_batch(index, x, k, true);
}

PseudoScorerConfig PseudoScorerConfig::gmm(Modality m, std::size_t n) {
  PseudoScorerConfig c;
  c.backend = Backend::Gmm;
  c.modality = m;
  c.n_components = n;
  return c;
}

PseudoScorerConfig PseudoScorerConfig::knn(Modality m, std::size_t k, double subsample_percent) {
  PseudoScorerConfig c;
  c.backend = Backend::Knn;
  c.modality = m;
  c.k = k;
  c.reference_subsample_percent = subsample_percent;
  return c;
}

std::string PseudoScorerConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (backend == Backend::Gmm) {
    os << "gmm:" << n_components;
  } else {
    os << "knn:" << k << ':' << reference_subsample_percent;
  }
  return os.str();
}

namespace {

std::vector<std::string_view> split_colon(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(':', start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_count(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) {
    throw InvalidInput("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

PseudoScorerConfig PseudoScorerConfig::parse(Modality m, std::string_view text) {
  auto parts = split_colon(text);
  if (parts[0] == "gmm" && parts.size() <= 2) {
    return gmm(m, parts.size() == 2 ? parse_count(parts[1], "component count") : 8);
  }
  if (parts[0] == "knn" && parts.size() <= 3) {
    std::size_t k = parts.size() >= 2 ? parse_count(parts[1], "k") : 4;
    double pct = 100.0;
    if (parts.size() == 3) {
      try {
        pct = std::stod(std::string(parts[2]));
      } catch (const std::exception&) {
        throw InvalidInput("bad subsample percent '" + std::string(parts[2]) + "'");
      }
    }
    return knn(m, k, pct);
  }
  throw InvalidInput("unknown scorer '" + std::string(text) + "' (expected gmm[:n] or knn[:k[:pct]])");
}

PseudoScores pseudo_score(const PseudoScorerConfig& config, const FeatureMatrix& x,
                          std::uint64_t seed) {
  PseudoScores out;
  const std::uint64_t s = mix_seed(seed, to_string(config.modality));
  if (config.backend == PseudoScorerConfig::Backend::Gmm) {
    out.gmm = gmm_fit(x, config.n_components, s);
    out.scores = gmm_score_all(*out.gmm, x);
  } else {
    out.scores = knn_pseudo_score_all(x, config.k, config.reference_subsample_percent, s);
  }
  return out;
}

}  // namespace cknn
