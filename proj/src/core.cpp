#include "cknn/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace cknn {

std::string_view to_string(Modality m) {
  return m == Modality::App ? "app" : "mot";
}

Modality parse_modality(std::string_view s) {
  if (s == "app") return Modality::App;
  if (s == "mot") return Modality::Mot;
  throw InvalidInput("unknown modality '" + std::string(s) + "' (expected app|mot)");
}

// ---------------------------------------------------------------------------

void DatasetManifest::validate() const {
  if (d_app == 0 || d_mot == 0) {
    throw InvalidInput("feature dimensions must be positive (d_app=" +
                       std::to_string(d_app) + ", d_mot=" + std::to_string(d_mot) + ")");
  }
  std::unordered_map<std::string, std::uint32_t> frames;
  std::size_t labelled = 0;
  for (const auto& v : videos) {
    if (!frames.emplace(v.video_id, v.frame_count).second) {
      throw InvalidInput("duplicate video id '" + v.video_id + "'");
    }
    if (v.labels) {
      ++labelled;
      if (v.labels->size() != v.frame_count) {
        throw InvalidInput("video '" + v.video_id + "' has " +
                           std::to_string(v.labels->size()) + " labels for " +
                           std::to_string(v.frame_count) + " frames");
      }
      for (auto y : *v.labels) {
        if (y > 1) throw InvalidInput("video '" + v.video_id + "' has a label outside {0,1}");
      }
    }
  }
  if (labelled != 0 && labelled != videos.size()) {
    throw InvalidInput("labels must be present for all videos or none (" +
                       std::to_string(labelled) + " of " +
                       std::to_string(videos.size()) + " labelled)");
  }

  std::set<std::tuple<std::string_view, std::uint32_t, std::uint32_t>> keys;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    auto where = [&] { return "object #" + std::to_string(i) + " (" + o.video_id + ")"; };
    auto it = frames.find(o.video_id);
    if (it == frames.end()) throw InvalidInput(where() + " refers to an unknown video");
    if (o.frame_idx >= it->second) {
      throw InvalidInput(where() + " frame " + std::to_string(o.frame_idx) +
                         " >= frame_count " + std::to_string(it->second));
    }
    if (o.app_feature.size() != d_app || o.mot_feature.size() != d_mot) {
      throw InvalidInput(where() + " feature dims " + std::to_string(o.app_feature.size()) +
                         "/" + std::to_string(o.mot_feature.size()) + " do not match " +
                         std::to_string(d_app) + "/" + std::to_string(d_mot));
    }
    auto finite = [](float f) { return std::isfinite(f); };
    if (!std::all_of(o.app_feature.begin(), o.app_feature.end(), finite) ||
        !std::all_of(o.mot_feature.begin(), o.mot_feature.end(), finite)) {
      throw InvalidInput(where() + " has a non-finite feature value");
    }
    if (!keys.emplace(o.video_id, o.frame_idx, o.object_idx).second) {
      throw InvalidInput(where() + " duplicates key (frame " + std::to_string(o.frame_idx) +
                         ", object " + std::to_string(o.object_idx) + ")");
    }
  }
}

bool DatasetManifest::has_labels() const {
  return !videos.empty() &&
         std::all_of(videos.begin(), videos.end(), [](const auto& v) { return v.labels.has_value(); });
}

const VideoInfo* DatasetManifest::find_video(std::string_view id) const {
  for (const auto& v : videos) {
    if (v.video_id == id) return &v;
  }
  return nullptr;
}

TrainingView DatasetManifest::training_view() const {
  TrainingView view;
  view.d_app = d_app;
  view.d_mot = d_mot;
  view.videos.reserve(videos.size());
  for (const auto& v : videos) view.videos.push_back({v.video_id, v.frame_count});
  view.objects = objects;
  return view;
}

FeatureMatrix stack_features(std::span<const ObjectRecord> objects, Modality m,
                             std::size_t dim) {
  FeatureMatrix out(static_cast<Eigen::Index>(objects.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& f = objects[i].feature(m);
    if (f.size() != dim) {
      throw InvalidInput("object " + std::to_string(i) + " has " + std::string(to_string(m)) +
                         " dim " + std::to_string(f.size()) + ", expected " + std::to_string(dim));
    }
    for (std::size_t j = 0; j < dim; ++j) out(i, j) = static_cast<double>(f[j]);
  }
  return out;
}

void Hyperparams::validate() const {
  if (k == 0) throw InvalidInput("k must be positive");
  if (n_components == 0) throw InvalidInput("n_components must be positive");
  if (!(tau >= 0.0 && tau <= 100.0)) throw InvalidInput("tau must lie in [0, 100]");
  if (!(p > 0.0 && p <= 100.0)) throw InvalidInput("p must lie in (0, 100]");
  if (!(smoothing_sigma > 0.0) || !std::isfinite(smoothing_sigma)) {
    throw InvalidInput("smoothing sigma must be positive");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view purpose) {
  return splitmix64(splitmix64(seed) ^ fnv1a(purpose));
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::string_view purpose) const { return Rng(mix_seed(seed_, purpose)); }

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidInput("Rng::below(0)");
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
}

std::uint64_t Rng::poisson(double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::uint64_t>(mean)(engine_);
}

std::uint64_t Rng::geometric(double mean) {
  if (mean <= 1.0) return 1;
  // failures before the first success, shifted onto {1, 2, ...}
  return 1 + std::geometric_distribution<std::uint64_t>(1.0 / mean)(engine_);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t m) {
  if (m > n) throw InvalidInput("cannot sample " + std::to_string(m) + " of " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i + static_cast<std::size_t>(below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------

std::size_t removal_count(std::size_t n, double tau) {
  if (!(tau >= 0.0 && tau <= 100.0)) throw InvalidInput("tau must lie in [0, 100]");
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  auto r = static_cast<std::size_t>(std::floor(tau * static_cast<double>(n) / 100.0 + 1e-9));
  return std::min(r, n);
}

std::vector<std::size_t> select_top_fraction(std::span<const double> scores, double tau) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) {
      throw InvalidInput("score #" + std::to_string(i) + " is NaN");
    }
  }
  const std::size_t r = removal_count(scores.size(), tau);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Highest score first; later index first among ties.
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a > b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(r), order.end(), before);
  order.resize(r);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace cknn
