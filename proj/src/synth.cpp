#include "cknn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cknn {

std::string_view to_string(AnomalyModality m) {
  switch (m) {
    case AnomalyModality::Both: return "both";
    case AnomalyModality::App: return "app";
    case AnomalyModality::Mot: return "mot";
    case AnomalyModality::Mixed: return "mixed";
  }
  return "?";
}

AnomalyModality parse_anomaly_modality(std::string_view s) {
  if (s == "both") return AnomalyModality::Both;
  if (s == "app") return AnomalyModality::App;
  if (s == "mot") return AnomalyModality::Mot;
  if (s == "mixed") return AnomalyModality::Mixed;
  throw InvalidInput("unknown anomaly modality '" + std::string(s) + "' (expected both|app|mot|mixed)");
}

std::string_view to_string(DurationModel m) {
  switch (m) {
    case DurationModel::Uniform: return "uniform";
    case DurationModel::Geometric: return "geometric";
    case DurationModel::Fixed: return "fixed";
  }
  return "?";
}

DurationModel parse_duration_model(std::string_view s) {
  if (s == "uniform") return DurationModel::Uniform;
  if (s == "geometric") return DurationModel::Geometric;
  if (s == "fixed") return DurationModel::Fixed;
  throw InvalidInput("unknown duration model '" + std::string(s) + "' (expected uniform|geometric|fixed)");
}

void SynthConfig::validate() const {
  if (frames_per_video == 0) throw InvalidInput("frames_per_video must be positive");
  if (n_test_videos == 0) throw InvalidInput("n_test_videos must be positive");
  if (d_app == 0 || d_mot == 0) throw InvalidInput("feature dims must be positive");
  if (n_normal_modes == 0) throw InvalidInput("n_normal_modes must be positive");
  if (!(objects_per_frame_mean >= 0.0)) throw InvalidInput("objects_per_frame_mean must be >= 0");
  if (!(anomaly_event_rate >= 0.0)) throw InvalidInput("anomaly_event_rate must be >= 0");
  if (!(event_duration_frames >= 1.0)) throw InvalidInput("event duration must be at least 1 frame");
  if (!(anomaly_offset > 0.0)) throw InvalidInput("anomaly_offset must be positive");
  if (!(within_event_jitter >= 0.0)) throw InvalidInput("within_event_jitter must be >= 0");
  if (!(mode_spread >= 0.0)) throw InvalidInput("mode_spread must be >= 0");
}

namespace {

using Point = std::vector<double>;

double distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<Point> normal_centers(Rng& rng, std::uint32_t modes, std::uint32_t d, double spread) {
  std::vector<Point> c(modes, Point(d));
  for (auto& p : c) {
    for (double& v : p) v = spread * rng.normal();
  }
  return c;
}

// A point at distance `offset` from a random normal centre that is no closer
// than `offset` to any other centre. Falls back to the best of the attempts.
Point anomaly_center(Rng& rng, const std::vector<Point>& centers, double offset) {
  const std::size_t d = centers.front().size();
  Point best;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const auto& base = centers[rng.below(centers.size())];
    Point u(d);
    double norm = 0.0;
    for (double& v : u) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    Point a(d);
    for (std::size_t i = 0; i < d; ++i) a[i] = base[i] + offset * u[i] / norm;
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& c : centers) gap = std::min(gap, distance(a, c));
    if (gap >= offset - 1e-9) return a;
    if (gap > best_gap) {
      best_gap = gap;
      best = std::move(a);
    }
  }
  return best;
}

std::vector<float> around(Rng& rng, const Point& center, double std) {
  std::vector<float> f(center.size());
  for (std::size_t i = 0; i < center.size(); ++i) {
    f[i] = static_cast<float>(center[i] + std * rng.normal());
  }
  return f;
}

std::pair<std::uint64_t, std::uint64_t> uniform_bounds(double mean) {
  const auto lo = std::max<std::int64_t>(1, std::llround(mean / 2.0));
  const auto hi = std::max<std::int64_t>(lo, std::llround(1.5 * mean));
  return {static_cast<std::uint64_t>(lo), static_cast<std::uint64_t>(hi)};
}

std::uint32_t event_duration(Rng& rng, const SynthConfig& c) {
  std::uint64_t d = 1;
  switch (c.duration_model) {
    case DurationModel::Fixed:
      d = static_cast<std::uint64_t>(std::llround(c.event_duration_frames));
      break;
    case DurationModel::Geometric:
      d = rng.geometric(c.event_duration_frames);
      break;
    case DurationModel::Uniform: {
      const auto [lo, hi] = uniform_bounds(c.event_duration_frames);
      d = lo + rng.below(hi - lo + 1);
      break;
    }
  }
  return static_cast<std::uint32_t>(std::clamp<std::uint64_t>(d, 1, c.frames_per_video));
}

struct VideoOutput {
  VideoInfo info;
  std::vector<ObjectRecord> objects;
  std::vector<std::uint8_t> abnormal;
  std::vector<SynthEvent> events;
};

VideoOutput make_video(const SynthConfig& c, const std::string& id, Rng rng,
                       const std::vector<Point>& capp, const std::vector<Point>& cmot) {
  const std::uint32_t t_len = c.frames_per_video;
  struct Pending {
    std::vector<float> app, mot;
    bool abnormal;
  };
  std::vector<std::vector<Pending>> frames(t_len);

  auto normal_app = [&] { return around(rng, capp[rng.below(capp.size())], 1.0); };
  auto normal_mot = [&] { return around(rng, cmot[rng.below(cmot.size())], 1.0); };

  for (std::uint32_t t = 0; t < t_len; ++t) {
    const auto n = rng.poisson(c.objects_per_frame_mean);
    for (std::uint64_t i = 0; i < n; ++i) {
      auto a = normal_app();
      auto m = normal_mot();
      frames[t].push_back({std::move(a), std::move(m), false});
    }
  }

  VideoOutput out;
  const double whole = std::floor(c.anomaly_event_rate);
  auto n_events = static_cast<std::uint64_t>(whole);
  if (rng.uniform() < c.anomaly_event_rate - whole) ++n_events;
  for (std::uint64_t e = 0; e < n_events; ++e) {
    SynthEvent ev;
    ev.video_id = id;
    ev.duration = event_duration(rng, c);
    ev.start_frame = static_cast<std::uint32_t>(rng.below(t_len - ev.duration + 1));
    ev.modality = c.anomaly_modality;
    if (ev.modality == AnomalyModality::Mixed) {
      ev.modality = e % 2 == 0 ? AnomalyModality::App : AnomalyModality::Mot;
    }
    const bool bad_app = ev.modality != AnomalyModality::Mot;
    const bool bad_mot = ev.modality != AnomalyModality::App;
    const Point ac = anomaly_center(rng, capp, c.anomaly_offset);
    const Point mc = anomaly_center(rng, cmot, c.anomaly_offset);
    if (bad_app) ev.app_center = ac;
    if (bad_mot) ev.mot_center = mc;
    for (std::uint32_t t = ev.start_frame; t < ev.start_frame + ev.duration; ++t) {
      auto a = bad_app ? around(rng, ac, c.within_event_jitter) : normal_app();
      auto m = bad_mot ? around(rng, mc, c.within_event_jitter) : normal_mot();
      frames[t].push_back({std::move(a), std::move(m), true});
    }
    out.events.push_back(std::move(ev));
  }

  out.info.video_id = id;
  out.info.frame_count = t_len;
  std::vector<std::uint8_t> labels(t_len, 0);
  for (std::uint32_t t = 0; t < t_len; ++t) {
    for (std::uint32_t i = 0; i < frames[t].size(); ++i) {
      auto& p = frames[t][i];
      ObjectRecord o;
      o.video_id = id;
      o.frame_idx = t;
      o.object_idx = i;
      o.app_feature = std::move(p.app);
      o.mot_feature = std::move(p.mot);
      out.objects.push_back(std::move(o));
      out.abnormal.push_back(p.abnormal ? 1 : 0);
      if (p.abnormal) labels[t] = 1;
    }
  }
  out.info.labels = std::move(labels);
  return out;
}

std::string video_name(const char* prefix, std::uint32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03u", prefix, i);
  return buf;
}

}  // namespace

double expected_contamination(const SynthConfig& c) {
  const double t_len = c.frames_per_video;
  double mean_dur;
  if (c.duration_model == DurationModel::Fixed) {
    mean_dur = std::clamp(std::round(c.event_duration_frames), 1.0, t_len);
  } else if (c.duration_model == DurationModel::Uniform) {
    const auto [lo, hi] = uniform_bounds(c.event_duration_frames);
    double sum = 0.0;
    for (auto d = lo; d <= hi; ++d) sum += std::min(static_cast<double>(d), t_len);
    mean_dur = sum / static_cast<double>(hi - lo + 1);
  } else if (c.event_duration_frames <= 1.0) {
    mean_dur = 1.0;
  } else {
    // E[min(G, T)] for G geometric on {1, 2, ...} with success 1/L.
    const double q = 1.0 / c.event_duration_frames;
    mean_dur = (1.0 - std::pow(1.0 - q, t_len)) / q;
  }
  const double abnormal = c.anomaly_event_rate * mean_dur;
  const double total = t_len * c.objects_per_frame_mean + abnormal;
  return total > 0.0 ? abnormal / total : 0.0;
}

SynthDataset generate(const SynthConfig& c) {
  c.validate();
  Rng root(c.seed);
  Rng centers = root.split("centers");
  SynthDataset ds;
  ds.truth.app_normal_centers = normal_centers(centers, c.n_normal_modes, c.d_app, c.mode_spread);
  ds.truth.mot_normal_centers = normal_centers(centers, c.n_normal_modes, c.d_mot, c.mode_spread);
  ds.truth.expected_contamination = expected_contamination(c);
  ds.truth.overlap_warning = c.anomaly_offset < 2.0;

  for (auto* m : {&ds.train, &ds.test}) {
    m->d_app = c.d_app;
    m->d_mot = c.d_mot;
  }
  auto emit = [&](DatasetManifest& m, std::vector<std::uint8_t>& flags, const char* prefix,
                  std::uint32_t count, bool keep_labels) {
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto id = video_name(prefix, i);
      auto v = make_video(c, id, root.split("video:" + id), ds.truth.app_normal_centers,
                          ds.truth.mot_normal_centers);
      if (!keep_labels) v.info.labels.reset();
      m.videos.push_back(std::move(v.info));
      m.objects.insert(m.objects.end(), std::make_move_iterator(v.objects.begin()),
                       std::make_move_iterator(v.objects.end()));
      flags.insert(flags.end(), v.abnormal.begin(), v.abnormal.end());
      ds.truth.events.insert(ds.truth.events.end(), v.events.begin(), v.events.end());
    }
  };
  emit(ds.train, ds.truth.train_abnormal, "train", c.n_train_videos, false);
  emit(ds.test, ds.truth.test_abnormal, "test", c.n_test_videos, true);
  return ds;
}

}  // namespace cknn
