// Synthetic object-feature datasets with temporally clustered anomalies.
//
// Normal objects are drawn around a fixed set of mode centres in each
// modality. An anomaly event picks a fresh centre at distance anomaly_offset
// from the normal centres and emits one tightly jittered object per frame for
// its whole duration, so the anomalous objects of one event form a dense
// cluster of their own.

#pragma once

#include "cknn/core.hpp"

#include <string>
#include <vector>

namespace cknn {

enum class AnomalyModality {
  Both,   // event objects are abnormal in appearance and motion
  App,    // abnormal appearance, motion drawn from the normal modes
  Mot,    // abnormal motion, appearance drawn from the normal modes
  Mixed,  // events alternate between App and Mot
};

std::string_view to_string(AnomalyModality m);
AnomalyModality parse_anomaly_modality(std::string_view s);

enum class DurationModel {
  Uniform,    // integer run length uniform on [round(L/2), round(3L/2)]
  Geometric,  // run length ~ Geometric(mean L); heavy tail of long events
  Fixed,      // every event lasts exactly L frames
};

std::string_view to_string(DurationModel m);
DurationModel parse_duration_model(std::string_view s);

struct SynthConfig {
  std::uint64_t seed = 0;
  std::uint32_t n_train_videos = 10;
  std::uint32_t n_test_videos = 5;
  std::uint32_t frames_per_video = 200;
  double objects_per_frame_mean = 3.0;
  std::uint32_t d_app = 16;
  std::uint32_t d_mot = 8;
  std::uint32_t n_normal_modes = 8;
  double mode_spread = 6.0;          // std of normal centre coordinates
  double anomaly_event_rate = 9.0;   // mean events per video
  double event_duration_frames = 12.0;
  DurationModel duration_model = DurationModel::Uniform;
  double anomaly_offset = 8.0;       // in units of the normal within-mode std (1)
  double within_event_jitter = 0.1;
  AnomalyModality anomaly_modality = AnomalyModality::Both;

  void validate() const;
};

struct SynthEvent {
  std::string video_id;
  std::uint32_t start_frame = 0;
  std::uint32_t duration = 0;
  AnomalyModality modality = AnomalyModality::Both;  // App, Mot or Both
  std::vector<double> app_center;  // empty when appearance is normal
  std::vector<double> mot_center;  // empty when motion is normal
};

struct SynthTruth {
  // Aligned with the objects of the respective manifest; 1 marks an event object.
  std::vector<std::uint8_t> train_abnormal;
  std::vector<std::uint8_t> test_abnormal;
  std::vector<SynthEvent> events;
  std::vector<std::vector<double>> app_normal_centers;
  std::vector<std::vector<double>> mot_normal_centers;
  double expected_contamination = 0.0;  // expected abnormal share of all objects
  bool overlap_warning = false;         // anomaly_offset < 2
};

struct SynthDataset {
  DatasetManifest train;  // unlabelled
  DatasetManifest test;   // labelled per frame
  SynthTruth truth;
};

SynthDataset generate(const SynthConfig& config);

// Closed-form expected fraction of abnormal objects for a configuration.
double expected_contamination(const SynthConfig& config);

}  // namespace cknn
