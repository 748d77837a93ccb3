// Dataset files and model bundles.
//
// Datasets come in two interchangeable encodings: a little-endian binary file
// starting with "CKNN" and a line-delimited JSON text file. Features are stored
// as IEEE-754 single precision in both. A model bundle is a directory holding a
// key=value manifest plus binary blobs for the two banks and any fitted GMMs.
// docs/formats.md has byte-level examples.

#pragma once

#include "cknn/cleanse.hpp"
#include "cknn/core.hpp"
#include "cknn/scorers.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace cknn {

enum class DatasetFormat { Binary, Text };

inline constexpr char kDatasetMagic[4] = {'C', 'K', 'N', 'N'};
inline constexpr std::uint32_t kDatasetVersion = 1;

// Reads either encoding; the format is detected from the first bytes.
// Errors are ParseError and name the byte offset (binary) or line (text).
DatasetManifest read_dataset(std::istream& in);
DatasetManifest read_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const DatasetManifest& m, DatasetFormat format);
void write_dataset(const std::filesystem::path& path, const DatasetManifest& m,
                   DatasetFormat format);

// ".jsonl" / ".txt" select the text encoding, anything else binary.
DatasetFormat format_for_path(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct ModelBundle {
  Hyperparams hyperparams;
  PseudoScorerConfig app_scorer = PseudoScorerConfig::gmm(Modality::App, 8);
  PseudoScorerConfig mot_scorer = PseudoScorerConfig::gmm(Modality::Mot, 8);
  Compression compression = Compression::Random;
  std::uint32_t d_app = 0;
  std::uint32_t d_mot = 0;
  FeatureBank app_bank;
  FeatureBank mot_bank;
  ScoreStats app_stats;
  ScoreStats mot_stats;
  std::optional<GmmModel> app_gmm;
  std::optional<GmmModel> mot_gmm;

  const FeatureBank& bank(Modality m) const { return m == Modality::App ? app_bank : mot_bank; }
  const ScoreStats& stats(Modality m) const { return m == Modality::App ? app_stats : mot_stats; }

  // Throws InvalidInput if dims, stats or bank metadata disagree.
  void validate() const;
  bool operator==(const ModelBundle&) const = default;
};

inline constexpr char kBankMagic[4] = {'C', 'K', 'N', 'B'};
inline constexpr char kGmmMagic[4] = {'C', 'K', 'N', 'G'};
inline constexpr std::uint32_t kBlobVersion = 1;

// Creates the directory if needed and overwrites the bundle files in it.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

// Blob encoders, exposed for tests and tooling.
void write_bank_blob(std::ostream& out, const FeatureBank& bank);
FeatureBank read_bank_blob(std::istream& in);
void write_gmm_blob(std::ostream& out, const GmmModel& gmm);
GmmModel read_gmm_blob(std::istream& in);

}  // namespace cknn
