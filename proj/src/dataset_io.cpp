#include "cknn/io.hpp"

#include "binary_io.hpp"

#include "json.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

namespace cknn {

using nlohmann::json;

namespace {

constexpr float kNoBox = std::numeric_limits<float>::quiet_NaN();

std::string key_text(const ObjectKey& k) {
  return "(" + k.video_id + ", " + std::to_string(k.frame_idx) + ", " +
         std::to_string(k.object_idx) + ")";
}

void rethrow_as_parse(const std::string& where, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const InvalidInput& e) {
    throw ParseError(where + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// binary

void write_binary(std::ostream& out, const DatasetManifest& m) {
  detail::LeWriter w(out);
  w.put_bytes(kDatasetMagic, 4);
  w.put(kDatasetVersion);
  w.put(m.d_app);
  w.put(m.d_mot);
  w.put(static_cast<std::uint64_t>(m.objects.size()));

  w.put(static_cast<std::uint32_t>(m.videos.size()));
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::uint32_t i = 0; i < m.videos.size(); ++i) {
    const auto& v = m.videos[i];
    index.emplace(v.video_id, i);
    w.put_string(v.video_id);
    w.put(v.frame_count);
    w.put(static_cast<std::uint8_t>(v.labels ? 1 : 0));
    if (v.labels) {
      w.put_bytes(reinterpret_cast<const char*>(v.labels->data()), v.labels->size());
    }
  }

  for (const auto& o : m.objects) {
    w.put(index.at(o.video_id));
    w.put(o.frame_idx);
    w.put(o.object_idx);
    if (o.bbox) {
      for (float f : {o.bbox->x1, o.bbox->y1, o.bbox->x2, o.bbox->y2}) w.put_f32(f);
    } else {
      for (int i = 0; i < 4; ++i) w.put_f32(kNoBox);
    }
    for (float f : o.app_feature) w.put_f32(f);
    for (float f : o.mot_feature) w.put_f32(f);
  }
}

DatasetManifest read_binary(std::istream& in) {
  detail::LeReader r(in, "dataset");
  r.expect_magic(kDatasetMagic);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  DatasetManifest m;
  m.d_app = r.get<std::uint32_t>("d_app");
  m.d_mot = r.get<std::uint32_t>("d_mot");
  if (m.d_app == 0 || m.d_mot == 0) r.fail("feature dims must be positive");
  const auto count = r.get<std::uint64_t>("record_count");

  const auto nvideos = r.get<std::uint32_t>("video count");
  std::set<std::string> seen_ids;
  for (std::uint32_t i = 0; i < nvideos; ++i) {
    VideoInfo v;
    v.video_id = r.get_string("video id");
    if (!seen_ids.insert(v.video_id).second) r.fail("duplicate video id '" + v.video_id + "'");
    v.frame_count = r.get<std::uint32_t>("frame count");
    const auto has_labels = r.get<std::uint8_t>("label flag");
    if (has_labels > 1) r.fail("label flag must be 0 or 1");
    if (has_labels) {
      std::vector<std::uint8_t> labels(v.frame_count);
      r.bytes(reinterpret_cast<char*>(labels.data()), labels.size(), "labels");
      for (auto l : labels) {
        if (l > 1) r.fail("label values must be 0 or 1 in video '" + v.video_id + "'");
      }
      v.labels = std::move(labels);
    }
    m.videos.push_back(std::move(v));
  }

  std::set<ObjectKey> keys;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t rec_start = r.offset();
    auto rec_fail = [&](const std::string& msg) {
      throw ParseError("dataset record #" + std::to_string(i) + " at byte " +
                       std::to_string(rec_start) + ": " + msg);
    };
    ObjectRecord o;
    const auto vid = r.get<std::uint32_t>("video index");
    if (vid >= m.videos.size()) rec_fail("video index " + std::to_string(vid) + " out of range");
    o.video_id = m.videos[vid].video_id;
    o.frame_idx = r.get<std::uint32_t>("frame index");
    o.object_idx = r.get<std::uint32_t>("object index");
    float box[4];
    int nan_count = 0;
    for (float& b : box) {
      b = r.get_f32("bbox");
      nan_count += std::isnan(b) ? 1 : 0;
    }
    if (nan_count == 0) {
      o.bbox = BoundingBox{box[0], box[1], box[2], box[3]};
    } else if (nan_count != 4) {
      rec_fail("bbox partially NaN");
    }
    o.app_feature.resize(m.d_app);
    for (float& f : o.app_feature) f = r.get_f32("app feature");
    o.mot_feature.resize(m.d_mot);
    for (float& f : o.mot_feature) f = r.get_f32("mot feature");

    for (float f : o.app_feature) if (!std::isfinite(f)) rec_fail("non-finite app feature");
    for (float f : o.mot_feature) if (!std::isfinite(f)) rec_fail("non-finite mot feature");
    if (o.frame_idx >= m.videos[vid].frame_count) {
      rec_fail("frame " + std::to_string(o.frame_idx) + " outside video '" + o.video_id +
               "' of " + std::to_string(m.videos[vid].frame_count) + " frames");
    }
    if (!keys.insert(o.key()).second) rec_fail("duplicate object key " + key_text(o.key()));
    m.objects.push_back(std::move(o));
  }
  if (!r.at_end()) {
    r.fail("trailing data after the declared " + std::to_string(count) + " records");
  }
  rethrow_as_parse("dataset", [&] { m.validate(); });
  return m;
}

// ---------------------------------------------------------------------------
// text

json floats_json(const std::vector<float>& v) {
  json a = json::array();
  for (float f : v) a.push_back(static_cast<double>(f));
  return a;
}

void write_text(std::ostream& out, const DatasetManifest& m) {
  json meta;
  meta["format"] = "cknn-text";
  meta["version"] = kDatasetVersion;
  meta["d_app"] = m.d_app;
  meta["d_mot"] = m.d_mot;
  meta["record_count"] = m.objects.size();
  meta["videos"] = json::array();
  for (const auto& v : m.videos) {
    json jv{{"id", v.video_id}, {"frame_count", v.frame_count}};
    jv["labels"] = v.labels ? json(*v.labels) : json(nullptr);
    meta["videos"].push_back(std::move(jv));
  }
  out << meta.dump() << '\n';
  for (const auto& o : m.objects) {
    json r;
    r["video"] = o.video_id;
    r["frame"] = o.frame_idx;
    r["object"] = o.object_idx;
    r["bbox"] = o.bbox ? json{o.bbox->x1, o.bbox->y1, o.bbox->x2, o.bbox->y2} : json(nullptr);
    r["app"] = floats_json(o.app_feature);
    r["mot"] = floats_json(o.mot_feature);
    out << r.dump() << '\n';
  }
}

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw ParseError("dataset line " + std::to_string(line) + ": missing field '" + name + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError("dataset line " + std::to_string(line) + ": field '" + name + "': " +
                     e.what());
  }
}

std::vector<float> feature_field(const json& j, const char* name, std::uint32_t dim,
                                 std::size_t line) {
  auto values = field<std::vector<double>>(j, name, line);
  if (values.size() != dim) {
    throw ParseError("dataset line " + std::to_string(line) + ": " + name + " has " +
                     std::to_string(values.size()) + " values, file declares " +
                     std::to_string(dim));
  }
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<float>(values[i]);
    if (!std::isfinite(out[i])) {
      throw ParseError("dataset line " + std::to_string(line) + ": non-finite " + name +
                       " feature");
    }
  }
  return out;
}

DatasetManifest read_text(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  auto parse = [&]() {
    try {
      return json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  };

  if (!next_line()) throw ParseError("dataset: empty file");
  json meta = parse();
  if (!meta.is_object() || meta.value("format", "") != "cknn-text") {
    throw ParseError("dataset line 1: not a cknn dataset (missing format marker)");
  }
  if (field<std::uint32_t>(meta, "version", lineno) != kDatasetVersion) {
    throw ParseError("dataset line 1: unsupported version");
  }
  DatasetManifest m;
  m.d_app = field<std::uint32_t>(meta, "d_app", lineno);
  m.d_mot = field<std::uint32_t>(meta, "d_mot", lineno);
  if (m.d_app == 0 || m.d_mot == 0) throw ParseError("dataset line 1: feature dims must be positive");
  const auto count = field<std::uint64_t>(meta, "record_count", lineno);
  for (const auto& jv : field<json>(meta, "videos", lineno)) {
    VideoInfo v;
    v.video_id = field<std::string>(jv, "id", lineno);
    v.frame_count = field<std::uint32_t>(jv, "frame_count", lineno);
    const auto& labels = jv.contains("labels") ? jv["labels"] : json(nullptr);
    if (!labels.is_null()) v.labels = field<std::vector<std::uint8_t>>(jv, "labels", lineno);
    m.videos.push_back(std::move(v));
  }
  rethrow_as_parse("dataset line 1", [&] {
    DatasetManifest header = m;
    header.validate();
  });

  std::unordered_map<std::string, std::uint32_t> frames;
  for (const auto& v : m.videos) frames.emplace(v.video_id, v.frame_count);
  std::set<ObjectKey> keys;
  while (next_line()) {
    json j = parse();
    auto fail = [&](const std::string& msg) {
      throw ParseError("dataset line " + std::to_string(lineno) + ": " + msg);
    };
    if (!j.is_object()) fail("record is not a JSON object");
    ObjectRecord o;
    o.video_id = field<std::string>(j, "video", lineno);
    o.frame_idx = field<std::uint32_t>(j, "frame", lineno);
    o.object_idx = field<std::uint32_t>(j, "object", lineno);
    if (j.contains("bbox") && !j["bbox"].is_null()) {
      auto b = field<std::vector<float>>(j, "bbox", lineno);
      if (b.size() != 4) fail("bbox must have 4 values");
      o.bbox = BoundingBox{b[0], b[1], b[2], b[3]};
    }
    o.app_feature = feature_field(j, "app", m.d_app, lineno);
    o.mot_feature = feature_field(j, "mot", m.d_mot, lineno);
    auto fc = frames.find(o.video_id);
    if (fc == frames.end()) fail("unknown video '" + o.video_id + "'");
    if (o.frame_idx >= fc->second) {
      fail("frame " + std::to_string(o.frame_idx) + " outside video '" + o.video_id + "'");
    }
    if (!keys.insert(o.key()).second) fail("duplicate object key " + key_text(o.key()));
    m.objects.push_back(std::move(o));
  }
  if (m.objects.size() != count) {
    throw ParseError("dataset: header declares " + std::to_string(count) + " records, found " +
                     std::to_string(m.objects.size()));
  }
  rethrow_as_parse("dataset", [&] { m.validate(); });
  return m;
}

}  // namespace

DatasetManifest read_dataset(std::istream& in) {
  char head[4] = {};
  in.read(head, 4);
  const auto got = in.gcount();
  in.clear();
  in.seekg(0);
  if (got == 4 && std::memcmp(head, kDatasetMagic, 4) == 0) return read_binary(in);
  if (got > 0 && head[0] == '{') return read_text(in);
  // Anything else: report as a binary header problem.
  return read_binary(in);
}

DatasetManifest read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset '" + path.string() + "'");
  try {
    return read_dataset(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, const DatasetManifest& m, DatasetFormat format) {
  m.validate();
  if (format == DatasetFormat::Binary) {
    write_binary(out, m);
  } else {
    write_text(out, m);
  }
  if (!out) throw ParseError("write failed");
}

void write_dataset(const std::filesystem::path& path, const DatasetManifest& m,
                   DatasetFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot create '" + path.string() + "'");
  write_dataset(out, m, format);
}

DatasetFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".txt" || ext == ".json") ? DatasetFormat::Text
                                                               : DatasetFormat::Binary;
}

}  // namespace cknn
