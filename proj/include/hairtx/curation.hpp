#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairtx/errors.hpp"
#include "hairtx/image_io.hpp"
#include "hairtx/mask.hpp"

namespace hairtx {

/// 68 2D facial landmarks in pixel coordinates.
struct LandmarkSet {
  std::array<std::array<double, 2>, 68> pts{};
};

inline LandmarkSet load_landmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LandmarkError("cannot open landmarks: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw LandmarkError("landmarks parse error in " + path + ": " + e.what());
  }
  if (!j.is_array() || j.size() != 68)
    throw LandmarkError("landmarks file must hold exactly 68 points: " + path);
  LandmarkSet s;
  for (size_t k = 0; k < 68; ++k) {
    if (!j[k].is_array() || j[k].size() != 2)
      throw LandmarkError("landmark " + std::to_string(k) + " must be [x,y]: " + path);
    s.pts[k][0] = j[k][0].get<double>();
    s.pts[k][1] = j[k][1].get<double>();
  }
  return s;
}

inline void save_landmarks(const std::string& path, const LandmarkSet& s) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : s.pts) j.push_back({p[0], p[1]});
  std::ofstream out(path);
  out << j.dump() << "\n";
}

/// Coordinates must lie within image bounds with 10% slack.
inline void validate_landmarks(const LandmarkSet& s, int width, int height) {
  const double sx = 0.1 * width, sy = 0.1 * height;
  for (size_t k = 0; k < 68; ++k) {
    const double x = s.pts[k][0], y = s.pts[k][1];
    if (x < -sx || x > width + sx || y < -sy || y > height + sy)
      throw LandmarkError("landmark " + std::to_string(k) + " out of bounds");
  }
}

inline double hair_fraction(const BinaryMask& hair_mask) {
  if (hair_mask.v.empty()) return 0.0;
  return static_cast<double>(hair_mask.area()) / static_cast<double>(hair_mask.v.size());
}

/// Mean L2 distance between corresponding landmarks.
inline double pose_distance(const LandmarkSet& a, const LandmarkSet& b) {
  double acc = 0.0;
  for (size_t k = 0; k < 68; ++k) {
    const double dx = a.pts[k][0] - b.pts[k][0];
    const double dy = a.pts[k][1] - b.pts[k][1];
    acc += std::sqrt(dx * dx + dy * dy);
  }
  return acc / 68.0;
}

enum class Category { Easy, Medium, Difficult, Rejected };

inline const char* to_string(Category c) {
  switch (c) {
    case Category::Easy: return "Easy";
    case Category::Medium: return "Medium";
    case Category::Difficult: return "Difficult";
    case Category::Rejected: return "Rejected";
  }
  return "Rejected";
}

inline Category category_from_string(const std::string& s) {
  if (s == "Easy") return Category::Easy;
  if (s == "Medium") return Category::Medium;
  if (s == "Difficult") return Category::Difficult;
  if (s == "Rejected") return Category::Rejected;
  throw ManifestError("unknown category: " + s);
}

/// Alignment categories; both the IoU and PD constraints must hold.
///   Easy:      IoU in (0.8, 1.0]  and PD in [0.0, 2.0)
///   Medium:    IoU in (0.7, 0.8]  and PD in [2.0, 4.0)
///   Difficult: IoU in (0.6, 0.7]  and PD in [4.0, 5.0)
inline Category categorize(double iou, double pd) {
  if (iou > 0.8 && iou <= 1.0 && pd >= 0.0 && pd < 2.0) return Category::Easy;
  if (iou > 0.7 && iou <= 0.8 && pd >= 2.0 && pd < 4.0) return Category::Medium;
  if (iou > 0.6 && iou <= 0.7 && pd >= 4.0 && pd < 5.0) return Category::Difficult;
  return Category::Rejected;
}

/// One (I1, I2, I3) tuple with alignment metrics. Paths are stored relative
/// to the manifest's own directory.
struct TupleRecord {
  std::string id;
  std::string identity, shape, appearance;                       // images
  std::string identity_face, identity_hair;                      // I1 masks
  std::string shape_face, shape_hair;                            // I2 masks
  std::string appearance_hair;                                   // I3 mask
  std::string identity_landmarks, shape_landmarks;
  double iou = 0.0;
  double pd = 0.0;
  Category category = Category::Rejected;
  int resolution = 0;  // PD is in pixel units at this resolution
};

struct ManifestConstraints {
  double min_hair_fraction = 0.18;
  bool include_rejected = true;
};

namespace detail {

struct CorpusEntry {
  std::string id;
  std::string image, face, hair, landmarks;  // filenames within the data dir
  BinaryMask face_mask, hair_mask;
  LandmarkSet lm;
  int width = 0, height = 0;
};

inline void require_companion(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw ManifestError("missing companion file: " + p.string());
}

}  // namespace detail

/// Scan a corpus directory. Every `<id>.png` must come with `<id>.face.png`,
/// `<id>.hair.png` and `<id>.landmarks.json`.
inline std::vector<detail::CorpusEntry> scan_corpus(const std::filesystem::path& data_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> ids;
  if (!fs::exists(data_dir)) throw ManifestError("data dir does not exist: " + data_dir.string());
  for (const auto& e : fs::directory_iterator(data_dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name.size() < 4 || name.substr(name.size() - 4) != ".png") continue;
    const std::string stem = name.substr(0, name.size() - 4);
    if (stem.size() > 5 && (stem.substr(stem.size() - 5) == ".face" || stem.substr(stem.size() - 5) == ".hair"))
      continue;
    ids.push_back(stem);
  }
  std::sort(ids.begin(), ids.end());
  std::vector<detail::CorpusEntry> out;
  for (const std::string& id : ids) {
    detail::CorpusEntry c;
    c.id = id;
    c.image = id + ".png";
    c.face = id + ".face.png";
    c.hair = id + ".hair.png";
    c.landmarks = id + ".landmarks.json";
    detail::require_companion(data_dir / c.face);
    detail::require_companion(data_dir / c.hair);
    detail::require_companion(data_dir / c.landmarks);
    c.face_mask = read_mask((data_dir / c.face).string());
    c.hair_mask = read_mask((data_dir / c.hair).string());
    c.width = c.face_mask.width;
    c.height = c.face_mask.height;
    if (!c.face_mask.same_size(c.hair_mask))
      throw ManifestError("mask resolution mismatch for id " + id);
    c.lm = load_landmarks((data_dir / c.landmarks).string());
    validate_landmarks(c.lm, c.width, c.height);
    out.push_back(std::move(c));
  }
  return out;
}

/// Enumerate (I1, I2, I3) tuples over all corpus members passing the hair
/// fraction constraint; IoU/PD are computed on (I1, I2). Deterministic given
/// the lexicographic directory listing.
inline std::vector<TupleRecord> build_manifest(const std::filesystem::path& data_dir,
                                               const ManifestConstraints& cons = {}) {
  auto corpus = scan_corpus(data_dir);
  std::vector<const detail::CorpusEntry*> valid;
  for (const auto& c : corpus)
    if (hair_fraction(c.hair_mask) >= cons.min_hair_fraction) valid.push_back(&c);

  std::vector<TupleRecord> out;
  for (const auto* a : valid)
    for (const auto* b : valid) {
      const double iou = mask_iou(a->face_mask, b->face_mask);
      const double pd = pose_distance(a->lm, b->lm);
      const Category cat = categorize(iou, pd);
      if (cat == Category::Rejected && !cons.include_rejected) continue;
      for (const auto* c : valid) {
        TupleRecord r;
        r.id = a->id + "__" + b->id + "__" + c->id;
        r.identity = a->image;
        r.shape = b->image;
        r.appearance = c->image;
        r.identity_face = a->face;
        r.identity_hair = a->hair;
        r.shape_face = b->face;
        r.shape_hair = b->hair;
        r.appearance_hair = c->hair;
        r.identity_landmarks = a->landmarks;
        r.shape_landmarks = b->landmarks;
        r.iou = iou;
        r.pd = pd;
        r.category = cat;
        r.resolution = a->width;
        out.push_back(std::move(r));
      }
    }
  std::stable_sort(out.begin(), out.end(),
                   [](const TupleRecord& x, const TupleRecord& y) { return x.id < y.id; });
  return out;
}

inline nlohmann::ordered_json tuple_to_json(const TupleRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["identity"] = r.identity;
  j["shape"] = r.shape;
  j["appearance"] = r.appearance;
  j["identity_face"] = r.identity_face;
  j["identity_hair"] = r.identity_hair;
  j["shape_face"] = r.shape_face;
  j["shape_hair"] = r.shape_hair;
  j["appearance_hair"] = r.appearance_hair;
  j["identity_landmarks"] = r.identity_landmarks;
  j["shape_landmarks"] = r.shape_landmarks;
  j["iou"] = r.iou;
  j["pd"] = r.pd;
  j["category"] = to_string(r.category);
  j["resolution"] = r.resolution;
  return j;
}

inline TupleRecord tuple_from_json(const nlohmann::json& j) {
  TupleRecord r;
  r.id = j.at("id").get<std::string>();
  r.identity = j.at("identity").get<std::string>();
  r.shape = j.at("shape").get<std::string>();
  r.appearance = j.at("appearance").get<std::string>();
  r.identity_face = j.at("identity_face").get<std::string>();
  r.identity_hair = j.at("identity_hair").get<std::string>();
  r.shape_face = j.at("shape_face").get<std::string>();
  r.shape_hair = j.at("shape_hair").get<std::string>();
  r.appearance_hair = j.at("appearance_hair").get<std::string>();
  r.identity_landmarks = j.at("identity_landmarks").get<std::string>();
  r.shape_landmarks = j.at("shape_landmarks").get<std::string>();
  r.iou = j.at("iou").get<double>();
  r.pd = j.at("pd").get<double>();
  r.category = category_from_string(j.at("category").get<std::string>());
  r.resolution = j.at("resolution").get<int>();
  return r;
}

/// JSON Lines, one TupleRecord per line.
inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<TupleRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest: " + path.string());
  for (const TupleRecord& r : records) out << tuple_to_json(r).dump() << "\n";
}

inline std::vector<TupleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest: " + path.string());
  std::vector<TupleRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(tuple_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ManifestError("manifest parse error at line " + std::to_string(lineno) + ": " +
                          e.what());
    }
  }
  return out;
}

}  // namespace hairtx
