#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hairtx/errors.hpp"
#include "hairtx/features.hpp"
#include "hairtx/optimizer.hpp"
#include "hairtx/rng.hpp"

namespace hairtx {

/// Full run configuration. File format is INI-style sections of key = value
/// pairs; unknown keys are rejected.
struct RunConfig {
  struct Generator {
    std::string backend = "toy";  // "toy" | "pretrained"
    std::string weights;          // weight descriptor path for "pretrained"
  } generator;

  struct Extractor {
    std::string backend = "toy";
    std::string lpips_weights;  // optional calibration weight file
  } extractor;

  OptimizationConfig optimizer;

  struct Masks {
    double dilate_amount = 0.2;
    double erode_amount = 0.2;
  } masks;

  struct Blending {
    double feather_sigma = 5.0;  // pixels at 512^2, scaled with resolution
    std::string inpaint_command;  // external template; empty -> fallback inpainter
    int inpaint_timeout = 120;    // seconds
  } blending;

  struct Evaluation {
    int hair_channel = 2;        // toy backends reserve this channel as hair signal
    double hair_threshold = 0.6;
  } evaluation;

  static RunConfig from_file(const std::string& path);

  /// Canonical key=value serialization; basis for the config hash.
  std::string canonical() const {
    std::ostringstream os;
    auto num = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    os << "generator.backend=" << generator.backend << "\n";
    os << "generator.weights=" << generator.weights << "\n";
    os << "extractor.backend=" << extractor.backend << "\n";
    os << "extractor.lpips_weights=" << extractor.lpips_weights << "\n";
    os << "optimizer.stage1_iters=" << optimizer.stage1_iters << "\n";
    os << "optimizer.stage2_iters=" << optimizer.stage2_iters << "\n";
    os << "optimizer.lr0=" << num(optimizer.lr0) << "\n";
    os << "optimizer.lambda_face=" << num(optimizer.weights.face) << "\n";
    os << "optimizer.lambda_structure=" << num(optimizer.weights.structure) << "\n";
    os << "optimizer.lambda_appearance=" << num(optimizer.weights.appearance) << "\n";
    os << "optimizer.lambda_style=" << num(optimizer.weights.style) << "\n";
    os << "optimizer.lambda_noise=" << num(optimizer.weights.noise) << "\n";
    os << "optimizer.go_enabled=" << (optimizer.go_enabled ? 1 : 0) << "\n";
    os << "optimizer.go_wplus_only=" << (optimizer.go_wplus_only ? 1 : 0) << "\n";
    os << "optimizer.seed=" << optimizer.seed << "\n";
    os << "optimizer.beta1=" << num(optimizer.beta1) << "\n";
    os << "optimizer.beta2=" << num(optimizer.beta2) << "\n";
    os << "optimizer.adam_eps=" << num(optimizer.adam_eps) << "\n";
    os << "optimizer.snapshot_every=" << optimizer.snapshot_every << "\n";
    os << "masks.dilate_amount=" << num(masks.dilate_amount) << "\n";
    os << "masks.erode_amount=" << num(masks.erode_amount) << "\n";
    os << "blending.feather_sigma=" << num(blending.feather_sigma) << "\n";
    os << "blending.inpaint_command=" << blending.inpaint_command << "\n";
    os << "blending.inpaint_timeout=" << blending.inpaint_timeout << "\n";
    os << "evaluation.hair_channel=" << evaluation.hair_channel << "\n";
    os << "evaluation.hair_threshold=" << num(evaluation.hair_threshold) << "\n";
    return os.str();
  }

  std::string hash() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical())));
    return std::string(buf);
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  }
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long n = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(n);
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean value for " + key + ": '" + v + "'");
}

}  // namespace detail

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    const std::string full = section + "." + key;

    if (full == "generator.backend") cfg.generator.backend = val;
    else if (full == "generator.weights") cfg.generator.weights = val;
    else if (full == "extractor.backend") cfg.extractor.backend = val;
    else if (full == "extractor.lpips_weights") cfg.extractor.lpips_weights = val;
    else if (full == "optimizer.stage1_iters") cfg.optimizer.stage1_iters = detail::parse_int(full, val);
    else if (full == "optimizer.stage2_iters") cfg.optimizer.stage2_iters = detail::parse_int(full, val);
    else if (full == "optimizer.lr0") cfg.optimizer.lr0 = detail::parse_double(full, val);
    else if (full == "optimizer.lambda_face") cfg.optimizer.weights.face = detail::parse_double(full, val);
    else if (full == "optimizer.lambda_structure") cfg.optimizer.weights.structure = detail::parse_double(full, val);
    else if (full == "optimizer.lambda_appearance") cfg.optimizer.weights.appearance = detail::parse_double(full, val);
    else if (full == "optimizer.lambda_style") cfg.optimizer.weights.style = detail::parse_double(full, val);
    else if (full == "optimizer.lambda_noise") cfg.optimizer.weights.noise = detail::parse_double(full, val);
    else if (full == "optimizer.go_enabled") cfg.optimizer.go_enabled = detail::parse_bool(full, val);
    else if (full == "optimizer.go_wplus_only") cfg.optimizer.go_wplus_only = detail::parse_bool(full, val);
    else if (full == "optimizer.seed") cfg.optimizer.seed = static_cast<uint64_t>(std::stoull(val));
    else if (full == "optimizer.beta1") cfg.optimizer.beta1 = detail::parse_double(full, val);
    else if (full == "optimizer.beta2") cfg.optimizer.beta2 = detail::parse_double(full, val);
    else if (full == "optimizer.adam_eps") cfg.optimizer.adam_eps = detail::parse_double(full, val);
    else if (full == "optimizer.snapshot_every") cfg.optimizer.snapshot_every = detail::parse_int(full, val);
    else if (full == "masks.dilate_amount") cfg.masks.dilate_amount = detail::parse_double(full, val);
    else if (full == "masks.erode_amount") cfg.masks.erode_amount = detail::parse_double(full, val);
    else if (full == "blending.feather_sigma") cfg.blending.feather_sigma = detail::parse_double(full, val);
    else if (full == "blending.inpaint_command") cfg.blending.inpaint_command = val;
    else if (full == "blending.inpaint_timeout") cfg.blending.inpaint_timeout = detail::parse_int(full, val);
    else if (full == "evaluation.hair_channel") cfg.evaluation.hair_channel = detail::parse_int(full, val);
    else if (full == "evaluation.hair_threshold") cfg.evaluation.hair_threshold = detail::parse_double(full, val);
    else throw ConfigError("unknown config key: " + full);
  }
  if (cfg.optimizer.stage1_iters < 0 || cfg.optimizer.stage2_iters < 0)
    throw ConfigError("iteration counts must be >= 0");
  if (!(cfg.optimizer.lr0 > 0)) throw ConfigError("lr0 must be > 0");
  return cfg;
}

/// LPIPS calibration weights: JSON {"levels": [[c1 weights], [c2 weights], ...]}.
inline LpipsWeights load_lpips_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lpips weights: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("lpips weights parse error: " + std::string(e.what()));
  }
  LpipsWeights w;
  w.per_level = j.at("levels").get<std::vector<std::vector<double>>>();
  return w;
}

}  // namespace hairtx
