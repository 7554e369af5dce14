#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hairtx/config.hpp"
#include "hairtx/curation.hpp"
#include "hairtx/evaluation.hpp"
#include "hairtx/generator.hpp"
#include "hairtx/image_io.hpp"
#include "hairtx/losses.hpp"
#include "hairtx/mask.hpp"
#include "hairtx/optimizer.hpp"
#include "hairtx/rng.hpp"
#include "hairtx/toydata.hpp"

namespace hairtx {

enum class EditMode { FullTransfer, AppearanceOnly, ShapeOnly };

inline const char* to_string(EditMode m) {
  switch (m) {
    case EditMode::FullTransfer: return "full-transfer";
    case EditMode::AppearanceOnly: return "appearance-only";
    case EditMode::ShapeOnly: return "shape-only";
  }
  return "full-transfer";
}

/// Raw tuple images and masks, before mask derivation.
struct TupleData {
  Image identity, shape_ref, appearance_ref;       // I1, I2, I3
  BinaryMask face1, hair1;                         // I1 masks
  BinaryMask hair2;                                // I2 hair mask
  BinaryMask hair3;                                // I3 hair mask
};

inline TupleData toy_tuple_data(const ToyTupleData& t) {
  return TupleData{t.identity.image, t.shape_ref.image,  t.appearance_ref.image,
                   t.identity.face,  t.identity.hair,    t.shape_ref.hair,
                   t.appearance_ref.hair};
}

/// Derived masks for one job. The ignore region is excluded from every
/// loss's support by construction; prepare() asserts it.
struct PreparedInputs {
  TupleData data;  // after edit-mode substitution
  BinaryMask dilated;        // M^{h,d}2
  BinaryMask eroded;         // M^{h,e}2
  BinaryMask ignore;         // M^{h,ir}2 = dilated - eroded
  BinaryMask face_target;    // M^f1 AND NOT dilated
  BinaryMask blend_support;  // M^f1 OR dilated
  bool erode_degenerate = false;

  TransferInputs transfer() const {
    return TransferInputs{data.identity, data.shape_ref, data.appearance_ref,
                          face_target,   eroded,         data.hair3};
  }
};

/// Build the mask framework for a tuple. A collapsed erosion (< 10 px) falls
/// back to the undilated hair mask with the degeneracy flag set.
inline PreparedInputs prepare_inputs(TupleData data, EditMode mode, const RunConfig& cfg) {
  if (mode == EditMode::AppearanceOnly) {  // structure source is the identity
    data.shape_ref = data.identity;
    data.hair2 = data.hair1;
  } else if (mode == EditMode::ShapeOnly) {  // appearance source is the identity
    data.appearance_ref = data.identity;
    data.hair3 = data.hair1;
  }
  require_mask_matches(data.identity, data.face1, "prepare");
  require_same_shape(data.identity, data.shape_ref, "prepare");
  require_same_shape(data.identity, data.appearance_ref, "prepare");
  if (data.hair2.empty_mask()) throw EmptyMask("prepare: empty shape-reference hair mask");
  if (data.face1.empty_mask()) throw EmptyMask("prepare: empty identity face mask");

  PreparedInputs p;
  p.dilated = dilate(data.hair2, cfg.masks.dilate_amount).mask;
  MorphResult er = erode(data.hair2, cfg.masks.erode_amount);
  if (er.achieved_area < 10) {
    p.eroded = data.hair2;
    p.erode_degenerate = true;
  } else {
    p.eroded = er.mask;
    p.erode_degenerate = er.degenerate;
  }
  p.ignore = ignore_region(p.dilated, p.eroded);
  p.face_target = face_target_mask(data.face1, p.dilated);
  p.blend_support = mask_or(data.face1, p.dilated);
  if (p.face_target.empty_mask())
    throw EmptyRegion("prepare: face target mask is empty (dilated hair covers the face)");

  // The ignore region must be excluded from every loss's support.
  if (!mask_and(p.ignore, p.eroded).empty_mask() || !mask_and(p.ignore, p.face_target).empty_mask())
    throw MaskOrderError("prepare: ignore region overlaps a loss support");

  p.data = std::move(data);
  return p;
}

/// One end-to-end transfer job.
struct TransferJob {
  std::string id = "job";
  std::filesystem::path base_dir;  // tuple paths resolve against this
  TupleRecord tuple;
  RunConfig config;
  std::filesystem::path out_dir;
  EditMode mode = EditMode::FullTransfer;
};

inline TupleData load_tuple_data(const TupleRecord& r, const std::filesystem::path& base) {
  TupleData d;
  d.identity = read_image((base / r.identity).string());
  d.shape_ref = read_image((base / r.shape).string());
  d.appearance_ref = read_image((base / r.appearance).string());
  d.face1 = read_mask((base / r.identity_face).string());
  d.hair1 = read_mask((base / r.identity_hair).string());
  d.hair2 = read_mask((base / r.shape_hair).string());
  d.hair3 = read_mask((base / r.appearance_hair).string());
  return d;
}

inline std::unique_ptr<GeneratorBackend> make_backend(const RunConfig& cfg) {
  if (cfg.generator.backend == "toy") return std::make_unique<AffineBackend>(AffineBackend::toy());
  if (cfg.generator.backend == "pretrained") {
    if (cfg.generator.weights.empty())
      throw ConfigError("generator.backend=pretrained requires generator.weights");
    return std::make_unique<AffineBackend>(AffineBackend::from_weight_file(cfg.generator.weights));
  }
  throw ConfigError("unknown generator backend: " + cfg.generator.backend);
}

inline std::unique_ptr<FeatureExtractor> make_extractor(const RunConfig& cfg) {
  if (cfg.extractor.backend == "toy") return std::make_unique<ToyExtractor>();
  throw ConfigError("unknown extractor backend: " + cfg.extractor.backend);
}

/// Loads the prepared tuple and writes the derived masks alongside the job
/// outputs.
inline PreparedInputs prepare(const TransferJob& job) {
  TupleData data = load_tuple_data(job.tuple, job.base_dir);
  PreparedInputs p = prepare_inputs(std::move(data), job.mode, job.config);
  namespace fs = std::filesystem;
  const fs::path mask_dir = job.out_dir / "prepared-masks";
  fs::create_directories(mask_dir);
  write_mask((mask_dir / "hair_dilated.png").string(), p.dilated);
  write_mask((mask_dir / "hair_eroded.png").string(), p.eroded);
  write_mask((mask_dir / "ignore_region.png").string(), p.ignore);
  write_mask((mask_dir / "face_target.png").string(), p.face_target);
  write_mask((mask_dir / "blend_support.png").string(), p.blend_support);
  return p;
}

inline void write_loss_csv(const std::filesystem::path& path,
                           const std::vector<IterationRecord>& log) {
  std::ofstream out(path);
  out << "iteration,stage,face,structure,appearance,style,noise,total,learning_rate\n";
  char buf[512];
  for (const IterationRecord& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iteration, r.stage, r.values.face, r.values.structure, r.values.appearance,
                  r.values.style, r.values.noise, r.values.total, r.lr);
    out << buf;
  }
}

/// Run a configured external inpainting command ({input} {mask} {output}
/// placeholders) under a timeout; any failure falls back to the diffusion
/// inpainter.
inline Image inpaint_background(const Image& identity, const BinaryMask& hole,
                                const RunConfig& cfg, const std::filesystem::path& work_dir) {
  if (hole.empty_mask()) return identity;
  if (!cfg.blending.inpaint_command.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(work_dir);
    const std::string in_path = (work_dir / "inpaint_input.png").string();
    const std::string mask_path = (work_dir / "inpaint_mask.png").string();
    const std::string out_path = (work_dir / "inpaint_output.png").string();
    write_image(in_path, identity);
    write_mask(mask_path, hole);
    std::string cmd = cfg.blending.inpaint_command;
    auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
      for (size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
        s.replace(pos, from.size(), to);
    };
    replace_all(cmd, "{input}", in_path);
    replace_all(cmd, "{mask}", mask_path);
    replace_all(cmd, "{output}", out_path);
    const std::string wrapped =
        "timeout " + std::to_string(cfg.blending.inpaint_timeout) + "s sh -c '" + cmd + "'";
    const int rc = std::system(wrapped.c_str());
    if (rc == 0 && fs::exists(out_path)) {
      Image out = read_image(out_path);
      if (out.same_shape(identity)) return out;
    }
    std::fprintf(stderr, "[hairtx] external inpainter failed (rc=%d); using fallback\n", rc);
  }
  return fallback_inpaint(identity, hole);
}

struct TransferOutcome {
  std::string id;
  bool failed = false;
  std::string error;
  double psnr = 0.0;
  double ssim = 0.0;
  double hair_iou = 0.0;
  double latent_distance = 0.0;
  LossValues final_losses;
  std::string config_hash;
};

inline nlohmann::ordered_json metrics_json(const TransferOutcome& o, int resolution) {
  nlohmann::ordered_json j;
  j["tuple_id"] = o.id;
  j["config_hash"] = o.config_hash;
  j["psnr"] = o.psnr;
  j["ssim"] = o.ssim;
  j["latent_distance"] = o.latent_distance;
  j["hair_iou"] = o.hair_iou;
  j["region"] = "face_target_mask";
  j["resolution"] = resolution;
  return j;
}

/// Execute a prepared job end to end: optimize, inpaint the identity's
/// foreground inside the blend support, soft-blend, write outputs, evaluate.
inline TransferOutcome execute_prepared(const PreparedInputs& p, const TransferJob& job,
                                        const GeneratorBackend& backend,
                                        const FeatureExtractor& extractor) {
  namespace fs = std::filesystem;
  fs::create_directories(job.out_dir);
  const RunConfig& cfg = job.config;
  TransferOutcome o;
  o.id = job.id;
  o.config_hash = cfg.hash();

  OptimizationConfig opt = cfg.optimizer;
  opt.seed = job_seed(cfg.optimizer.seed, job.id);

  SnapshotFn snapshot;
  if (opt.snapshot_every > 0) {
    const fs::path snap_dir = job.out_dir / "snapshots";
    fs::create_directories(snap_dir);
    snapshot = [snap_dir](int stage, int iter, const Image& img) {
      char name[64];
      std::snprintf(name, sizeof name, "stage%d_iter%05d.png", stage, iter);
      write_image((snap_dir / name).string(), img);
    };
  }

  RunResult run = run_two_stage(backend, extractor, p.transfer(), opt, snapshot);
  write_loss_csv(job.out_dir / "losses.csv", run.log);
  if (!run.log.empty()) o.final_losses = run.log.back().values;
  o.latent_distance = latent_distance(run.state, backend);
  write_image((job.out_dir / "synth.png").string(), run.synth);

  // Background: I1 with its foreground (inside the blend support) filled in.
  const BinaryMask hole = mask_and(mask_or(p.data.face1, p.data.hair1), p.blend_support);
  const Image background = inpaint_background(p.data.identity, hole, cfg, job.out_dir / "tmp");
  const int res = p.data.identity.dim(1);
  const double feather = cfg.blending.feather_sigma * res / 512.0;
  const Image result = soft_blend(run.synth, background, p.blend_support, feather);
  write_image((job.out_dir / "result.png").string(), result);

  o.psnr = psnr_masked(p.data.identity, result, p.face_target);
  o.ssim = ssim_masked(p.data.identity, result, p.face_target);
  const BinaryMask synth_hair =
      threshold_channel(run.synth, cfg.evaluation.hair_channel, cfg.evaluation.hair_threshold);
  o.hair_iou = hair_iou_eval(p.data.hair2, synth_hair);

  std::ofstream mj(job.out_dir / "metrics.json");
  mj << metrics_json(o, res).dump(2) << "\n";
  nlohmann::ordered_json jj;
  jj["id"] = job.id;
  jj["mode"] = to_string(job.mode);
  jj["seed"] = opt.seed;
  jj["config_hash"] = o.config_hash;
  jj["latent_distance"] = o.latent_distance;
  jj["erode_degenerate"] = p.erode_degenerate;
  std::ofstream jf(job.out_dir / "job.json");
  jf << jj.dump(2) << "\n";
  return o;
}

inline TransferOutcome execute(const TransferJob& job) {
  auto backend = make_backend(job.config);
  auto extractor = make_extractor(job.config);
  PreparedInputs p = prepare(job);
  return execute_prepared(p, job, *backend, *extractor);
}

struct BatchReport {
  std::vector<TransferOutcome> jobs;
  nlohmann::ordered_json summary;
};

/// Run manifest jobs with a bounded worker pool. Per-job outputs are
/// deterministic and independent of scheduling; rejected tuples are skipped;
/// failures are isolated per job.
inline BatchReport run_batch(const std::vector<TupleRecord>& manifest,
                             const std::filesystem::path& base_dir, const RunConfig& cfg,
                             const std::filesystem::path& out_root, int parallelism) {
  namespace fs = std::filesystem;
  std::vector<const TupleRecord*> todo;
  for (const TupleRecord& r : manifest)
    if (r.category != Category::Rejected) todo.push_back(&r);

  auto backend = make_backend(cfg);
  auto extractor = make_extractor(cfg);

  BatchReport report;
  report.jobs.resize(todo.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const TupleRecord& r = *todo[k];
      TransferJob job;
      job.id = r.id;
      job.base_dir = base_dir;
      job.tuple = r;
      job.config = cfg;
      job.out_dir = out_root / r.id;
      try {
        PreparedInputs p = prepare(job);
        report.jobs[k] = execute_prepared(p, job, *backend, *extractor);
      } catch (const std::exception& e) {
        report.jobs[k].id = r.id;
        report.jobs[k].failed = true;
        report.jobs[k].error = e.what();
      }
    }
  };
  const int workers = std::max(1, parallelism);
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  // per-category aggregates, manifest order
  nlohmann::ordered_json cats = nlohmann::ordered_json::object();
  for (const char* name : {"Easy", "Medium", "Difficult"}) {
    int count = 0, failed = 0;
    double psnr_s = 0, ssim_s = 0, iou_s = 0, lat_s = 0;
    for (size_t k = 0; k < todo.size(); ++k) {
      if (std::string(to_string(todo[k]->category)) != name) continue;
      ++count;
      if (report.jobs[k].failed) {
        ++failed;
        continue;
      }
      psnr_s += report.jobs[k].psnr;
      ssim_s += report.jobs[k].ssim;
      iou_s += report.jobs[k].hair_iou;
      lat_s += report.jobs[k].latent_distance;
    }
    const int ok = count - failed;
    nlohmann::ordered_json c;
    c["count"] = count;
    c["failed"] = failed;
    if (ok > 0) {
      c["mean_psnr"] = psnr_s / ok;
      c["mean_ssim"] = ssim_s / ok;
      c["mean_hair_iou"] = iou_s / ok;
      c["mean_latent_distance"] = lat_s / ok;
    }
    cats[name] = c;
  }
  nlohmann::ordered_json jobs = nlohmann::ordered_json::array();
  for (size_t k = 0; k < todo.size(); ++k) {
    const TransferOutcome& o = report.jobs[k];
    nlohmann::ordered_json j;
    j["id"] = o.id;
    j["category"] = to_string(todo[k]->category);
    j["failed"] = o.failed;
    if (o.failed) j["error"] = o.error;
    else {
      j["psnr"] = o.psnr;
      j["ssim"] = o.ssim;
      j["hair_iou"] = o.hair_iou;
      j["latent_distance"] = o.latent_distance;
    }
    jobs.push_back(j);
  }
  report.summary["jobs"] = jobs;
  report.summary["categories"] = cats;
  report.summary["config_hash"] = cfg.hash();
  fs::create_directories(out_root);
  std::ofstream out(out_root / "batch_report.json");
  out << report.summary.dump(2) << "\n";
  return report;
}

}  // namespace hairtx
