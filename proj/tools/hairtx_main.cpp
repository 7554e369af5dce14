// hairtx command line: hairstyle transfer by two-stage latent optimization.
//
// Subcommands:
//   curate     build a tuple manifest from a corpus directory
//   transfer   run one transfer (identity + shape ref + appearance ref)
//   edit       single-attribute edit (appearance or shape)
//   batch      run every non-rejected manifest tuple
//   evaluate   recompute the metrics report for a finished job directory
//   mkfixtures write a deterministic toy corpus (images, masks, landmarks)

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hairtx/config.hpp"
#include "hairtx/curation.hpp"
#include "hairtx/pipeline.hpp"
#include "hairtx/toydata.hpp"

namespace fs = std::filesystem;

namespace {

hairtx::RunConfig load_config(const std::string& path) {
  if (path.empty()) return hairtx::RunConfig{};
  return hairtx::RunConfig::from_file(path);
}

void echo_geometry(const hairtx::GeneratorBackend& b) {
  const auto& g = b.geometry();
  std::printf("generator geometry: L=%d D=%d output %dx%d, %zu noise maps\n", g.layers,
              g.latent_dim, g.resolution, g.resolution, g.noise_sides.size());
}

hairtx::TupleRecord tuple_from_paths(const std::string& identity, const std::string& shape,
                                     const std::string& appearance, const std::string& face_mask,
                                     const std::string& hair_mask, const std::string& shape_hair,
                                     const std::string& app_hair) {
  hairtx::TupleRecord r;
  r.id = fs::path(identity).stem().string() + "__" + fs::path(shape).stem().string() + "__" +
         fs::path(appearance).stem().string();
  r.identity = identity;
  r.shape = shape;
  r.appearance = appearance;
  r.identity_face = face_mask;
  r.identity_hair = hair_mask;
  r.shape_hair = shape_hair;
  r.appearance_hair = app_hair;
  return r;
}

int run_job(const hairtx::TransferJob& job) {
  auto backend = hairtx::make_backend(job.config);
  echo_geometry(*backend);
  auto extractor = hairtx::make_extractor(job.config);
  hairtx::PreparedInputs p = hairtx::prepare(job);
  hairtx::TransferOutcome o = hairtx::execute_prepared(p, job, *backend, *extractor);
  std::printf("job %s: psnr=%.3f ssim=%.4f hair_iou=%.4f latent_distance=%.4f\n", o.id.c_str(),
              o.psnr, o.ssim, o.hair_iou, o.latent_distance);
  std::printf("outputs in %s\n", job.out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hairstyle transfer by two-stage latent optimization"};
  app.require_subcommand(1);

  // curate
  auto* curate = app.add_subcommand("curate", "build a tuple manifest from a corpus directory");
  std::string data_dir, manifest_out = "manifest.jsonl";
  double min_hair = 0.18;
  bool include_rejected = false;
  curate->add_option("--data-dir", data_dir, "corpus directory")->required();
  curate->add_option("--out", manifest_out, "output manifest path (JSONL)");
  curate->add_option("--min-hair", min_hair, "minimum hair pixel fraction");
  curate->add_flag("--include-rejected", include_rejected, "keep rejected tuples in the manifest");

  // shared transfer/edit options
  std::string identity, shape, appearance, config_path, out_dir = "out";
  std::string face_mask, hair_mask, shape_hair, app_hair;
  auto add_tuple_opts = [&](CLI::App* cmd, bool need_shape, bool need_appearance) {
    cmd->add_option("--identity", identity, "identity portrait I1 (PNG)")->required();
    if (need_shape)
      cmd->add_option("--shape", shape, "hair shape/structure reference I2 (PNG)")->required();
    if (need_appearance)
      cmd->add_option("--appearance", appearance, "hair appearance reference I3 (PNG)")->required();
    cmd->add_option("--face-mask", face_mask, "I1 face mask (PNG)")->required();
    cmd->add_option("--hair-mask", hair_mask, "I1 hair mask (PNG)")->required();
    if (need_shape)
      cmd->add_option("--shape-hair-mask", shape_hair, "I2 hair mask (PNG)")->required();
    if (need_appearance)
      cmd->add_option("--appearance-hair-mask", app_hair, "I3 hair mask (PNG)")->required();
    cmd->add_option("--config", config_path, "run config file (INI sections)");
    cmd->add_option("--out-dir", out_dir, "output directory");
  };

  auto* transfer = app.add_subcommand("transfer", "full hairstyle transfer");
  add_tuple_opts(transfer, true, true);

  auto* edit = app.add_subcommand("edit", "single-attribute edit");
  std::string mode;
  edit->add_option("--mode", mode, "appearance | shape")->required();
  add_tuple_opts(edit, true, true);

  // batch
  auto* batch = app.add_subcommand("batch", "run every non-rejected manifest tuple");
  std::string manifest_path, batch_out = "batch-out";
  int jobs = 1;
  batch->add_option("--manifest", manifest_path, "manifest JSONL")->required();
  batch->add_option("--config", config_path, "run config file");
  batch->add_option("--out-dir", batch_out, "output root");
  batch->add_option("--jobs", jobs, "worker parallelism");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "recompute metrics for a finished job dir");
  std::string job_dir, eval_out;
  evaluate->add_option("--job-dir", job_dir, "job output directory")->required();
  evaluate->add_option("--identity", identity, "identity portrait I1 (PNG)")->required();
  evaluate->add_option("--face-mask", face_mask, "I1 face mask (PNG)")->required();
  evaluate->add_option("--shape-hair-mask", shape_hair, "target hair mask M^h2 (PNG)")->required();
  evaluate->add_option("--synth-hair-mask", app_hair,
                       "externally segmented hair mask of the synthesized image (PNG); "
                       "defaults to thresholding the toy hair channel");
  evaluate->add_option("--config", config_path, "run config file");
  evaluate->add_option("--out", eval_out, "metrics output path (default: <job-dir>/metrics.json)");

  // mkfixtures
  auto* mkfix = app.add_subcommand("mkfixtures", "write a deterministic toy corpus");
  std::string fix_dir;
  int fix_count = 6, fix_res = 32;
  std::uint64_t fix_seed = 7;
  mkfix->add_option("--out-dir", fix_dir, "corpus directory")->required();
  mkfix->add_option("--count", fix_count, "number of portraits");
  mkfix->add_option("--seed", fix_seed, "generation seed");
  mkfix->add_option("--resolution", fix_res, "image side in pixels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*curate) {
      hairtx::ManifestConstraints cons;
      cons.min_hair_fraction = min_hair;
      cons.include_rejected = include_rejected;
      auto records = hairtx::build_manifest(data_dir, cons);
      hairtx::write_manifest(manifest_out, records);
      std::printf("wrote %zu tuples to %s\n", records.size(), manifest_out.c_str());
      return 0;
    }
    if (*transfer || *edit) {
      hairtx::TransferJob job;
      job.config = load_config(config_path);
      job.tuple = tuple_from_paths(identity, shape, appearance, face_mask, hair_mask, shape_hair,
                                   app_hair);
      job.id = job.tuple.id;
      job.base_dir = ".";
      job.out_dir = out_dir;
      if (*edit) {
        if (mode == "appearance") job.mode = hairtx::EditMode::AppearanceOnly;
        else if (mode == "shape") job.mode = hairtx::EditMode::ShapeOnly;
        else throw hairtx::ConfigError("edit --mode must be 'appearance' or 'shape'");
      }
      return run_job(job);
    }
    if (*batch) {
      hairtx::RunConfig cfg = load_config(config_path);
      auto records = hairtx::load_manifest(manifest_path);
      const fs::path base = fs::path(manifest_path).parent_path();
      auto backend = hairtx::make_backend(cfg);
      echo_geometry(*backend);
      hairtx::BatchReport rep = hairtx::run_batch(records, base, cfg, batch_out, jobs);
      int failed = 0;
      for (const auto& j : rep.jobs) failed += j.failed ? 1 : 0;
      std::printf("batch: %zu jobs, %d failed; report at %s\n", rep.jobs.size(), failed,
                  (fs::path(batch_out) / "batch_report.json").string().c_str());
      return failed == 0 ? 0 : 1;
    }
    if (*evaluate) {
      hairtx::RunConfig cfg = load_config(config_path);
      const hairtx::Image id_img = hairtx::read_image(identity);
      const hairtx::Image result = hairtx::read_image((fs::path(job_dir) / "result.png").string());
      const hairtx::Image synth = hairtx::read_image((fs::path(job_dir) / "synth.png").string());
      const hairtx::BinaryMask face = hairtx::read_mask(face_mask);
      const hairtx::BinaryMask hair2 = hairtx::read_mask(shape_hair);
      const auto dil = hairtx::dilate(hair2, cfg.masks.dilate_amount).mask;
      const hairtx::BinaryMask target = hairtx::face_target_mask(face, dil);
      hairtx::TransferOutcome o;
      std::ifstream jf(fs::path(job_dir) / "job.json");
      if (jf) {
        nlohmann::json jj;
        jf >> jj;
        o.id = jj.value("id", std::string("job"));
        o.latent_distance = jj.value("latent_distance", 0.0);
      }
      o.config_hash = cfg.hash();
      o.psnr = hairtx::psnr_masked(id_img, result, target);
      o.ssim = hairtx::ssim_masked(id_img, result, target);
      const hairtx::BinaryMask synth_hair =
          app_hair.empty() ? hairtx::threshold_channel(synth, cfg.evaluation.hair_channel,
                                                       cfg.evaluation.hair_threshold)
                           : hairtx::read_mask(app_hair);
      o.hair_iou = hairtx::hair_iou_eval(hair2, synth_hair);
      const std::string out_path =
          eval_out.empty() ? (fs::path(job_dir) / "metrics.json").string() : eval_out;
      std::ofstream out(out_path);
      out << hairtx::metrics_json(o, id_img.dim(1)).dump(2) << "\n";
      std::printf("wrote %s\n", out_path.c_str());
      return 0;
    }
    if (*mkfix) {
      hairtx::write_toy_corpus(fix_dir, fix_count, fix_seed, fix_res);
      std::printf("wrote %d portraits to %s\n", fix_count, fix_dir.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
