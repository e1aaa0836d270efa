// Command-line surface: gendata, distort, rectify, pretrain, train,
// gradcheck, eval. Configuration is defaults -> RSRECT_CONFIG file ->
// --config file -> flags. Angles are degrees here, radians inside.
//
// Exit codes: 0 ok; 1 operation failed; 2 non-square input without --crop;
// 3 checkpoint/input size mismatch; 4 missing input path; 5 malformed input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsrect/common.hpp"
#include "rsrect/config.hpp"
#include "rsrect/dataset.hpp"
#include "rsrect/gradcheck.hpp"
#include "rsrect/png_io.hpp"
#include "rsrect/rectifier.hpp"
#include "rsrect/train.hpp"
#include "rsrect/warp.hpp"

namespace {

constexpr double kPi = 3.14159265358979323846;

int fail(int code, const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  return code;
}

bool file_exists(const std::string& p) { return std::filesystem::exists(p); }

struct CommonArgs {
  rsrect::RunConfig cfg;
};

rsrect::Image load_input_png(const std::string& path, int& err) {
  if (!file_exists(path)) {
    err = fail(4, "input not found: " + path);
    return {};
  }
  try {
    rsrect::Image img = rsrect::load_png(path);
    err = 0;
    return img;
  } catch (const std::exception& e) {
    err = fail(5, std::string("cannot read ") + path + ": " + e.what());
    return {};
  }
}

int make_square(rsrect::Image& img, bool crop) {
  if (img.square()) return 0;
  if (!crop) return fail(2, "input is not square; pass --crop to center-crop");
  int s = std::min(img.height, img.width);
  img = rsrect::center_crop(img, s, s);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_gendata(const rsrect::RunConfig& cfg, int images, int motions) {
  try {
    std::string manifest =
        rsrect::generate_dataset(cfg.dataset_dir, images, motions, cfg.r, cfg.seed, cfg.ranges);
    uint64_t h = rsrect::fnv1a64_file(manifest);
    std::printf("manifest=%s\n", manifest.c_str());
    std::printf("records=%d\n", images * motions);
    std::printf("manifest_hash=%016llx\n", (unsigned long long)h);
    return 0;
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}

int cmd_distort(const rsrect::RunConfig& cfg, const std::string& input,
                const std::string& motion_csv, bool use_random, uint64_t random_seed, bool crop,
                const std::string& prefix) {
  int err = 0;
  rsrect::Image gs = load_input_png(input, err);
  if (err) return err;
  if (int rc = make_square(gs, crop)) return rc;

  rsrect::MotionCurve curve;
  if (!motion_csv.empty()) {
    if (!file_exists(motion_csv)) return fail(4, "motion file not found: " + motion_csv);
    try {
      curve = rsrect::load_motion_csv(motion_csv);
    } catch (const std::exception& e) {
      return fail(5, e.what());
    }
    if (curve.rows() != gs.height) {
      return fail(5, "motion rows (" + std::to_string(curve.rows()) + ") do not match image height (" +
                         std::to_string(gs.height) + ")");
    }
  } else if (use_random) {
    curve = rsrect::eval_trajectory(rsrect::random_trajectory(random_seed, cfg.ranges), gs.height);
  } else {
    return fail(1, "distort needs --motion or --random");
  }

  try {
    rsrect::WarpResult res = rsrect::warp_rs_from_gs(gs, curve);
    rsrect::save_png(prefix + "_rs.png", res.image);
    rsrect::save_png(prefix + "_mask.png", rsrect::mask_to_image(res.mask));
    rsrect::save_motion_csv(prefix + "_motion.csv", curve);
    std::printf("rs=%s_rs.png\nmask=%s_mask.png\nmotion=%s_motion.csv\n", prefix.c_str(),
                prefix.c_str(), prefix.c_str());
    return 0;
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}

int cmd_rectify(const rsrect::RunConfig& cfg, const std::string& input,
                const std::string& motion_csv, const std::string& model_path, bool crop,
                const std::string& prefix, const std::string& reference) {
  int err = 0;
  rsrect::Image rs = load_input_png(input, err);
  if (err) return err;
  if (int rc = make_square(rs, crop)) return rc;

  rsrect::Image rect;
  rsrect::VisibilityMask mask;
  try {
    if (!model_path.empty()) {
      if (!file_exists(model_path)) return fail(4, "checkpoint not found: " + model_path);
      rsrect::ModelParams<float> model;
      try {
        model = rsrect::checkpoint_load<float>(model_path);
      } catch (const std::exception& e) {
        return fail(5, e.what());
      }
      if (model.r != rs.height) {
        return fail(3, "checkpoint was trained at r=" + std::to_string(model.r) +
                           " but the input is " + std::to_string(rs.height) + "x" +
                           std::to_string(rs.width));
      }
      rsrect::InferenceResult inf =
          rsrect::rectify_with_model(model, rs, cfg.smooth_trajectory, cfg.degree);
      rect = std::move(inf.rect);
      mask = std::move(inf.mask);
      rsrect::save_motion_csv(prefix + "_motion_pred.csv", inf.curve);
      std::printf("motion_pred=%s_motion_pred.csv\n", prefix.c_str());
    } else if (!motion_csv.empty()) {
      if (!file_exists(motion_csv)) return fail(4, "motion file not found: " + motion_csv);
      rsrect::MotionCurve curve;
      try {
        curve = rsrect::load_motion_csv(motion_csv);
      } catch (const std::exception& e) {
        return fail(5, e.what());
      }
      if (curve.rows() != rs.height) {
        return fail(5, "motion rows do not match image height");
      }
      rsrect::RowMapResult rm = rsrect::row_map_fixed_point(curve, rs.height);
      rsrect::WarpResult res = rsrect::rectify_ts(rs, curve, rm);
      rect = std::move(res.image);
      mask = std::move(res.mask);
    } else {
      return fail(1, "rectify needs --motion or --model");
    }
    rsrect::save_png(prefix + "_rect.png", rect);
    rsrect::save_png(prefix + "_mask.png", rsrect::mask_to_image(mask));
    std::printf("rect=%s_rect.png\nmask=%s_mask.png\n", prefix.c_str(), prefix.c_str());
    if (!reference.empty()) {
      rsrect::Image ref = load_input_png(reference, err);
      if (err) return err;
      if (!ref.same_shape(rect)) return fail(5, "reference shape does not match the output");
      double psnr = rsrect::psnr_masked(rect, ref, mask);
      std::printf("psnr_db=%.4f\n", psnr);
    }
    return 0;
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}

int load_samples_checked(const rsrect::RunConfig& cfg, const std::string& manifest, int limit,
                         std::vector<rsrect::TrainSample>& out, int& r) {
  if (!file_exists(manifest)) return fail(4, "manifest not found: " + manifest);
  std::vector<rsrect::ManifestRecord> records;
  try {
    records = rsrect::load_manifest(manifest);
  } catch (const std::exception& e) {
    return fail(5, e.what());
  }
  if (records.empty()) return fail(5, "manifest has no records: " + manifest);
  if (limit > 0 && int(records.size()) > limit) records.resize(size_t(limit));
  r = cfg.r;
  try {
    rsrect::Image probe = rsrect::load_png(records[0].gs_path);
    r = probe.height;
  } catch (const std::exception& e) {
    return fail(5, e.what());
  }
  out.clear();
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (!file_exists(rec.gs_path) || !file_exists(rec.rs_path) || !file_exists(rec.motion_path)) {
      return fail(4, "manifest references a missing file near " + rec.rs_path);
    }
    try {
      out.push_back(rsrect::load_sample(rec, r));
    } catch (const std::exception& e) {
      return fail(5, e.what());
    }
  }
  return 0;
}

int cmd_pretrain(const rsrect::RunConfig& cfg, const std::string& manifest, int limit,
                 const std::string& init_ckpt) {
  std::vector<rsrect::TrainSample> samples;
  int r = cfg.r;
  if (int rc = load_samples_checked(cfg, manifest, limit, samples, r)) return rc;

  rsrect::ModelParams<float> model;
  if (!init_ckpt.empty()) {
    if (!file_exists(init_ckpt)) return fail(4, "checkpoint not found: " + init_ckpt);
    try {
      model = rsrect::checkpoint_load<float>(init_ckpt);
    } catch (const std::exception& e) {
      return fail(5, e.what());
    }
    if (model.r != r) return fail(3, "checkpoint r does not match the dataset");
  } else {
    model = rsrect::ModelParams<float>::create(r, cfg.seed);
  }

  rsrect::PretrainConfig pcfg;
  pcfg.epochs = cfg.epochs;
  pcfg.batch = cfg.batch;
  pcfg.adam = cfg.adam;
  pcfg.seed = cfg.seed;
  try {
    rsrect::PretrainStats stats = rsrect::pretrain_motion(model, samples, pcfg);
    rsrect::checkpoint_save(cfg.checkpoint, model);
    std::printf("samples=%zu\nepochs=%d\n", samples.size(), pcfg.epochs);
    std::printf("initial_loss=%.9g\nfinal_loss=%.9g\n", stats.initial_loss, stats.final_loss);
    std::printf("reduction=%.4f\n", stats.initial_loss > 0.0
                                        ? 1.0 - stats.final_loss / stats.initial_loss
                                        : 0.0);
    std::printf("checkpoint=%s\n", cfg.checkpoint.c_str());
    return 0;
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}

int cmd_train(const rsrect::RunConfig& cfg, const std::string& manifest, int limit,
              const std::string& init_ckpt, const std::string& metrics,
              double stop_at_reduction) {
  std::vector<rsrect::TrainSample> samples;
  int r = cfg.r;
  if (int rc = load_samples_checked(cfg, manifest, limit, samples, r)) return rc;

  rsrect::ModelParams<float> model;
  if (!init_ckpt.empty()) {
    if (!file_exists(init_ckpt)) return fail(4, "checkpoint not found: " + init_ckpt);
    try {
      model = rsrect::checkpoint_load<float>(init_ckpt);
    } catch (const std::exception& e) {
      return fail(5, e.what());
    }
    if (model.r != r) return fail(3, "checkpoint r does not match the dataset");
  } else {
    model = rsrect::ModelParams<float>::create(r, cfg.seed);
  }

  rsrect::TrainConfig tcfg;
  tcfg.epochs = cfg.epochs;
  tcfg.batch = cfg.batch;
  tcfg.adam = cfg.adam;
  tcfg.weights = cfg.weights;
  tcfg.smooth_trajectory = cfg.smooth_trajectory;
  tcfg.traj_degree = cfg.degree;
  tcfg.seed = cfg.seed;
  tcfg.metrics_path = metrics;
  tcfg.checkpoint_path = cfg.checkpoint;
  tcfg.stop_at_reduction = stop_at_reduction;
  try {
    rsrect::TrainStats stats = rsrect::train_end_to_end(model, samples, tcfg);
    rsrect::checkpoint_save(cfg.checkpoint, model);
    std::printf("samples=%zu\nepochs_run=%d\n", samples.size(), stats.epochs_run);
    std::printf("initial_total=%.9g\nfinal_total=%.9g\n", stats.initial_total, stats.final_total);
    std::printf("checkpoint=%s\n", cfg.checkpoint.c_str());
    if (!metrics.empty()) std::printf("metrics=%s\n", metrics.c_str());
    return 0;
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
}

int cmd_gradcheck(const rsrect::RunConfig& cfg, const std::string& precision) {
  std::vector<rsrect::GradCheckResult> results;
  try {
    if (precision == "f32" || precision == "both") {
      auto r32 = rsrect::run_gradcheck_suite<float>(cfg.seed);
      results.insert(results.end(), r32.begin(), r32.end());
    }
    if (precision == "f64" || precision == "both") {
      auto r64 = rsrect::run_gradcheck_suite<double>(cfg.seed);
      results.insert(results.end(), r64.begin(), r64.end());
    }
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  if (results.empty()) return fail(1, "unknown precision: " + precision + " (f32|f64|both)");
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-24s rel_err=%-12.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err, r.tol,
                r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("gradcheck=%s\n", all_pass ? "pass" : "fail");
  return all_pass ? 0 : 1;
}

int cmd_eval(const rsrect::RunConfig& cfg, const std::string& manifest, int limit,
             const std::string& model_path) {
  if (!file_exists(manifest)) return fail(4, "manifest not found: " + manifest);
  std::vector<rsrect::ManifestRecord> records;
  try {
    records = rsrect::load_manifest(manifest);
  } catch (const std::exception& e) {
    return fail(5, e.what());
  }
  if (records.empty()) return fail(5, "manifest has no records");
  if (limit > 0 && int(records.size()) > limit) records.resize(size_t(limit));

  rsrect::ModelParams<float> model;
  bool use_model = !model_path.empty();
  if (use_model) {
    if (!file_exists(model_path)) return fail(4, "checkpoint not found: " + model_path);
    try {
      model = rsrect::checkpoint_load<float>(model_path);
    } catch (const std::exception& e) {
      return fail(5, e.what());
    }
  }

  double sum = 0.0;
  int count = 0;
  try {
    for (const auto& rec : records) {
      rsrect::Image rs = rsrect::load_png(rec.rs_path);
      rsrect::Image gs = rsrect::load_png(rec.gs_path);
      rsrect::Image rect;
      rsrect::VisibilityMask mask;
      if (use_model) {
        if (model.r != rs.height) return fail(3, "checkpoint r does not match the dataset");
        rsrect::InferenceResult inf =
            rsrect::rectify_with_model(model, rs, cfg.smooth_trajectory, cfg.degree);
        rect = std::move(inf.rect);
        mask = std::move(inf.mask);
      } else {
        rsrect::MotionCurve curve = rsrect::load_motion_csv(rec.motion_path);
        rsrect::RowMapResult rm = rsrect::row_map_fixed_point(curve, rs.height);
        rsrect::WarpResult res = rsrect::rectify_ts(rs, curve, rm);
        rect = std::move(res.image);
        mask = std::move(res.mask);
      }
      double psnr = rsrect::psnr_masked(rect, gs, mask);
      std::printf("sample=%d psnr_db=%.4f\n", count, psnr);
      sum += psnr;
      ++count;
    }
  } catch (const std::exception& e) {
    return fail(5, e.what());
  }
  std::printf("mean_psnr_db=%.4f\n", sum / double(count));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  rsrect::RunConfig base;
  try {
    if (const char* env = std::getenv(rsrect::config_env_var())) {
      base = rsrect::load_config(env, base);
    }
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::strcmp(argv[i], "--config") == 0) base = rsrect::load_config(argv[i + 1], base);
    }
  } catch (const std::exception& e) {
    return fail(5, e.what());
  }

  CLI::App app{"rolling-shutter distortion / rectification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (applied before other flags)");
  int threads = base.threads;
  app.add_option("--threads", threads, "cap worker threads (0 = hardware)");
  int r = base.r;
  app.add_option("--r", r, "working image size");
  uint64_t seed = base.seed;
  app.add_option("--seed", seed, "master seed");
  double max_tx = base.ranges.max_tx_px;
  app.add_option("--max-tx", max_tx, "motion range: |t_x| bound, pixels");
  double max_rz_deg = base.ranges.max_rz_rad * 180.0 / kPi;
  app.add_option("--max-rz-deg", max_rz_deg, "motion range: |r_z| bound, degrees");

  auto* gendata = app.add_subcommand("gendata", "generate a synthetic paired dataset");
  int gd_images = 5, gd_motions = 10;
  std::string gd_out = base.dataset_dir;
  gendata->add_option("--images", gd_images, "number of clean images");
  gendata->add_option("--motions", gd_motions, "motions per image");
  gendata->add_option("--out", gd_out, "output directory");

  auto* distort = app.add_subcommand("distort", "apply row motion to a clean image");
  std::string di_input, di_motion, di_prefix = "out";
  bool di_random = false, di_crop = false;
  uint64_t di_seed = 0;
  distort->add_option("input", di_input, "clean PNG")->required();
  distort->add_option("--motion", di_motion, "motion CSV to apply");
  distort->add_flag("--random", di_random, "synthesize a random trajectory (uses --random-seed)");
  distort->add_option("--random-seed", di_seed, "seed for --random");
  distort->add_flag("--crop", di_crop, "center-crop non-square inputs");
  distort->add_option("--out-prefix", di_prefix, "output path prefix");

  auto* rectify = app.add_subcommand("rectify", "undo row motion (analytic or learned)");
  std::string re_input, re_motion, re_model, re_prefix = "out", re_reference;
  bool re_crop = false;
  rectify->add_option("input", re_input, "distorted PNG")->required();
  rectify->add_option("--motion", re_motion, "known motion CSV (analytic path)");
  rectify->add_option("--model", re_model, "checkpoint (learned path)");
  rectify->add_flag("--crop", re_crop, "center-crop non-square inputs");
  rectify->add_option("--out-prefix", re_prefix, "output path prefix");
  rectify->add_option("--reference", re_reference, "clean PNG; prints masked PSNR against it");

  auto* pretrain = app.add_subcommand("pretrain", "motion-regression pretraining");
  std::string pt_manifest, pt_init;
  int pt_limit = 50;
  pretrain->add_option("--manifest", pt_manifest, "dataset manifest")->required();
  pretrain->add_option("--limit", pt_limit, "max samples (0 = all)");
  pretrain->add_option("--init-checkpoint", pt_init, "start from this checkpoint");

  auto* train = app.add_subcommand("train", "end-to-end training");
  std::string tr_manifest, tr_init, tr_metrics;
  int tr_limit = 0;
  double tr_stop = 0.0;
  bool tr_no_smooth = false;
  train->add_option("--manifest", tr_manifest, "dataset manifest")->required();
  train->add_option("--limit", tr_limit, "max samples (0 = all)");
  train->add_option("--init-checkpoint", tr_init, "start from this checkpoint");
  train->add_option("--metrics", tr_metrics, "per-step metrics CSV path");
  train->add_option("--stop-at-reduction", tr_stop,
                    "stop once epoch loss has dropped by this fraction (0 = off)");
  train->add_flag("--no-smooth", tr_no_smooth, "disable trajectory smoothing");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::string gc_precision = "both";
  gradcheck->add_option("--precision", gc_precision, "f32, f64, or both");

  auto* evalc = app.add_subcommand("eval", "masked PSNR over a manifest");
  std::string ev_manifest, ev_model;
  int ev_limit = 0;
  evalc->add_option("--manifest", ev_manifest, "dataset manifest")->required();
  evalc->add_option("--model", ev_model, "checkpoint (default: analytic with stored motion)");
  evalc->add_option("--limit", ev_limit, "max records (0 = all)");

  // shared training knobs
  int epochs = base.epochs, batch = base.batch;
  double lr = base.adam.lr;
  std::string ckpt = base.checkpoint;
  for (CLI::App* sub : {pretrain, train}) {
    sub->add_option("--epochs", epochs, "training epochs");
    sub->add_option("--batch", batch, "batch size");
    sub->add_option("--lr", lr, "ADAM learning rate");
    sub->add_option("--checkpoint", ckpt, "output checkpoint path");
  }

  CLI11_PARSE(app, argc, argv);

  rsrect::RunConfig cfg = base;
  cfg.r = r;
  cfg.seed = seed;
  cfg.ranges.max_tx_px = max_tx;
  cfg.ranges.max_rz_rad = max_rz_deg * kPi / 180.0;
  cfg.threads = threads;
  cfg.epochs = epochs;
  cfg.batch = batch;
  cfg.adam.lr = lr;
  cfg.checkpoint = ckpt;
  cfg.dataset_dir = gd_out;
  if (tr_no_smooth) cfg.smooth_trajectory = false;
  if (cfg.threads > 0) rsrect::set_max_threads(cfg.threads);

  if (gendata->parsed()) return cmd_gendata(cfg, gd_images, gd_motions);
  if (distort->parsed()) {
    return cmd_distort(cfg, di_input, di_motion, di_random, di_seed, di_crop, di_prefix);
  }
  if (rectify->parsed()) {
    return cmd_rectify(cfg, re_input, re_motion, re_model, re_crop, re_prefix, re_reference);
  }
  if (pretrain->parsed()) return cmd_pretrain(cfg, pt_manifest, pt_limit, pt_init);
  if (train->parsed()) return cmd_train(cfg, tr_manifest, tr_limit, tr_init, tr_metrics, tr_stop);
  if (gradcheck->parsed()) return cmd_gradcheck(cfg, gc_precision);
  if (evalc->parsed()) return cmd_eval(cfg, ev_manifest, ev_limit, ev_model);
  return fail(1, "no subcommand");
}
