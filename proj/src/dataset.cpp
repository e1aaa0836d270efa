#include "rsrect/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "rsrect/common.hpp"
#include "rsrect/png_io.hpp"
#include "rsrect/warp.hpp"

namespace rsrect {

int dataset_pad(int r) { return int((int64_t(r) * 50 + 255) / 256); }

Image synth_clean_image(int size, uint64_t seed, double fade_from) {
  if (size < 4) throw std::invalid_argument("synth_clean_image: size too small");
  Rng rng(mix_seed(seed, 0x696d67));
  const double pi = 3.14159265358979323846;

  // low-frequency plane waves, shared geometry with per-channel phase
  struct Wave {
    double fx, fy, phase[3], amp;
  };
  Wave waves[3];
  for (auto& wv : waves) {
    // wavelength floor in absolute pixels: content sharper than ~18 px does
    // not survive two bilinear resamplings, so the warp/rectify round trip
    // would be texture-limited rather than implementation-limited
    double wavelen = rng.uniform(18.0, 18.0 + double(size) / 2.0);
    double ang = rng.uniform(0.0, 2.0 * pi);
    wv.fx = std::cos(ang) * 2.0 * pi / wavelen;
    wv.fy = std::sin(ang) * 2.0 * pi / wavelen;
    for (double& p : wv.phase) p = rng.uniform(0.0, 2.0 * pi);
    wv.amp = rng.uniform(0.08, 0.18);
  }
  // soft radial blobs, shared across channels with per-channel gain
  struct Blob {
    double ci, cj, sigma, gain[3];
  };
  Blob blobs[6];
  for (auto& b : blobs) {
    b.ci = rng.uniform(0.0, double(size - 1));
    b.cj = rng.uniform(0.0, double(size - 1));
    b.sigma = rng.uniform(std::max(4.0, double(size) / 16.0), double(size) / 5.0);
    double g = rng.uniform(-0.35, 0.35);
    for (double& o : b.gain) o = g * rng.uniform(0.6, 1.4);
  }
  // fade to near-black over the band a default-range motion can displace:
  // out-of-frame samples are zero-filled, so border content that is not
  // dark cannot be reproduced by a warp/rectify round trip
  if (fade_from < 0.0) {
    MotionRanges ranges;
    fade_from =
        std::ceil(ranges.max_tx_px + std::sin(ranges.max_rz_rad) * double(size) / 2.0) + 2.0;
  }
  double ramp = 8.0;
  auto fade = [&](double d) {
    double t = std::clamp((d - fade_from) / ramp, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
  };

  Image img(size, size, 3);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      double d = double(std::min(std::min(i, size - 1 - i), std::min(j, size - 1 - j)));
      double w = fade(d);
      for (int k = 0; k < 3; ++k) {
        double v = 0.5;
        for (const auto& wv : waves) {
          v += wv.amp * std::cos(wv.fx * i + wv.fy * j + wv.phase[k]);
        }
        for (const auto& b : blobs) {
          double di = i - b.ci, dj = j - b.cj;
          v += b.gain[k] * std::exp(-(di * di + dj * dj) / (2.0 * b.sigma * b.sigma));
        }
        img.at(i, j, k) = float(std::clamp(0.02 + w * (v - 0.02), 1.0 / 255.0, 1.0));
      }
    }
  }
  return img;
}

TrainSample make_sample(const Image& clean_padded, int r, uint64_t motion_seed,
                        const MotionRanges& ranges) {
  clean_padded.validate();
  int p = dataset_pad(r);
  int R = r + 2 * p;
  if (clean_padded.height < R || clean_padded.width < R) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "make_sample: clean image must be at least %dx%d", R, R);
    throw std::invalid_argument(buf);
  }
  Image padded = clean_padded.height == R && clean_padded.width == R
                     ? clean_padded
                     : center_crop(clean_padded, R, R);

  TrainSample s;
  s.seed = motion_seed;
  PolynomialTrajectory traj_pad = random_trajectory(motion_seed, ranges);
  MotionCurve curve_pad = eval_trajectory(traj_pad, R);
  WarpResult rs_pad = warp_rs_from_gs(padded, curve_pad);

  s.gs = center_crop(padded, r, r);
  s.rs = center_crop(rs_pad.image, r, r);
  s.rs_mask = mask_from_image(s.rs);
  // centered coordinates are preserved by the symmetric crop, so cropped
  // row i carries the motion of padded row i+p
  s.curve = MotionCurve(r);
  for (int i = 0; i < r; ++i) {
    s.curve.t_x[size_t(i)] = curve_pad.t_x[size_t(i + p)];
    s.curve.r_z[size_t(i)] = curve_pad.r_z[size_t(i + p)];
  }
  s.traj = reparam_affine(traj_pad, double(p) / double(R - 1), double(r - 1) / double(R - 1));
  return s;
}

double sample_reproduction_error(const TrainSample& s) {
  int r = s.gs.height;
  WarpResult rewarp = warp_rs_from_gs(s.gs, s.curve);
  double c = center_offset(r);
  double worst = 0.0;
  for (int i = 0; i < r; ++i) {
    double tx = s.curve.t_x[size_t(i)];
    double rz = s.curve.r_z[size_t(i)];
    for (int j = 0; j < r; ++j) {
      PixelCoord p_rs{double(i) - c, double(j) - c};
      PixelCoord p_gs = row_motion_inverse(p_rs, tx, rz);
      double u = p_gs.x + c, v = p_gs.y + c;
      // footprint strictly inside the crop, so both warps see the same taps
      if (u < 0.0 || v < 0.0 || std::floor(u) + 1 > double(r - 1) ||
          std::floor(v) + 1 > double(r - 1)) {
        continue;
      }
      for (int k = 0; k < s.gs.channels; ++k) {
        worst = std::max(worst, std::abs(double(rewarp.image.at(i, j, k)) -
                                         double(s.rs.at(i, j, k))));
      }
    }
  }
  return worst;
}

std::string generate_dataset(const std::string& dir, int n_images, int n_motions, int r,
                             uint64_t seed, const MotionRanges& ranges) {
  if (n_images < 1 || n_motions < 1) {
    throw std::invalid_argument("generate_dataset: counts must be positive");
  }
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  int p = dataset_pad(r);
  int R = r + 2 * p;
  std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  std::ofstream manifest(manifest_path, std::ios::binary);  // LF line ends everywhere
  if (!manifest) throw std::runtime_error("cannot write manifest: " + manifest_path);

  // the fade must clear the crop: measured from the crop border, content a
  // warp can displace out of the r x r frame (reach: |t_x| plus rotation at
  // the crop corner) has to stay dark
  double fade_from =
      double(p) +
      std::ceil(ranges.max_tx_px + std::sin(ranges.max_rz_rad) * double(r) * 0.7072) + 3.0;
  char name[128];
  for (int im = 0; im < n_images; ++im) {
    Image clean = synth_clean_image(R, mix_seed(seed, 0x636c65616e, uint64_t(im)), fade_from);
    std::string gs_name;
    for (int mo = 0; mo < n_motions; ++mo) {
      uint64_t motion_seed = mix_seed(seed, uint64_t(im), uint64_t(mo));
      TrainSample s = make_sample(clean, r, motion_seed, ranges);
      if (sample_reproduction_error(s) > 1e-6) {
        throw std::runtime_error("generate_dataset: sample failed its reproduction invariant");
      }
      if (mo == 0) {
        std::snprintf(name, sizeof(name), "img%03d_gs.png", im);
        gs_name = name;
        save_png((fs::path(dir) / gs_name).string(), s.gs);
      }
      std::snprintf(name, sizeof(name), "img%03d_m%03d_rs.png", im, mo);
      std::string rs_name = name;
      save_png((fs::path(dir) / rs_name).string(), s.rs);
      std::snprintf(name, sizeof(name), "img%03d_m%03d_motion.csv", im, mo);
      std::string motion_name = name;
      save_motion_csv((fs::path(dir) / motion_name).string(), s.curve);

      nlohmann::json rec;
      rec["gs"] = gs_name;
      rec["rs"] = rs_name;
      rec["motion"] = motion_name;
      rec["trajectory"] = nlohmann::json::parse(trajectory_to_json(s.traj));
      rec["seed"] = motion_seed;
      manifest << rec.dump() << "\n";
    }
  }
  manifest.close();
  return manifest_path;
}

std::vector<ManifestRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  namespace fs = std::filesystem;
  fs::path base = fs::path(path).parent_path();
  std::vector<ManifestRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      ManifestRecord m;
      m.gs_path = (base / rec.at("gs").get<std::string>()).string();
      m.rs_path = (base / rec.at("rs").get<std::string>()).string();
      m.motion_path = (base / rec.at("motion").get<std::string>()).string();
      m.traj = trajectory_from_json(rec.at("trajectory").dump());
      m.seed = rec.at("seed").get<uint64_t>();
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

TrainSample load_sample(const ManifestRecord& rec, int r) {
  TrainSample s;
  s.gs = load_png(rec.gs_path);
  s.rs = load_png(rec.rs_path);
  if (s.gs.height != r || s.gs.width != r || !s.rs.same_shape(s.gs)) {
    throw std::runtime_error("load_sample: image size mismatch in " + rec.gs_path);
  }
  s.rs_mask = mask_from_image(s.rs);
  s.curve = load_motion_csv(rec.motion_path);
  if (s.curve.rows() != r) {
    throw std::runtime_error("load_sample: motion rows mismatch in " + rec.motion_path);
  }
  s.traj = rec.traj;
  s.seed = rec.seed;
  return s;
}

}  // namespace rsrect
