#pragma once

// Synthetic paired data: procedural clean images are padded, distorted with
// random degree-2 trajectories, and center-cropped back so the crop margin
// absorbs the warp displacement. The ground-truth curve and trajectory are
// re-expressed in cropped coordinates.

#include <cstdint>
#include <string>
#include <vector>

#include "rsrect/image.hpp"
#include "rsrect/motion.hpp"

namespace rsrect {

struct TrainSample {
  Image gs, rs;            // r x r crops
  VisibilityMask rs_mask;  // from the cropped RS image
  MotionCurve curve;       // r rows, cropped coordinates
  PolynomialTrajectory traj;
  uint64_t seed = 0;
};

// crop margin per side, scaling a 50-pixel margin at r = 256
int dataset_pad(int r);

// smooth positive RGB test image (low-frequency waves plus soft blobs),
// min intensity 1/255 so the zero-intensity mask rule never misfires;
// borders fade to near-black starting fade_from pixels in (content that a
// default-range warp can push out of frame must carry no energy, or the
// zero-filled samples make the round trip border-limited). fade_from < 0
// picks the depth a default-range motion needs at this size.
Image synth_clean_image(int size, uint64_t seed, double fade_from = -1.0);

// distorts a padded clean image with the seeded random trajectory and crops
// back to r x r; throws (naming the required size) if clean is undersized
TrainSample make_sample(const Image& clean_padded, int r, uint64_t motion_seed,
                        const MotionRanges& ranges);

// max |rs - rewarp(gs, curve)| over pixels whose bilinear footprint lies
// inside the crop; the sample invariant bounds this by 1e-6
double sample_reproduction_error(const TrainSample& s);

struct ManifestRecord {
  std::string gs_path, rs_path, motion_path;  // resolved against the manifest dir
  PolynomialTrajectory traj;
  uint64_t seed = 0;
};

// writes PNGs, motion CSVs, and manifest.jsonl under dir; returns the
// manifest path
std::string generate_dataset(const std::string& dir, int n_images, int n_motions, int r,
                             uint64_t seed, const MotionRanges& ranges);

std::vector<ManifestRecord> load_manifest(const std::string& path);

// re-reads one manifest record into a TrainSample (8-bit quantized images)
TrainSample load_sample(const ManifestRecord& rec, int r);

}  // namespace rsrect
