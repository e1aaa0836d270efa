#pragma once

// Per-row camera motion: a translation t_x (pixels, along the scanline
// axis) and an in-plane rotation r_z (radians) for every row, plus the
// polynomial trajectories the curves are fitted to / synthesized from.
// Trajectories are parameterized over the normalized row s = i/(r-1);
// raw row indices make the cubic normal equations ill-conditioned.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rsrect {

struct MotionCurve {
  std::vector<double> t_x;  // pixels
  std::vector<double> r_z;  // radians

  MotionCurve() = default;
  explicit MotionCurve(int rows) : t_x(rows, 0.0), r_z(rows, 0.0) {}

  int rows() const { return int(t_x.size()); }
  bool zero() const;
  void validate() const;  // equal lengths, finite entries
};

struct PolynomialTrajectory {
  int degree = 2;  // 2 (synthesis) or 3 (fitting)
  std::array<double, 4> coeffs_tx{};  // ascending powers of s; unused high terms 0
  std::array<double, 4> coeffs_rz{};

  double eval_tx(double s) const;
  double eval_rz(double s) const;
};

// Least-squares fit over s = i/(r-1), independently for t_x and r_z.
// Householder QR on the Vandermonde system; throws if rows < degree+1.
PolynomialTrajectory fit_trajectory(const MotionCurve& curve, int degree);

// Evaluates both polynomials at s = i/(r-1), i = 0..r-1. r >= 2.
MotionCurve eval_trajectory(const PolynomialTrajectory& traj, int r);

// Motion at a fractional row: linear interpolation between adjacent
// integer rows, clamped to the end rows outside [0, r-1].
std::pair<double, double> sample_motion_at(const MotionCurve& curve, double x);

struct MotionRanges {
  double max_tx_px = 10.0;
  double max_rz_rad = 4.0 * 3.14159265358979323846 / 180.0;
};

// Degree-2 trajectory whose evaluated curve stays inside the given ranges
// over [0,1]; coefficients are rejection-sampled. Deterministic per seed.
PolynomialTrajectory random_trajectory(uint64_t seed, const MotionRanges& ranges);

// p'(s) = p(alpha + beta*s), exact coefficient reparameterization. Used to
// re-express a trajectory after a centered crop.
PolynomialTrajectory reparam_affine(const PolynomialTrajectory& traj, double alpha, double beta);

// The symmetric idempotent matrix P (r x r) with smoothed = P * curve,
// i.e. eval_trajectory(fit_trajectory(.)) as a linear map. Row-major.
std::vector<double> trajectory_projection_matrix(int r, int degree);

// CSV with header "row,tx_px,rz_rad", one line per row.
void save_motion_csv(const std::string& path, const MotionCurve& curve);
MotionCurve load_motion_csv(const std::string& path);

// JSON object {degree, coeffs_tx, coeffs_rz, normalization}.
std::string trajectory_to_json(const PolynomialTrajectory& traj);
PolynomialTrajectory trajectory_from_json(const std::string& text);

}  // namespace rsrect
