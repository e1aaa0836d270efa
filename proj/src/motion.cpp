#include "rsrect/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rsrect/common.hpp"

namespace rsrect {

bool MotionCurve::zero() const {
  for (double v : t_x)
    if (v != 0.0) return false;
  for (double v : r_z)
    if (v != 0.0) return false;
  return true;
}

void MotionCurve::validate() const {
  if (t_x.size() != r_z.size()) {
    throw std::invalid_argument("MotionCurve: t_x/r_z length mismatch");
  }
  for (double v : t_x)
    if (!std::isfinite(v)) throw std::invalid_argument("MotionCurve: non-finite t_x");
  for (double v : r_z)
    if (!std::isfinite(v)) throw std::invalid_argument("MotionCurve: non-finite r_z");
}

double PolynomialTrajectory::eval_tx(double s) const {
  double acc = 0.0;
  for (int k = degree; k >= 0; --k) acc = acc * s + coeffs_tx[k];
  return acc;
}

double PolynomialTrajectory::eval_rz(double s) const {
  double acc = 0.0;
  for (int k = degree; k >= 0; --k) acc = acc * s + coeffs_rz[k];
  return acc;
}

namespace {

// Householder QR least squares for the n x m Vandermonde system (m <= 4).
std::array<double, 4> ls_polyfit(const std::vector<double>& y, int degree) {
  int n = int(y.size());
  int m = degree + 1;
  std::vector<double> a(size_t(n) * m);
  for (int i = 0; i < n; ++i) {
    double s = n > 1 ? double(i) / double(n - 1) : 0.0;
    double p = 1.0;
    for (int k = 0; k < m; ++k) {
      a[size_t(i) * m + k] = p;
      p *= s;
    }
  }
  std::vector<double> b = y;
  for (int k = 0; k < m; ++k) {
    double norm = 0.0;
    for (int i = k; i < n; ++i) norm += a[size_t(i) * m + k] * a[size_t(i) * m + k];
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::runtime_error("fit_trajectory: rank-deficient system");
    double akk = a[size_t(k) * m + k];
    double alpha = akk >= 0.0 ? -norm : norm;
    std::vector<double> v(n - k, 0.0);
    v[0] = akk - alpha;
    for (int i = k + 1; i < n; ++i) v[i - k] = a[size_t(i) * m + k];
    double vnorm2 = 0.0;
    for (double t : v) vnorm2 += t * t;
    if (vnorm2 > 0.0) {
      for (int j = k; j < m; ++j) {
        double dot = 0.0;
        for (int i = k; i < n; ++i) dot += v[i - k] * a[size_t(i) * m + j];
        double f = 2.0 * dot / vnorm2;
        for (int i = k; i < n; ++i) a[size_t(i) * m + j] -= f * v[i - k];
      }
      double dot = 0.0;
      for (int i = k; i < n; ++i) dot += v[i - k] * b[i];
      double f = 2.0 * dot / vnorm2;
      for (int i = k; i < n; ++i) b[i] -= f * v[i - k];
    }
  }
  // back substitution on the upper-triangular R
  std::array<double, 4> x{};
  for (int k = m - 1; k >= 0; --k) {
    double acc = b[k];
    for (int j = k + 1; j < m; ++j) acc -= a[size_t(k) * m + j] * x[j];
    x[k] = acc / a[size_t(k) * m + k];
  }
  return x;
}

}  // namespace

PolynomialTrajectory fit_trajectory(const MotionCurve& curve, int degree) {
  if (degree != 2 && degree != 3) throw std::invalid_argument("fit_trajectory: degree must be 2 or 3");
  curve.validate();
  if (curve.rows() < degree + 1) {
    throw std::invalid_argument("fit_trajectory: need at least degree+1 rows");
  }
  PolynomialTrajectory traj;
  traj.degree = degree;
  traj.coeffs_tx = ls_polyfit(curve.t_x, degree);
  traj.coeffs_rz = ls_polyfit(curve.r_z, degree);
  return traj;
}

MotionCurve eval_trajectory(const PolynomialTrajectory& traj, int r) {
  if (r < 2) throw std::invalid_argument("eval_trajectory: r must be >= 2");
  MotionCurve curve(r);
  for (int i = 0; i < r; ++i) {
    double s = double(i) / double(r - 1);
    curve.t_x[i] = traj.eval_tx(s);
    curve.r_z[i] = traj.eval_rz(s);
  }
  return curve;
}

std::pair<double, double> sample_motion_at(const MotionCurve& curve, double x) {
  int r = curve.rows();
  if (r == 0) throw std::invalid_argument("sample_motion_at: empty curve");
  if (!(x > 0.0)) return {curve.t_x[0], curve.r_z[0]};  // NaN clamps to row 0
  if (x >= double(r - 1)) return {curve.t_x[r - 1], curve.r_z[r - 1]};
  int k = int(std::floor(x));
  double f = x - double(k);
  return {curve.t_x[k] + f * (curve.t_x[k + 1] - curve.t_x[k]),
          curve.r_z[k] + f * (curve.r_z[k + 1] - curve.r_z[k])};
}

namespace {

/// Max |c0 + c1 s + c2 s^2| over [0,1]: endpoints plus interior extremum.
double quad_max_abs(double c0, double c1, double c2) {
  double m = std::max(std::abs(c0), std::abs(c0 + c1 + c2));
  if (c2 != 0.0) {
    double sv = -c1 / (2.0 * c2);
    if (sv > 0.0 && sv < 1.0) {
      m = std::max(m, std::abs(c0 + c1 * sv + c2 * sv * sv));
    }
  }
  return m;
}

std::array<double, 4> sample_quad_within(Rng& rng, double bound) {
  std::array<double, 4> c{};
  if (bound == 0.0) return c;
  for (;;) {
    c[0] = rng.uniform(-bound, bound);
    c[1] = rng.uniform(-bound, bound);
    c[2] = rng.uniform(-bound, bound);
    if (quad_max_abs(c[0], c[1], c[2]) <= bound) return c;
  }
}

}  // namespace

PolynomialTrajectory random_trajectory(uint64_t seed, const MotionRanges& ranges) {
  Rng rng(mix_seed(seed, 0x72616a74));
  PolynomialTrajectory traj;
  traj.degree = 2;
  traj.coeffs_tx = sample_quad_within(rng, ranges.max_tx_px);
  traj.coeffs_rz = sample_quad_within(rng, ranges.max_rz_rad);
  return traj;
}

PolynomialTrajectory reparam_affine(const PolynomialTrajectory& traj, double alpha, double beta) {
  auto reparam = [&](const std::array<double, 4>& c) {
    // expand sum_k c_k (alpha + beta s)^k by binomials
    std::array<double, 4> out{};
    double binom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
    for (int k = 0; k <= traj.degree; ++k) {
      std::array<double, 4> apow{};
      apow[0] = 1.0;
      for (int j = 1; j <= k; ++j) apow[j] = apow[j - 1] * alpha;
      double bp = 1.0;
      for (int j = 0; j <= k; ++j) {
        out[j] += c[k] * binom[k][j] * apow[k - j] * bp;
        bp *= beta;
      }
    }
    return out;
  };
  PolynomialTrajectory out;
  out.degree = traj.degree;
  out.coeffs_tx = reparam(traj.coeffs_tx);
  out.coeffs_rz = reparam(traj.coeffs_rz);
  return out;
}

std::vector<double> trajectory_projection_matrix(int r, int degree) {
  if (r < degree + 1) throw std::invalid_argument("trajectory_projection_matrix: r too small");
  std::vector<double> p(size_t(r) * r);
  // column c of P = eval(fit(e_c)); fit is linear so this assembles P exactly
  MotionCurve basis(r);
  for (int c = 0; c < r; ++c) {
    std::fill(basis.t_x.begin(), basis.t_x.end(), 0.0);
    basis.t_x[c] = 1.0;
    auto coeffs = fit_trajectory(basis, degree).coeffs_tx;
    for (int i = 0; i < r; ++i) {
      double s = double(i) / double(r - 1);
      double acc = 0.0;
      for (int k = degree; k >= 0; --k) acc = acc * s + coeffs[k];
      p[size_t(i) * r + c] = acc;
    }
  }
  return p;
}

void save_motion_csv(const std::string& path, const MotionCurve& curve) {
  curve.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write motion CSV: " + path);
  out << "row,tx_px,rz_rad\n";
  char line[96];
  for (int i = 0; i < curve.rows(); ++i) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", i, curve.t_x[i], curve.r_z[i]);
    out << line;
  }
}

MotionCurve load_motion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open motion CSV: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("row,tx_px,rz_rad", 0) != 0) {
    throw std::runtime_error("motion CSV: bad header in " + path);
  }
  MotionCurve curve;
  int expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int row = 0;
    double tx = 0.0, rz = 0.0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &row, &tx, &rz) != 3 || row != expected) {
      throw std::runtime_error("motion CSV: malformed line in " + path);
    }
    curve.t_x.push_back(tx);
    curve.r_z.push_back(rz);
    ++expected;
  }
  curve.validate();
  if (curve.rows() == 0) throw std::runtime_error("motion CSV: no rows in " + path);
  return curve;
}

std::string trajectory_to_json(const PolynomialTrajectory& traj) {
  nlohmann::json j;
  j["degree"] = traj.degree;
  j["coeffs_tx"] = std::vector<double>(traj.coeffs_tx.begin(), traj.coeffs_tx.begin() + traj.degree + 1);
  j["coeffs_rz"] = std::vector<double>(traj.coeffs_rz.begin(), traj.coeffs_rz.begin() + traj.degree + 1);
  j["normalization"] = "s=i/(r-1)";
  return j.dump();
}

PolynomialTrajectory trajectory_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PolynomialTrajectory traj;
  traj.degree = j.at("degree").get<int>();
  if (traj.degree != 2 && traj.degree != 3) {
    throw std::runtime_error("trajectory JSON: degree must be 2 or 3");
  }
  auto tx = j.at("coeffs_tx").get<std::vector<double>>();
  auto rz = j.at("coeffs_rz").get<std::vector<double>>();
  if (int(tx.size()) != traj.degree + 1 || int(rz.size()) != traj.degree + 1) {
    throw std::runtime_error("trajectory JSON: coefficient count mismatch");
  }
  std::copy(tx.begin(), tx.end(), traj.coeffs_tx.begin());
  std::copy(rz.begin(), rz.end(), traj.coeffs_rz.begin());
  return traj;
}

}  // namespace rsrect
