#include "fpoct/bases.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "fpoct/error.hpp"

namespace fpoct {

namespace {

constexpr double kPi = std::numbers::pi;

}  // namespace

Direction Direction::from_angles(double theta, double phi) {
  const double st = std::sin(theta);
  return Direction(Vec3(st * std::cos(phi), st * std::sin(phi), std::cos(theta)));
}

Direction Direction::from_vector(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw config_error("direction vector must be nonzero and finite");
  return Direction(v / n);
}

double Direction::theta() const { return std::acos(std::clamp(unit_.z(), -1.0, 1.0)); }

double Direction::phi() const {
  double p = std::atan2(unit_.y(), unit_.x());
  if (p < 0.0) p += 2.0 * kPi;
  if (p >= 2.0 * kPi) p = 0.0;
  return p;
}

std::vector<Vec3> fibonacci_sphere(int count) {
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<size_t>(std::max(count, 0)));
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

void eval_sh_basis(int lmax, const Vec3& d, std::span<double> out) {
  if (lmax < 0 || lmax > kMaxShBand)
    throw config_error("SH band limit " + std::to_string(lmax) + " outside supported range 0..4");
  const double x = d.x(), y = d.y(), z = d.z();
  out[0] = 0.28209479177387814;  // 1/(2√π)
  if (lmax < 1) return;
  constexpr double c1 = 0.4886025119029199;  // √(3/4π)
  out[1] = c1 * y;
  out[2] = c1 * z;
  out[3] = c1 * x;
  if (lmax < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = 1.0925484305920792 * x * y;
  out[5] = 1.0925484305920792 * y * z;
  out[6] = 0.31539156525252005 * (3.0 * zz - 1.0);
  out[7] = 1.0925484305920792 * x * z;
  out[8] = 0.5462742152960396 * (xx - yy);
  if (lmax < 3) return;
  out[9] = 0.5900435899266435 * y * (3.0 * xx - yy);
  out[10] = 2.890611442640554 * x * y * z;
  out[11] = 0.4570457994644658 * y * (5.0 * zz - 1.0);
  out[12] = 0.3731763325901154 * z * (5.0 * zz - 3.0);
  out[13] = 0.4570457994644658 * x * (5.0 * zz - 1.0);
  out[14] = 1.445305721320277 * z * (xx - yy);
  out[15] = 0.5900435899266435 * x * (xx - 3.0 * yy);
  if (lmax < 4) return;
  out[16] = 2.5033429417967046 * x * y * (xx - yy);
  out[17] = 1.7701307697799304 * y * z * (3.0 * xx - yy);
  out[18] = 0.9461746957575601 * x * y * (7.0 * zz - 1.0);
  out[19] = 0.6690465435572892 * y * z * (7.0 * zz - 3.0);
  out[20] = 0.10578554691520431 * (35.0 * zz * zz - 30.0 * zz + 3.0);
  out[21] = 0.6690465435572892 * x * z * (7.0 * zz - 3.0);
  out[22] = 0.47308734787878004 * (xx - yy) * (7.0 * zz - 1.0);
  out[23] = 1.7701307697799304 * x * z * (xx - 3.0 * yy);
  out[24] = 0.6258357354491761 * (xx * (xx - 3.0 * yy) - yy * (3.0 * xx - yy));
}

std::vector<double> eval_sh_basis(int lmax, const Direction& d) {
  if (lmax < 0 || lmax > kMaxShBand)
    throw config_error("SH band limit " + std::to_string(lmax) + " outside supported range 0..4");
  std::vector<double> out(static_cast<size_t>(sh_count(lmax)));
  eval_sh_basis(lmax, d.unit(), out);
  return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamped_logit(double c, double eps) {
  const double v = std::clamp(c, eps, 1.0 - eps);
  return std::log(v / (1.0 - v));
}

Vec3 decode_color(int lmax, std::span<const double> coeffs, const Vec3& unit_dir) {
  double basis[sh_count(kMaxShBand)];
  const int nb = sh_count(lmax);
  eval_sh_basis(lmax, unit_dir, std::span<double>(basis, static_cast<size_t>(nb)));
  double acc[3] = {0.0, 0.0, 0.0};
  for (int k = 0; k < nb; ++k) {
    const double* zk = coeffs.data() + 3 * k;
    acc[0] += zk[0] * basis[k];
    acc[1] += zk[1] * basis[k];
    acc[2] += zk[2] * basis[k];
  }
  return {sigmoid(acc[0]), sigmoid(acc[1]), sigmoid(acc[2])};
}

Vec3 decode_color(const SHCoeffs& z, const Direction& d) { return decode_color(z.lmax, z.values, d.unit()); }

ShFitter::ShFitter(std::span<const Vec3> unit_dirs, int lmax) : lmax_(lmax) {
  if (lmax < 0 || lmax > kMaxShBand)
    throw config_error("SH band limit " + std::to_string(lmax) + " outside supported range 0..4");
  const int nb = sh_count(lmax);
  const auto ns = static_cast<Eigen::Index>(unit_dirs.size());
  if (ns < nb) {
    throw config_error("insufficient directional coverage: " + std::to_string(ns) + " samples for " +
                       std::to_string(nb) + " SH coefficients");
  }
  Eigen::MatrixXd design(ns, nb);
  for (Eigen::Index s = 0; s < ns; ++s) {
    double basis[sh_count(kMaxShBand)];
    eval_sh_basis(lmax, unit_dirs[static_cast<size_t>(s)], std::span<double>(basis, static_cast<size_t>(nb)));
    for (int k = 0; k < nb; ++k) design(s, k) = basis[k];
  }
  const Eigen::MatrixXd gram = design.transpose() * design;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-9 * hi)) {
    throw numeric_error("insufficient directional coverage: SH design matrix is rank deficient");
  }
  Eigen::MatrixXd regularized = gram;
  regularized.diagonal().array() += kRidge;
  solve_ = regularized.ldlt().solve(design.transpose());
}

void ShFitter::fit(std::span<const double> logits, std::span<double> out) const {
  const auto nb = solve_.rows();
  const auto ns = solve_.cols();
  for (Eigen::Index k = 0; k < nb; ++k) {
    double acc[3] = {0.0, 0.0, 0.0};
    for (Eigen::Index s = 0; s < ns; ++s) {
      const double w = solve_(k, s);
      const double* l = logits.data() + 3 * s;
      acc[0] += w * l[0];
      acc[1] += w * l[1];
      acc[2] += w * l[2];
    }
    out[static_cast<size_t>(3 * k)] = acc[0];
    out[static_cast<size_t>(3 * k + 1)] = acc[1];
    out[static_cast<size_t>(3 * k + 2)] = acc[2];
  }
}

SHCoeffs fit_sh(std::span<const ShSample> samples, int lmax) {
  std::vector<Vec3> dirs;
  std::vector<double> logits;
  dirs.reserve(samples.size());
  logits.reserve(samples.size() * 3);
  for (const auto& s : samples) {
    dirs.push_back(s.dir.unit());
    logits.insert(logits.end(), {s.logit_rgb.x(), s.logit_rgb.y(), s.logit_rgb.z()});
  }
  ShFitter fitter(dirs, lmax);
  SHCoeffs z(lmax);
  fitter.fit(logits, z.values);
  return z;
}

double idft_basis(int i, int t, int frames) {
  const double T = static_cast<double>(frames);
  if (i % 2 == 0) return std::cos(i * kPi * t / T);
  return std::sin((i + 1) * kPi * t / T);
}

std::vector<double> idft_weights(int n, int t, int frames) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<size_t>(i)] = idft_basis(i, t, frames);
  return w;
}

std::vector<double> dft_paper(std::span<const double> series, int n) {
  const int T = static_cast<int>(series.size());
  if (T < 1 || n < 1) throw config_error("dft_paper needs T >= 1 and n >= 1");
  std::vector<double> k(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int t = 1; t <= T; ++t) acc += series[static_cast<size_t>(t - 1)] * idft_basis(i, t, T) / T;
    k[static_cast<size_t>(i)] = acc;
  }
  return k;
}

FourierFitter::FourierFitter(FourierBasisSpec spec, Mode mode) : spec_(spec) {
  if (spec.n < 1 || spec.frames < 1) throw config_error("Fourier basis needs n >= 1 and T >= 1");
  const int n = spec.n;
  const int T = spec.frames;
  Eigen::MatrixXd basis(T, n);
  for (int t = 1; t <= T; ++t)
    for (int i = 0; i < n; ++i) basis(t - 1, i) = idft_basis(i, t, T);
  if (mode == Mode::PaperDft) {
    solve_ = basis.transpose() / static_cast<double>(T);
    return;
  }
  const int keep = std::min(n, identifiable_count(T));
  const Eigen::MatrixXd b = basis.leftCols(keep);
  Eigen::MatrixXd gram = b.transpose() * b;
  gram.diagonal().array() += kRidge;
  solve_ = Eigen::MatrixXd::Zero(n, T);
  solve_.topRows(keep) = gram.ldlt().solve(b.transpose());
}

int FourierFitter::identifiable_count(int frames) { return frames % 2 == 0 ? frames + 1 : frames; }

void FourierFitter::fit(std::span<const double> series, std::span<double> out) const {
  fit_strided(series.data(), 1, out.data(), 1);
}

void FourierFitter::fit_strided(const double* series, size_t stride, double* out, size_t out_stride) const {
  const auto n = solve_.rows();
  const auto T = solve_.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) acc += solve_(i, t) * series[static_cast<size_t>(t) * stride];
    out[static_cast<size_t>(i) * out_stride] = acc;
  }
}

std::vector<double> fit_fourier(std::span<const double> series, int n) {
  FourierFitter fitter({n, static_cast<int>(series.size())});
  std::vector<double> k(static_cast<size_t>(n));
  fitter.fit(series, k);
  return k;
}

double reconstruct_series(std::span<const double> k, int t, int frames) {
  double acc = 0.0;
  for (size_t i = 0; i < k.size(); ++i) acc += k[i] * idft_basis(static_cast<int>(i), t, frames);
  return acc;
}

}  // namespace fpoct
