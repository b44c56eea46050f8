#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "fpoct/geometry.hpp"

namespace fpoct {

inline constexpr int kMaxShBand = 4;

constexpr int sh_count(int lmax) { return (lmax + 1) * (lmax + 1); }

/// Viewing direction. Polar angle theta is measured from +z, azimuth phi from +x.
class Direction {
 public:
  Direction() = default;
  static Direction from_angles(double theta, double phi);
  /// Normalizes v; v must be nonzero.
  static Direction from_vector(const Vec3& v);

  const Vec3& unit() const { return unit_; }
  double theta() const;
  /// In [0, 2π).
  double phi() const;

 private:
  explicit Direction(const Vec3& u) : unit_(u) {}
  Vec3 unit_ = Vec3::UnitZ();
};

/// Quasi-uniform directions on the unit sphere (Fibonacci lattice).
std::vector<Vec3> fibonacci_sphere(int count);

/// Spherical-harmonic color coefficients, logit space.
/// values is laid out [basis][channel] with basis order (l,m) = (0,0),(1,-1),(1,0),(1,1),...
struct SHCoeffs {
  int lmax = 0;
  std::vector<double> values;

  SHCoeffs() = default;
  explicit SHCoeffs(int band) : lmax(band), values(static_cast<size_t>(sh_count(band)) * 3, 0.0) {}

  double& at(int basis, int channel) { return values[static_cast<size_t>(basis) * 3 + channel]; }
  double at(int basis, int channel) const { return values[static_cast<size_t>(basis) * 3 + channel]; }
};

/// Real orthonormal SH basis (no Condon-Shortley phase) for bands 0..lmax, lmax <= 4.
/// Writes sh_count(lmax) values into out.
void eval_sh_basis(int lmax, const Vec3& unit_dir, std::span<double> out);
std::vector<double> eval_sh_basis(int lmax, const Direction& d);

double sigmoid(double x);
/// Logit of a color clamped to [eps, 1-eps].
double clamped_logit(double c, double eps = 1e-4);

/// rgb = sigmoid(sum_k z_k Y_k(d)) per channel. coeffs holds [basis][channel].
Vec3 decode_color(int lmax, std::span<const double> coeffs, const Vec3& unit_dir);
Vec3 decode_color(const SHCoeffs& z, const Direction& d);

struct ShSample {
  Direction dir;
  Vec3 logit_rgb;
};

/// Ridge least-squares fit over a fixed direction set; reuse it for many value sets.
class ShFitter {
 public:
  static constexpr double kRidge = 1e-8;

  /// Throws a numeric Error when the design is rank deficient (too few or degenerate directions).
  ShFitter(std::span<const Vec3> unit_dirs, int lmax);

  int lmax() const { return lmax_; }
  size_t sample_count() const { return static_cast<size_t>(solve_.cols()); }

  /// logits: [sample][channel], sample_count() x 3 values. out: [basis][channel].
  void fit(std::span<const double> logits, std::span<double> out) const;

 private:
  int lmax_;
  Eigen::MatrixXd solve_;  // (lmax+1)^2 x samples
};

SHCoeffs fit_sh(std::span<const ShSample> samples, int lmax);

/// Frame indices t are 1-based throughout: t in 1..T.
struct FourierBasisSpec {
  int n = 1;
  int frames = 1;
};

/// cos(iπt/T) for even i, sin((i+1)πt/T) for odd i.
double idft_basis(int i, int t, int frames);

/// Literal forward transform with the 1/T weights: k_i = Σ_t s(t)·IDFT_i(t)/T.
/// Non-DC coefficients of a pure tone come back halved; kept for comparison only.
std::vector<double> dft_paper(std::span<const double> series, int n);

/// Least-squares projection onto the first n IDFT basis functions (ridge 1e-8).
/// Indices from identifiable_count(T) on repeat a lower index on the T-frame grid and are fit as zero.
/// Precomputes the n x T solve matrix for repeated use.
class FourierFitter {
 public:
  static constexpr double kRidge = 1e-8;
  enum class Mode { LeastSquares, PaperDft };

  FourierFitter(FourierBasisSpec spec, Mode mode = Mode::LeastSquares);

  const FourierBasisSpec& spec() const { return spec_; }
  /// T+1 for even T, T for odd T.
  static int identifiable_count(int frames);
  /// series has length T (frame t stored at index t-1); out has length n.
  void fit(std::span<const double> series, std::span<double> out) const;
  /// Strided variant: series element t-1 at series[(t-1)*stride], coefficient i written to out[i*out_stride].
  void fit_strided(const double* series, size_t stride, double* out, size_t out_stride) const;

 private:
  FourierBasisSpec spec_;
  Eigen::MatrixXd solve_;  // n x T
};

std::vector<double> fit_fourier(std::span<const double> series, int n);

double reconstruct_series(std::span<const double> k, int t, int frames);

/// IDFT_i(t) for i < n, the per-frame weight vector used by every evaluation path.
std::vector<double> idft_weights(int n, int t, int frames);

}  // namespace fpoct
