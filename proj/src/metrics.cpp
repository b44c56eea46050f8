#include "fpoct/metrics.hpp"

#include <array>
#include <cmath>

#include "fpoct/error.hpp"

namespace fpoct {

namespace {

void check_same(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.rgb.size() != b.rgb.size())
    throw config_error("image dimensions differ");
  if (a.rgb.empty()) throw config_error("empty image");
}

std::vector<double> luma(const Image& img) {
  std::vector<double> y(img.pixel_count());
  for (size_t i = 0; i < y.size(); ++i)
    y[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
  return y;
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_taps() {
  std::array<double, kWin> g{};
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += g[static_cast<size_t>(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable Gaussian filter, valid region only: output is (w-10) x (h-10).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
  static const auto g = gaussian_taps();
  const int ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(static_cast<size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[static_cast<size_t>(k)] * src[static_cast<size_t>(y) * w + x + k];
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[static_cast<size_t>(k)] * rows[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same(a, b);
  double acc = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m < 1e-10) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

double mae(const Image& a, const Image& b) {
  check_same(a, b);
  double acc = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) acc += std::abs(static_cast<double>(a.rgb[i]) - b.rgb[i]);
  return acc / static_cast<double>(a.rgb.size());
}

double ssim(const Image& a, const Image& b) {
  check_same(a, b);
  if (a.width < kWin || a.height < kWin) throw config_error("SSIM needs images of at least 11x11 pixels");
  const int w = a.width, h = a.height;
  const auto ya = luma(a), yb = luma(b);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto mu_a = filter_valid(ya, w, h), mu_b = filter_valid(yb, w, h);
  const auto e_aa = filter_valid(aa, w, h), e_bb = filter_valid(bb, w, h), e_ab = filter_valid(ab, w, h);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

}  // namespace fpoct
