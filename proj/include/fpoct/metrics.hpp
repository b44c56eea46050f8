#pragma once

#include "fpoct/image.hpp"

namespace fpoct {

/// Mean squared error over all channels.
double mse(const Image& a, const Image& b);
/// 10·log10(1/MSE), 99 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);
/// Mean absolute error over all channels.
double mae(const Image& a, const Image& b);
/// Mean SSIM on luma (0.299, 0.587, 0.114) with an 11x11 Gaussian window (sigma 1.5) over
/// the valid region; C1 = 0.01^2, C2 = 0.03^2. Images must be at least 11x11.
double ssim(const Image& a, const Image& b);

}  // namespace fpoct
