#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "cuebench/common.hpp"
#include "cuebench/detail/fft.hpp"
#include "cuebench/image.hpp"

namespace cuebench {

// Holistic scene descriptor: oriented band-pass energies pooled on a coarse
// grid. Knobs are exposed, but the pooled output must stay 512-dimensional.
struct GistConfig {
    std::size_t grid = 4;
    std::size_t orientations = 8;
    std::size_t scales = 4;
    std::size_t resolution = 128; // working image size, power of two
    double prefilt_fc = 4.0;      // cutoff of the contrast-normalization lowpass

    std::size_t dim() const { return grid * grid * orientations * scales; }

    void validate() const {
        if (dim() != 512)
            throw invariant_error("GistConfig: grid^2 * orientations * scales must be 512, got " +
                                  std::to_string(dim()));
        if (!detail::is_pow2(resolution) || resolution < 32)
            throw invariant_error("GistConfig: resolution must be a power of two >= 32");
        if (resolution % grid != 0)
            throw invariant_error("GistConfig: grid must divide resolution");
    }
};

namespace detail {

// Signed frequency index for row-major unshifted spectra: 0, 1, ... N/2, -(N/2-1), ... -1.
inline double signed_freq(std::size_t i, std::size_t n) {
    return i <= n / 2 ? double(i) : double(i) - double(n);
}

// Transfer function of one oriented band-pass filter on the unshifted N x N
// frequency grid. Gaussian in log-radial distance around the scale's peak
// frequency and Gaussian in angle around the orientation; DC is zeroed so
// that constant inputs produce exactly no response.
inline std::vector<double> gabor_transfer(std::size_t n, std::size_t scale,
                                          std::size_t orientation, std::size_t n_orientations) {
    const double pi = 3.141592653589793238462643383279502884;
    const double peak = 0.3 / std::pow(1.85, double(scale)); // cycles per pixel
    const double angle0 = pi * double(orientation) / double(n_orientations);
    const double angular = double(n_orientations) * double(n_orientations) / 64.0;
    std::vector<double> g(n * n);
    for (std::size_t v = 0; v < n; ++v) {
        double fy = signed_freq(v, n);
        for (std::size_t u = 0; u < n; ++u) {
            double fx = signed_freq(u, n);
            double fr = std::sqrt(fx * fx + fy * fy);
            double theta = std::atan2(fy, fx) + angle0;
            while (theta > pi) theta -= 2.0 * pi;
            while (theta < -pi) theta += 2.0 * pi;
            double radial = fr / (double(n) * peak) - 1.0;
            g[v * n + u] =
                std::exp(-10.0 * 0.35 * radial * radial - 2.0 * angular * pi * theta * theta);
        }
    }
    g[0] = 0.0;
    return g;
}

// All scales x orientations transfers, scale-major.
inline std::vector<std::vector<double>> gabor_bank(const GistConfig& cfg, std::size_t n) {
    std::vector<std::vector<double>> bank;
    bank.reserve(cfg.scales * cfg.orientations);
    for (std::size_t s = 0; s < cfg.scales; ++s)
        for (std::size_t o = 0; o < cfg.orientations; ++o)
            bank.push_back(gabor_transfer(n, s, o, cfg.orientations));
    return bank;
}

// Applies a frequency-domain transfer to a real n x n field and returns the
// complex spatial response. This is the seam the convolution oracle checks.
inline std::vector<std::complex<double>> filter_response(const std::vector<double>& field,
                                                         std::size_t n,
                                                         const std::vector<double>& transfer) {
    if (field.size() != n * n || transfer.size() != n * n)
        throw invariant_error("filter_response: size mismatch");
    std::vector<std::complex<double>> spec(field.begin(), field.end());
    fft2_inplace(spec, n, n, false);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= transfer[i];
    fft2_inplace(spec, n, n, true);
    return spec;
}

// Log intensity compression, spectral whitening, then divisive local
// contrast normalization. Works in place on an n x n plane.
inline void contrast_normalize(std::vector<double>& plane, std::size_t n, double fc) {
    const double s1 = fc / std::sqrt(std::log(2.0));
    std::vector<double> lowpass(n * n);
    for (std::size_t v = 0; v < n; ++v) {
        double fy = signed_freq(v, n);
        for (std::size_t u = 0; u < n; ++u) {
            double fx = signed_freq(u, n);
            lowpass[v * n + u] = std::exp(-(fx * fx + fy * fy) / (s1 * s1));
        }
    }
    for (double& v : plane) v = std::log1p(255.0 * v);

    std::vector<std::complex<double>> spec(plane.begin(), plane.end());
    fft2_inplace(spec, n, n, false);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= lowpass[i];
    fft2_inplace(spec, n, n, true);
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] -= spec[i].real();

    std::vector<std::complex<double>> energy(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) energy[i] = plane[i] * plane[i];
    fft2_inplace(energy, n, n, false);
    for (std::size_t i = 0; i < energy.size(); ++i) energy[i] *= lowpass[i];
    fft2_inplace(energy, n, n, true);
    for (std::size_t i = 0; i < plane.size(); ++i)
        plane[i] /= 0.2 + std::sqrt(std::max(0.0, energy[i].real()));
}

} // namespace detail

// Mean response magnitudes of the oriented filter bank over a grid of
// cells. Output layout is scale-major, then orientation, then grid cell in
// row-major order: index = (scale*orientations + orientation)*grid^2 + cell.
inline std::vector<double> gist_feature(const ImagePatch& patch, const GistConfig& cfg = {}) {
    cfg.validate();
    if (patch.width < 32 || patch.height < 32)
        throw data_error("gist_feature: patch must be at least 32x32, got " +
                         std::to_string(patch.width) + "x" + std::to_string(patch.height));
    const std::size_t n = cfg.resolution;
    std::vector<double> plane = to_grayscale(patch);
    plane = resize_bilinear(plane, patch.width, patch.height, n, n);
    detail::contrast_normalize(plane, n, cfg.prefilt_fc);

    std::vector<std::complex<double>> spec(plane.begin(), plane.end());
    detail::fft2_inplace(spec, n, n, false);

    const std::size_t cell = n / cfg.grid;
    std::vector<double> feature(cfg.dim(), 0.0);
    std::vector<std::complex<double>> response(n * n);
    std::size_t f = 0;
    for (std::size_t s = 0; s < cfg.scales; ++s) {
        for (std::size_t o = 0; o < cfg.orientations; ++o, ++f) {
            std::vector<double> g = detail::gabor_transfer(n, s, o, cfg.orientations);
            for (std::size_t i = 0; i < spec.size(); ++i) response[i] = spec[i] * g[i];
            detail::fft2_inplace(response, n, n, true);
            for (std::size_t gy = 0; gy < cfg.grid; ++gy)
                for (std::size_t gx = 0; gx < cfg.grid; ++gx) {
                    double acc = 0.0;
                    for (std::size_t y = gy * cell; y < (gy + 1) * cell; ++y)
                        for (std::size_t x = gx * cell; x < (gx + 1) * cell; ++x)
                            acc += std::abs(response[y * n + x]);
                    feature[f * cfg.grid * cfg.grid + gy * cfg.grid + gx] =
                        acc / double(cell * cell);
                }
        }
    }
    return feature;
}

} // namespace cuebench
