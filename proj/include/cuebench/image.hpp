#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "cuebench/common.hpp"
#include "cuebench/geometry.hpp"

namespace cuebench {

// RGB raster, row-major, interleaved channels, values in [0,1].
struct ImagePatch {
    std::size_t width = 0, height = 0;
    std::vector<float> pixels; // width*height*3

    ImagePatch() = default;
    ImagePatch(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0.0f) {}

    float& at(std::size_t x, std::size_t y, std::size_t c) {
        return pixels[(y * width + x) * 3 + c];
    }
    float at(std::size_t x, std::size_t y, std::size_t c) const {
        return pixels[(y * width + x) * 3 + c];
    }
    bool empty() const { return width == 0 || height == 0; }
};

// Binary PPM (P6, maxval 255) is the one codec the toolkit reads and
// writes; it is trivial to produce and introduces no decoder variance.
inline ImagePatch load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open image '" + path + "'");
    std::string magic;
    in >> magic;
    if (magic != "P6") throw data_error("'" + path + "': not a binary PPM (P6) file");
    auto next_int = [&]() {
        // skip whitespace and '#' comments between header tokens
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        in >> v;
        if (!in || v < 0) throw data_error("'" + path + "': malformed PPM header");
        return v;
    };
    long w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw data_error("'" + path + "': only maxval 255 supported");
    in.get(); // single whitespace after header
    ImagePatch img{std::size_t(w), std::size_t(h)};
    std::vector<unsigned char> raw(std::size_t(w) * std::size_t(h) * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(in.gcount()) != raw.size())
        throw data_error("'" + path + "': truncated pixel data");
    for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = float(raw[i]) / 255.0f;
    return img;
}

inline void save_ppm(const ImagePatch& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.pixels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
        raw[i] = (unsigned char)(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw data_error("write failure on '" + path + "'");
}

// Copies the box area out of the image; parts of the box beyond the image
// stay zero. Output pixel (i, j) has source pixel (floor(box.x)+i,
// floor(box.y)+j); output extent is ceil(w) x ceil(h).
inline ImagePatch crop_region(const ImagePatch& image, const Box& box) {
    box.validate("crop_region");
    std::size_t ow = std::size_t(std::ceil(box.w));
    std::size_t oh = std::size_t(std::ceil(box.h));
    ImagePatch out(ow, oh);
    long x0 = long(std::floor(box.x));
    long y0 = long(std::floor(box.y));
    for (std::size_t j = 0; j < oh; ++j) {
        long sy = y0 + long(j);
        if (sy < 0 || sy >= long(image.height)) continue;
        for (std::size_t i = 0; i < ow; ++i) {
            long sx = x0 + long(i);
            if (sx < 0 || sx >= long(image.width)) continue;
            for (std::size_t c = 0; c < 3; ++c)
                out.at(i, j, c) = image.at(std::size_t(sx), std::size_t(sy), c);
        }
    }
    return out;
}

namespace detail {

// Mirror an index into [0, n) without repeating the edge sample.
inline std::size_t reflect_index(long i, long n) {
    if (n == 1) return 0;
    long period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    if (i >= n) i = period - i;
    return std::size_t(i);
}

} // namespace detail

// Separable Gaussian blur, fixed 5x5 support, reflected borders. The
// normalized kernel sums to 1, so constant images pass through unchanged.
inline ImagePatch gaussian_blur_5x5(const ImagePatch& image, double sigma = 1.0) {
    if (image.empty()) throw data_error("gaussian_blur_5x5: empty image");
    if (!(sigma > 0.0)) throw data_error("gaussian_blur_5x5: sigma must be positive");
    double k[5];
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
        double d = double(i - 2);
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;

    const long w = long(image.width), h = long(image.height);
    ImagePatch tmp(image.width, image.height), out(image.width, image.height);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -2; t <= 2; ++t)
                    acc += k[t + 2] * image.at(detail::reflect_index(x + t, w), std::size_t(y), c);
                tmp.at(std::size_t(x), std::size_t(y), c) = float(acc);
            }
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = -2; t <= 2; ++t)
                    acc += k[t + 2] * tmp.at(std::size_t(x), detail::reflect_index(y + t, h), c);
                out.at(std::size_t(x), std::size_t(y), c) = float(acc);
            }
    return out;
}

// Bilinear resize with pixel-centre alignment. The lerp form below is exact
// on constant images (no weight renormalization error).
inline ImagePatch resize_bilinear(const ImagePatch& image, std::size_t out_w, std::size_t out_h) {
    if (image.empty()) throw data_error("resize_bilinear: empty image");
    if (out_w == 0 || out_h == 0) throw data_error("resize_bilinear: empty output size");
    ImagePatch out(out_w, out_h);
    const double sx_scale = double(image.width) / double(out_w);
    const double sy_scale = double(image.height) / double(out_h);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double sy = (double(oy) + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, double(image.height - 1));
        std::size_t y0 = std::size_t(sy);
        std::size_t y1 = std::min(y0 + 1, image.height - 1);
        double fy = sy - double(y0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double sx = (double(ox) + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, double(image.width - 1));
            std::size_t x0 = std::size_t(sx);
            std::size_t x1 = std::min(x0 + 1, image.width - 1);
            double fx = sx - double(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                double v00 = image.at(x0, y0, c), v10 = image.at(x1, y0, c);
                double v01 = image.at(x0, y1, c), v11 = image.at(x1, y1, c);
                double v = v00 + fx * (v10 - v00) + fy * (v01 - v00) +
                           fx * fy * (v00 + v11 - v10 - v01);
                out.at(ox, oy, c) = float(v);
            }
        }
    }
    return out;
}

// Single-plane bilinear resize, same sampling convention as above.
inline std::vector<double> resize_bilinear(const std::vector<double>& plane, std::size_t in_w,
                                           std::size_t in_h, std::size_t out_w,
                                           std::size_t out_h) {
    if (plane.size() != in_w * in_h) throw invariant_error("resize_bilinear: plane size mismatch");
    if (in_w == 0 || in_h == 0 || out_w == 0 || out_h == 0)
        throw data_error("resize_bilinear: empty plane");
    std::vector<double> out(out_w * out_h);
    const double sx_scale = double(in_w) / double(out_w);
    const double sy_scale = double(in_h) / double(out_h);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double sy = (double(oy) + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, double(in_h - 1));
        std::size_t y0 = std::size_t(sy);
        std::size_t y1 = std::min(y0 + 1, in_h - 1);
        double fy = sy - double(y0);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double sx = (double(ox) + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, double(in_w - 1));
            std::size_t x0 = std::size_t(sx);
            std::size_t x1 = std::min(x0 + 1, in_w - 1);
            double fx = sx - double(x0);
            double v00 = plane[y0 * in_w + x0], v10 = plane[y0 * in_w + x1];
            double v01 = plane[y1 * in_w + x0], v11 = plane[y1 * in_w + x1];
            out[oy * out_w + ox] = v00 + fx * (v10 - v00) + fy * (v01 - v00) +
                                   fx * fy * (v00 + v11 - v10 - v01);
        }
    }
    return out;
}

// Luma plane in double precision for the frequency-domain pipeline.
inline std::vector<double> to_grayscale(const ImagePatch& image) {
    std::vector<double> plane(image.width * image.height);
    for (std::size_t y = 0; y < image.height; ++y)
        for (std::size_t x = 0; x < image.width; ++x)
            plane[y * image.width + x] = 0.299 * image.at(x, y, 0) +
                                         0.587 * image.at(x, y, 1) +
                                         0.114 * image.at(x, y, 2);
    return plane;
}

} // namespace cuebench
