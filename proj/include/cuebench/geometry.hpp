#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuebench/common.hpp"

namespace cuebench {

// Axis-aligned box, real-valued, half-open [x, x+w) x [y, y+h).
// Boxes are never clamped to the image; how much of a box falls outside is
// an analysis dimension of its own (see truncation_fraction).
struct Box {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

    void validate(const std::string& what = "box") const {
        if (!(w > 0.0) || !(h > 0.0) || !std::isfinite(x) || !std::isfinite(y) ||
            !std::isfinite(w) || !std::isfinite(h))
            throw data_error(what + ": requires finite coords and w, h > 0, got (" +
                             std::to_string(x) + ", " + std::to_string(y) + ", " +
                             std::to_string(w) + ", " + std::to_string(h) + ")");
    }

    double area() const { return w * h; }
    bool operator==(const Box&) const = default;
};

// Detector head-pose components. `none` marks instances without a detection
// (e.g. back views annotated by hand).
enum class DetectorComponent : int {
    frontal0 = 0,
    diag45pos = 1,
    diag45neg = 2,
    side90pos = 3,
    side90neg = 4,
    none = 5,
};

inline const char* to_string(DetectorComponent c) {
    switch (c) {
        case DetectorComponent::frontal0: return "frontal0";
        case DetectorComponent::diag45pos: return "diag45pos";
        case DetectorComponent::diag45neg: return "diag45neg";
        case DetectorComponent::side90pos: return "side90pos";
        case DetectorComponent::side90neg: return "side90neg";
        case DetectorComponent::none: return "none";
    }
    throw invariant_error("unknown detector component value");
}

inline DetectorComponent detector_component_from_string(const std::string& s) {
    for (int i = 0; i <= int(DetectorComponent::none); ++i)
        if (s == to_string(DetectorComponent(i))) return DetectorComponent(i);
    throw data_error("unknown detector component '" + s + "'");
}

inline double intersection_area(const Box& a, const Box& b) {
    double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    return ix * iy;
}

inline double iou(const Box& a, const Box& b) {
    a.validate("iou: a");
    b.validate("iou: b");
    if (a == b) return 1.0;
    double inter = intersection_area(a, b);
    double uni = a.area() + b.area() - inter;
    // edge arithmetic can overshoot the true areas by a few ulp
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

// Fraction of the box area lying outside the image.
inline double truncation_fraction(const Box& box, double image_w, double image_h) {
    box.validate("truncation_fraction");
    Box image{0.0, 0.0, image_w, image_h};
    if (!(image_w > 0.0) || !(image_h > 0.0)) return 1.0;
    return 1.0 - intersection_area(box, image) / box.area();
}

// The five cue regions derived from one head annotation.
struct RegionSet {
    Box face, head, upper, body, scene;
};

// Affine map on (x, y, w, h): out_i = sum_j coef[i][j] * in_j + intercept[i].
struct AffineBoxMap {
    std::array<std::array<double, 4>, 4> coef{};
    std::array<double, 4> intercept{};
    bool degenerate = false;

    Box apply(const Box& b) const {
        std::array<double, 4> in{b.x, b.y, b.w, b.h};
        std::array<double, 4> out{};
        for (int i = 0; i < 4; ++i) {
            double acc = intercept[i];
            for (int j = 0; j < 4; ++j) acc += coef[i][j] * in[j];
            out[i] = acc;
        }
        // Degenerate predictions are clamped to one pixel of extent.
        return Box{out[0], out[1], std::max(out[2], 1.0), std::max(out[3], 1.0)};
    }
};

// Per-detector-component affine box regressor with a pooled global
// fallback for components that had too little training data.
struct BoxRegressor {
    std::map<DetectorComponent, AffineBoxMap> per_component;
    AffineBoxMap global;
    bool has_global = false;
};

struct BoxPair {
    Box source;
    Box target;
    DetectorComponent component = DetectorComponent::none;
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric n x n matrix (row-major).
// On return `a` holds the eigenvalues on its diagonal and `v` the
// corresponding eigenvectors in columns. Plenty for the 5x5 systems here.
inline void jacobi_eigh(std::vector<double>& a, std::vector<double>& v, int n) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v[std::size_t(i) * n + j] = (i == j) ? 1.0 : 0.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[std::size_t(p) * n + q] * a[std::size_t(p) * n + q];
        if (off < 1e-300) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a[std::size_t(p) * n + q];
                if (apq == 0.0) continue;
                double app = a[std::size_t(p) * n + p];
                double aqq = a[std::size_t(q) * n + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a[std::size_t(k) * n + p];
                    double akq = a[std::size_t(k) * n + q];
                    a[std::size_t(k) * n + p] = c * akp - s * akq;
                    a[std::size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a[std::size_t(p) * n + k];
                    double aqk = a[std::size_t(q) * n + k];
                    a[std::size_t(p) * n + k] = c * apk - s * aqk;
                    a[std::size_t(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v[std::size_t(k) * n + p];
                    double vkq = v[std::size_t(k) * n + q];
                    v[std::size_t(k) * n + p] = c * vkp - s * vkq;
                    v[std::size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

// Minimum-norm solution of the symmetric system A x = b via eigenvalue
// pseudoinverse. Returns true when A had full rank.
inline bool solve_sym_pinv(std::vector<double> a, const std::vector<double>& b,
                           std::vector<double>& x, int n) {
    std::vector<double> v(std::size_t(n) * n);
    jacobi_eigh(a, v, n);
    double lmax = 0.0;
    for (int i = 0; i < n; ++i) lmax = std::max(lmax, std::abs(a[std::size_t(i) * n + i]));
    double cutoff = lmax * 1e-10;
    bool full_rank = true;
    x.assign(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double lambda = a[std::size_t(i) * n + i];
        if (std::abs(lambda) <= cutoff) {
            full_rank = false;
            continue;
        }
        double proj = 0.0;
        for (int k = 0; k < n; ++k) proj += v[std::size_t(k) * n + i] * b[std::size_t(k)];
        proj /= lambda;
        for (int k = 0; k < n; ++k) x[std::size_t(k)] += proj * v[std::size_t(k) * n + i];
    }
    return full_rank;
}

// OLS fit of target boxes from source boxes over the given pair indices.
// Columns are centred and scaled before forming the normal equations, which
// keeps the 5x5 system well conditioned for pixel-range inputs; the
// coefficients are mapped back to raw coordinates afterwards.
inline AffineBoxMap fit_affine_box_map(const std::vector<BoxPair>& pairs,
                                       const std::vector<std::size_t>& idx) {
    const int m = 5;
    std::size_t n = idx.size();
    std::array<double, 4> mean{};
    for (std::size_t r : idx) {
        const Box& s = pairs[r].source;
        mean[0] += s.x; mean[1] += s.y; mean[2] += s.w; mean[3] += s.h;
    }
    for (double& v : mean) v /= double(n);
    std::array<double, 4> scale{};
    for (std::size_t r : idx) {
        const Box& s = pairs[r].source;
        std::array<double, 4> c{s.x, s.y, s.w, s.h};
        for (int j = 0; j < 4; ++j) scale[j] = std::max(scale[j], std::abs(c[j] - mean[j]));
    }
    for (double& v : scale)
        if (v <= 0.0) v = 1.0;

    // Normal equations in the scaled basis: design row = (x~, y~, w~, h~, 1).
    std::vector<double> ata(std::size_t(m) * m, 0.0);
    std::array<std::vector<double>, 4> atb;
    for (auto& v : atb) v.assign(std::size_t(m), 0.0);
    for (std::size_t r : idx) {
        const Box& s = pairs[r].source;
        const Box& t = pairs[r].target;
        std::array<double, 5> row{(s.x - mean[0]) / scale[0], (s.y - mean[1]) / scale[1],
                                  (s.w - mean[2]) / scale[2], (s.h - mean[3]) / scale[3], 1.0};
        std::array<double, 4> y{t.x, t.y, t.w, t.h};
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < m; ++j) ata[std::size_t(i) * m + j] += row[std::size_t(i)] * row[std::size_t(j)];
            for (int k = 0; k < 4; ++k) atb[std::size_t(k)][std::size_t(i)] += row[std::size_t(i)] * y[std::size_t(k)];
        }
    }

    AffineBoxMap map;
    for (int k = 0; k < 4; ++k) {
        std::vector<double> beta;
        bool full_rank = solve_sym_pinv(ata, atb[std::size_t(k)], beta, m);
        if (!full_rank) map.degenerate = true;
        double intercept = beta[4];
        for (int j = 0; j < 4; ++j) {
            map.coef[std::size_t(k)][std::size_t(j)] = beta[std::size_t(j)] / scale[j];
            intercept -= beta[std::size_t(j)] * mean[j] / scale[j];
        }
        map.intercept[std::size_t(k)] = intercept;
    }
    return map;
}

} // namespace detail

// Fits one affine map per detector component with at least
// `min_pairs_per_component` pairs; sparser components fall back to the
// pooled global fit. Fewer than five pairs in total is an error.
inline BoxRegressor fit_box_regressor(const std::vector<BoxPair>& pairs,
                                      std::size_t min_pairs_per_component = 5) {
    if (pairs.size() < 5)
        throw data_error("fit_box_regressor: needs at least 5 pairs, got " +
                         std::to_string(pairs.size()));
    for (const auto& p : pairs) {
        p.source.validate("fit_box_regressor: source");
        p.target.validate("fit_box_regressor: target");
    }
    BoxRegressor reg;
    std::vector<std::size_t> all(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) all[i] = i;
    reg.global = detail::fit_affine_box_map(pairs, all);
    reg.has_global = true;

    std::map<DetectorComponent, std::vector<std::size_t>> by_component;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        by_component[pairs[i].component].push_back(i);
    for (const auto& [comp, idx] : by_component) {
        if (idx.size() >= min_pairs_per_component)
            reg.per_component[comp] = detail::fit_affine_box_map(pairs, idx);
    }
    return reg;
}

inline Box apply_box_regressor(const BoxRegressor& reg, const Box& box,
                               DetectorComponent component) {
    box.validate("apply_box_regressor");
    auto it = reg.per_component.find(component);
    if (it != reg.per_component.end()) return it->second.apply(box);
    if (reg.has_global) return reg.global.apply(box);
    throw data_error("apply_box_regressor: no fit available for component '" +
                     std::string(to_string(component)) + "' and no global fallback");
}

// Derives the five cue regions. The body box is three head widths wide and
// six head heights tall with the head at the top centre; the upper-body box
// is its top half; the scene box is the whole image. The optional regressor
// maps the head box to a face estimate when no face box is given.
inline RegionSet derive_regions(const Box& head, double image_w, double image_h,
                                std::optional<Box> face = std::nullopt,
                                const BoxRegressor* head_to_face = nullptr,
                                DetectorComponent component = DetectorComponent::none) {
    head.validate("derive_regions: head");
    if (!(image_w > 0.0) || !(image_h > 0.0))
        throw data_error("derive_regions: image dims must be positive");
    RegionSet r;
    r.head = head;
    r.body = Box{head.x - head.w, head.y, 3.0 * head.w, 6.0 * head.h};
    r.upper = Box{r.body.x, r.body.y, r.body.w, r.body.h / 2.0};
    r.scene = Box{0.0, 0.0, image_w, image_h};
    if (face) {
        face->validate("derive_regions: face");
        r.face = *face;
    } else if (head_to_face) {
        r.face = apply_box_regressor(*head_to_face, head, component);
    } else {
        r.face = head;
    }
    return r;
}

// JSON serialization of the regressor (matrix + intercept per component).

inline nlohmann::json to_json(const AffineBoxMap& m) {
    nlohmann::json j;
    j["coef"] = m.coef;
    j["intercept"] = m.intercept;
    j["degenerate"] = m.degenerate;
    return j;
}

inline AffineBoxMap affine_box_map_from_json(const nlohmann::json& j) {
    AffineBoxMap m;
    auto coef = j.at("coef");
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) m.coef[std::size_t(i)][std::size_t(k)] = coef.at(std::size_t(i)).at(std::size_t(k)).get<double>();
    auto ic = j.at("intercept");
    for (int i = 0; i < 4; ++i) m.intercept[std::size_t(i)] = ic.at(std::size_t(i)).get<double>();
    m.degenerate = j.value("degenerate", false);
    return m;
}

inline nlohmann::json to_json(const BoxRegressor& reg) {
    nlohmann::json j;
    j["components"] = nlohmann::json::object();
    for (const auto& [comp, map] : reg.per_component)
        j["components"][to_string(comp)] = to_json(map);
    if (reg.has_global) j["global"] = to_json(reg.global);
    return j;
}

inline BoxRegressor box_regressor_from_json(const nlohmann::json& j) {
    BoxRegressor reg;
    if (j.contains("global")) {
        reg.global = affine_box_map_from_json(j.at("global"));
        reg.has_global = true;
    }
    if (j.contains("components"))
        for (auto it = j.at("components").begin(); it != j.at("components").end(); ++it)
            reg.per_component[detector_component_from_string(it.key())] =
                affine_box_map_from_json(it.value());
    return reg;
}

} // namespace cuebench
