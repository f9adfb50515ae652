#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cuebench/common.hpp"
#include "cuebench/corpus.hpp"
#include "cuebench/features.hpp"
#include "cuebench/gist.hpp"
#include "cuebench/image.hpp"
#include "cuebench/parallel.hpp"

namespace cuebench {

inline constexpr std::size_t kRgbHeadDim = 4800; // 40*40*3

// Blur-then-downscale colour baseline on the head crop. The blur removes
// aliasing structure the 40x40 grid cannot carry.
inline std::vector<double> rgb_head_feature(const ImagePatch& head_patch, double sigma = 1.0) {
    if (head_patch.empty()) throw data_error("rgb_head_feature: empty patch");
    ImagePatch small = resize_bilinear(gaussian_blur_5x5(head_patch, sigma), 40, 40);
    std::vector<double> out(kRgbHeadDim);
    for (std::size_t i = 0; i < kRgbHeadDim; ++i)
        out[i] = std::clamp(double(small.pixels[i]), 0.0, 1.0);
    return out;
}

// Built-in cue extractors, keyed by the names the CLI accepts.
inline bool is_builtin_cue(const std::string& cue) { return cue == "h_rgb" || cue == "gist_s"; }

inline std::size_t builtin_cue_dim(const std::string& cue) {
    if (cue == "h_rgb") return kRgbHeadDim;
    if (cue == "gist_s") return GistConfig{}.dim();
    throw data_error("unknown cue '" + cue + "' (built-in cues: h_rgb, gist_s)");
}

// Computes one cue for every instance. `load_photo` maps an instance to its
// decoded photo; extraction runs per instance in parallel but the block
// keeps corpus order regardless of scheduling.
inline FeatureBlock extract_cue(const Corpus& corpus, const std::string& cue,
                                const std::function<ImagePatch(const Instance&)>& load_photo,
                                unsigned threads = 0, const GistConfig& gist_cfg = {}) {
    std::size_t dim = builtin_cue_dim(cue);
    std::vector<std::vector<double>> rows(corpus.instances.size());
    parallel_for(
        corpus.instances.size(),
        [&](std::size_t i) {
            const Instance& inst = corpus.instances[i];
            ImagePatch photo = load_photo(inst);
            if (photo.empty())
                throw data_error("no image data for photo " + std::to_string(inst.photo_id));
            if (cue == "h_rgb") {
                RegionSet regions = derive_regions(inst.head, inst.image_w, inst.image_h);
                rows[i] = rgb_head_feature(crop_region(photo, regions.head));
            } else {
                rows[i] = gist_feature(photo, gist_cfg);
            }
        },
        threads);
    FeatureBlock block(cue, dim);
    for (std::size_t i = 0; i < corpus.instances.size(); ++i)
        block.add(corpus.instances[i].instance_id, rows[i]);
    return block;
}

} // namespace cuebench
