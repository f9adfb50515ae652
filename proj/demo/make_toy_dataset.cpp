// Generates a small synthetic photo collection for exercising the full
// pipeline end to end: a JSON-Lines manifest plus one PPM per photo. Heads
// carry a per-identity colour so the h_rgb cue separates identities, and
// every photo gets its own album/timestamp structure so all split types
// have something to work with.
//
//   make_toy_dataset <out_dir> [identities] [instances_per_identity] [seed]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "cuebench/cuebench.hpp"

namespace fs = std::filesystem;
using namespace cuebench;

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr,
                     "usage: %s <out_dir> [identities=8] [instances_per_identity=12] [seed=0]\n",
                     argv[0]);
        return 1;
    }
    fs::path out_dir = argv[1];
    int n_identities = argc > 2 ? std::atoi(argv[2]) : 8;
    int per_identity = argc > 3 ? std::atoi(argv[3]) : 12;
    std::uint64_t seed = argc > 4 ? std::strtoull(argv[4], nullptr, 10) : 0;
    if (n_identities < 1 || per_identity < 1) {
        std::fprintf(stderr, "identity and instance counts must be positive\n");
        return 1;
    }

    fs::create_directories(out_dir / "images");
    std::ofstream manifest(out_dir / "manifest.jsonl");
    if (!manifest) {
        std::fprintf(stderr, "cannot write %s\n", (out_dir / "manifest.jsonl").c_str());
        return 1;
    }

    Rng rng(derive_seed(seed, "toy-dataset"));
    const int W = 96, H = 96;
    id64 instance_id = 1;
    id64 photo_id = 1;
    for (int ident = 0; ident < n_identities; ++ident) {
        // stable identity colour, away from black so noise cannot flip it
        double r = 0.25 + 0.7 * rng.uniform();
        double g = 0.25 + 0.7 * rng.uniform();
        double b = 0.25 + 0.7 * rng.uniform();
        for (int k = 0; k < per_identity; ++k) {
            ImagePatch photo{std::size_t(W), std::size_t(H)};
            for (auto& v : photo.pixels) v = float(0.1 * rng.uniform());

            double head_w = 24 + rng.below(9);
            double head_h = 24 + rng.below(9);
            double head_x = rng.below(std::uint64_t(W - int(head_w)));
            double head_y = rng.below(std::uint64_t(H - int(head_h)));
            for (int y = int(head_y); y < int(head_y + head_h); ++y)
                for (int x = int(head_x); x < int(head_x + head_w); ++x) {
                    std::size_t p = 3 * (std::size_t(y) * W + x);
                    photo.pixels[p + 0] = float(r + 0.05 * (rng.uniform() - 0.5));
                    photo.pixels[p + 1] = float(g + 0.05 * (rng.uniform() - 0.5));
                    photo.pixels[p + 2] = float(b + 0.05 * (rng.uniform() - 0.5));
                }

            save_ppm(photo, (out_dir / "images" / (std::to_string(photo_id) + ".ppm")).string());

            // a few albums per identity, strictly increasing timestamps
            id64 album_id = ident * 4 + k % 4 + 1;
            std::int64_t timestamp = 1400000000 + 86400 * (ident * per_identity + k);
            nlohmann::json line = {
                {"instance_id", instance_id},
                {"photo_id", photo_id},
                {"album_id", album_id},
                {"identity_id", ident + 1},
                {"head", {{"x", head_x}, {"y", head_y}, {"w", head_w}, {"h", head_h}}},
                {"image", {{"w", W}, {"h", H}}},
                {"timestamp", timestamp},
                {"detector_component", k % 3 == 0 ? "frontal0" : "none"},
            };
            manifest << line.dump() << '\n';
            ++instance_id;
            ++photo_id;
        }
    }
    manifest.close();
    std::printf("wrote %s: %d identities, %d instances, images in %s\n",
                (out_dir / "manifest.jsonl").c_str(), n_identities,
                n_identities * per_identity, (out_dir / "images").c_str());
    return 0;
}
