#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "cuebench/image.hpp"
#include "cuebench/rng.hpp"

using namespace cuebench;
namespace fs = std::filesystem;

namespace {

ImagePatch random_patch(std::size_t w, std::size_t h, Rng& rng) {
    ImagePatch p(w, h);
    for (auto& v : p.pixels) v = float(rng.uniform());
    return p;
}

ImagePatch constant_patch(std::size_t w, std::size_t h, float value) {
    ImagePatch p(w, h);
    for (auto& v : p.pixels) v = value;
    return p;
}

} // namespace

TEST_CASE("ppm round trip preserves quantized pixels", "[image]") {
    Rng rng(1);
    ImagePatch p = random_patch(17, 9, rng);
    // quantize to the on-disk precision first so the round trip is exact
    for (auto& v : p.pixels) v = float(std::lround(v * 255.0f)) / 255.0f;
    fs::path path = fs::temp_directory_path() / "cuebench_img_rt.ppm";
    save_ppm(p, path.string());
    ImagePatch back = load_ppm(path.string());
    fs::remove(path);
    REQUIRE(back.width == p.width);
    REQUIRE(back.height == p.height);
    for (std::size_t i = 0; i < p.pixels.size(); ++i)
        REQUIRE(std::abs(back.pixels[i] - p.pixels[i]) < 1e-6f);
}

TEST_CASE("ppm loader accepts comments and rejects other formats", "[image]") {
    fs::path path = fs::temp_directory_path() / "cuebench_img_hdr.ppm";
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n# a comment\n2 1\n# another\n255\n";
        unsigned char px[6] = {255, 0, 0, 0, 255, 0};
        out.write(reinterpret_cast<char*>(px), 6);
    }
    ImagePatch p = load_ppm(path.string());
    CHECK(p.width == 2);
    CHECK(p.height == 1);
    CHECK(p.at(0, 0, 0) == 1.0f);
    CHECK(p.at(1, 0, 1) == 1.0f);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n2 1\n255\n";
    }
    CHECK_THROWS_AS(load_ppm(path.string()), data_error);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n2 2\n255\n";
        unsigned char px[3] = {1, 2, 3}; // far too short
        out.write(reinterpret_cast<char*>(px), 3);
    }
    CHECK_THROWS_WITH(load_ppm(path.string()), Catch::Matchers::ContainsSubstring("truncated"));
    fs::remove(path);
    CHECK_THROWS_AS(load_ppm((fs::temp_directory_path() / "cuebench_gone.ppm").string()),
                    data_error);
}

TEST_CASE("crop of the full image is the identity", "[image]") {
    Rng rng(2);
    ImagePatch p = random_patch(12, 8, rng);
    ImagePatch out = crop_region(p, Box{0, 0, 12, 8});
    REQUIRE(out.width == 12);
    REQUIRE(out.height == 8);
    CHECK(out.pixels == p.pixels);
}

TEST_CASE("crop fully outside the image is all zero", "[image]") {
    Rng rng(3);
    ImagePatch p = random_patch(12, 8, rng);
    ImagePatch out = crop_region(p, Box{100, 100, 4, 4});
    for (float v : out.pixels) REQUIRE(v == 0.0f);
}

TEST_CASE("partially outside crops match a per-pixel oracle", "[image]") {
    Rng rng(4);
    ImagePatch p = random_patch(20, 15, rng);
    for (int trial = 0; trial < 50; ++trial) {
        Box box{std::floor(40.0 * rng.uniform()) - 10.0, std::floor(30.0 * rng.uniform()) - 8.0,
                1.0 + std::floor(10.0 * rng.uniform()), 1.0 + std::floor(10.0 * rng.uniform())};
        ImagePatch out = crop_region(p, box);
        REQUIRE(out.width == std::size_t(std::ceil(box.w)));
        REQUIRE(out.height == std::size_t(std::ceil(box.h)));
        for (std::size_t j = 0; j < out.height; ++j)
            for (std::size_t i = 0; i < out.width; ++i) {
                long sx = long(std::floor(box.x)) + long(i);
                long sy = long(std::floor(box.y)) + long(j);
                for (std::size_t c = 0; c < 3; ++c) {
                    float want = 0.0f;
                    if (sx >= 0 && sy >= 0 && sx < long(p.width) && sy < long(p.height))
                        want = p.at(std::size_t(sx), std::size_t(sy), c);
                    REQUIRE(out.at(i, j, c) == want);
                }
            }
    }
}

TEST_CASE("fractional crop origins use the floored corner", "[image]") {
    Rng rng(5);
    ImagePatch p = random_patch(10, 10, rng);
    ImagePatch a = crop_region(p, Box{2.3, 3.7, 4.2, 2.9});
    REQUIRE(a.width == 5);  // ceil(4.2)
    REQUIRE(a.height == 3); // ceil(2.9)
    CHECK(a.at(0, 0, 0) == p.at(2, 3, 0));
}

TEST_CASE("gaussian blur preserves constants and mass", "[image]") {
    ImagePatch c = constant_patch(9, 9, 0.5f);
    ImagePatch out = gaussian_blur_5x5(c);
    for (float v : out.pixels) REQUIRE(std::abs(v - 0.5f) < 1e-6f);

    // blur must smooth: center impulse spreads, total mass preserved under
    // reflext borders away from the boundary
    ImagePatch impulse = constant_patch(11, 11, 0.0f);
    impulse.at(5, 5, 0) = 1.0f;
    ImagePatch blurred = gaussian_blur_5x5(impulse);
    CHECK(blurred.at(5, 5, 0) < 1.0f);
    CHECK(blurred.at(4, 5, 0) > 0.0f);
    double mass = 0.0;
    for (std::size_t y = 0; y < 11; ++y)
        for (std::size_t x = 0; x < 11; ++x) mass += blurred.at(x, y, 0);
    CHECK_THAT(mass, Catch::Matchers::WithinAbs(1.0, 1e-5));
    CHECK_THROWS_AS(gaussian_blur_5x5(c, 0.0), data_error);
}

TEST_CASE("reflect_index mirrors without repeating edges", "[image]") {
    CHECK(detail::reflect_index(-1, 5) == 1);
    CHECK(detail::reflect_index(-2, 5) == 2);
    CHECK(detail::reflect_index(0, 5) == 0);
    CHECK(detail::reflect_index(4, 5) == 4);
    CHECK(detail::reflect_index(5, 5) == 3);
    CHECK(detail::reflect_index(6, 5) == 2);
    CHECK(detail::reflect_index(7, 1) == 0);
}

TEST_CASE("bilinear resize is exact on constants and on 2x upsampling grids", "[image]") {
    ImagePatch c = constant_patch(13, 7, 0.25f);
    ImagePatch up = resize_bilinear(c, 40, 40);
    for (float v : up.pixels) REQUIRE(v == 0.25f);

    // a horizontal ramp stays a ramp under width-preserving resize
    ImagePatch ramp(8, 4);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch) ramp.at(x, y, ch) = float(x) / 7.0f;
    ImagePatch same = resize_bilinear(ramp, 8, 4);
    for (std::size_t i = 0; i < ramp.pixels.size(); ++i)
        REQUIRE(std::abs(same.pixels[i] - ramp.pixels[i]) < 1e-6f);
}

TEST_CASE("plane resize agrees with the rgb resize", "[image]") {
    Rng rng(6);
    ImagePatch p = random_patch(16, 11, rng);
    std::vector<double> plane(p.width * p.height);
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = p.pixels[3 * i]; // red channel
    ImagePatch rgb = resize_bilinear(p, 9, 13);
    std::vector<double> alone = resize_bilinear(plane, 16, 11, 9, 13);
    for (std::size_t i = 0; i < alone.size(); ++i)
        REQUIRE(std::abs(alone[i] - double(rgb.pixels[3 * i])) < 1e-6);
}

TEST_CASE("grayscale uses luma weights", "[image]") {
    ImagePatch p(2, 1);
    p.at(0, 0, 0) = 1.0f; // pure red
    p.at(1, 0, 1) = 1.0f; // pure green
    std::vector<double> g = to_grayscale(p);
    REQUIRE(g.size() == 2);
    CHECK_THAT(g[0], Catch::Matchers::WithinAbs(0.299, 1e-6));
    CHECK_THAT(g[1], Catch::Matchers::WithinAbs(0.587, 1e-6));
}
