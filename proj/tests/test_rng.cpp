#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

#include "cuebench/rng.hpp"

using namespace cuebench;

TEST_CASE("rng streams are deterministic per seed", "[rng]") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        std::uint64_t va = a.next(), vb = b.next(), vc = c.next();
        all_equal = all_equal && va == vb;
        any_diff = any_diff || va != vc;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("below stays in range and covers small supports", "[rng]") {
    Rng rng(7);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        std::uint64_t v = rng.below(5);
        REQUIRE(v < 5);
        seen.insert(v);
    }
    CHECK(seen.size() == 5);
    CHECK_THROWS_AS(rng.below(0), invariant_error);
}

TEST_CASE("uniform lies in [0,1) and normal has sane moments", "[rng]") {
    Rng rng(11);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        double g = rng.normal();
        sum += g;
        sum2 += g * g;
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("derive_seed separates labels, salts and masters", "[rng]") {
    CHECK(derive_seed(1, "album") == derive_seed(1, "album"));
    CHECK(derive_seed(1, "album") != derive_seed(1, "time"));
    CHECK(derive_seed(1, "album") != derive_seed(2, "album"));
    CHECK(derive_seed(1, std::uint64_t(5)) != derive_seed(1, std::uint64_t(6)));
    CHECK(derive_seed(1, "curve", 0) != derive_seed(1, "curve", 1));
    CHECK(derive_seed(1, "curve", 0) != derive_seed(1, "subsample", 0));
}

TEST_CASE("shuffle permutes and is seed-stable", "[rng]") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    std::vector<int> a = v, b = v;
    Rng r1(3), r2(3), r3(4);
    shuffle(a, r1);
    shuffle(b, r2);
    CHECK(a == b);
    std::vector<int> sorted_a = a;
    std::sort(sorted_a.begin(), sorted_a.end());
    CHECK(sorted_a == v);
    std::vector<int> c = v;
    shuffle(c, r3);
    CHECK(a != c);
}

TEST_CASE("sample_without_replacement draws k distinct elements", "[rng]") {
    std::vector<int> pool(20);
    for (int i = 0; i < 20; ++i) pool[i] = 100 + i;
    Rng rng(9);
    std::vector<int> got = sample_without_replacement(pool, 7, rng);
    REQUIRE(got.size() == 7);
    std::set<int> unique(got.begin(), got.end());
    CHECK(unique.size() == 7);
    for (int v : got) CHECK((v >= 100 && v < 120));

    Rng again(9);
    CHECK(sample_without_replacement(pool, 7, again) == got);

    Rng big(9);
    std::vector<int> all = sample_without_replacement(pool, 50, big);
    std::sort(all.begin(), all.end());
    CHECK(all == pool);
}
