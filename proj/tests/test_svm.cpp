#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cuebench/features.hpp"
#include "cuebench/rng.hpp"
#include "cuebench/svm.hpp"

using namespace cuebench;
namespace fs = std::filesystem;

namespace {

struct RandomProblem {
    DenseMatrix x;
    std::vector<signed char> y;
};

// Uniform features in [-1, 1] with both classes guaranteed present.
RandomProblem random_problem(std::uint64_t seed, std::size_t max_n, std::size_t max_d) {
    Rng rng(seed);
    std::size_t n = 2 + rng.below(max_n - 1);
    std::size_t d = 1 + rng.below(max_d);
    RandomProblem rp;
    rp.x = DenseMatrix(n, d);
    for (auto& v : rp.x.data) v = float(rng.uniform() * 2.0 - 1.0);
    rp.y.resize(n);
    for (auto& v : rp.y) v = rng.below(2) ? 1 : -1;
    rp.y.front() = 1;
    rp.y.back() = -1;
    return rp;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

} // namespace

TEST_CASE("problem validation rejects malformed inputs", "[svm]") {
    DenseMatrix m(2, 2);
    CHECK_THROWS_AS(SvmProblem{}.validate(), data_error);
    CHECK_THROWS_AS(m.problem({1}).validate(), data_error);
    CHECK_THROWS_AS(m.problem({1, 0}).validate(), data_error);
    CHECK_THROWS_AS(m.problem({1, -1}, 0.0).validate(), data_error);
    CHECK_THROWS_AS(m.problem({1, -1}, -2.0).validate(), data_error);
    CHECK_NOTHROW(m.problem({1, -1}).validate());
    CHECK_THROWS_AS(DenseMatrix::from_rows({{1.0, 2.0}, {3.0}}), data_error);
}

TEST_CASE("the one-dimensional two-point problem recovers unit weight", "[svm]") {
    DenseMatrix m = DenseMatrix::from_rows({{1.0}, {-1.0}});
    SvmProblem p = m.problem({1, -1}, 1.0, false);

    SvmModel fast = train_svm(p, 1e-6, 100000, 3);
    CHECK(fast.stats.converged);
    CHECK(fast.w[0] == Catch::Approx(1.0).margin(1e-3));
    CHECK(fast.b == 0.0);

    SvmModel ref = solve_svm_reference(p);
    CHECK(ref.w[0] == Catch::Approx(1.0).margin(1e-6));

    // with the regularized bias the optimum is alpha = 0.5 each, same weight
    SvmProblem pb = m.problem({1, -1}, 1.0, true);
    SvmModel refb = solve_svm_reference(pb);
    CHECK(refb.w[0] == Catch::Approx(1.0).margin(1e-6));
    CHECK(refb.b == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("separable blobs are classified perfectly after training", "[svm]") {
    Rng rng(12);
    const std::size_t half = 20;
    DenseMatrix m(2 * half, 2);
    std::vector<signed char> y(2 * half);
    for (std::size_t i = 0; i < 2 * half; ++i) {
        double cx = i < half ? 2.0 : -2.0;
        m.row(i)[0] = float(cx + 0.5 * rng.normal());
        m.row(i)[1] = float(cx + 0.5 * rng.normal());
        y[i] = i < half ? 1 : -1;
    }
    SvmProblem p = m.problem(y);
    SvmModel model = train_svm(p, 1e-4, 10000, 5);
    CHECK(model.stats.converged);
    for (std::size_t i = 0; i < p.n; ++i)
        CHECK(sign_of(model.score(p.row(i), p.d)) == int(y[i]));
}

TEST_CASE("coordinate descent matches the projected-gradient oracle", "[svm]") {
    for (int trial = 0; trial < 40; ++trial) {
        RandomProblem rp = random_problem(5000 + std::uint64_t(trial), 20, 5);
        bool bias = trial % 2 == 0;
        SvmProblem p = rp.x.problem(rp.y, 1.0, bias);

        SvmModel fast = train_svm(p, 1e-6, 200000, std::uint64_t(trial));
        SvmModel ref = solve_svm_reference(p);
        REQUIRE(fast.stats.converged);
        REQUIRE(ref.stats.converged);

        double of = svm_primal_objective(p, fast);
        double orf = svm_primal_objective(p, ref);
        CHECK(std::abs(of - orf) <= 1e-3 * std::max(1.0, std::abs(orf)));
        // the oracle is the better optimizer, so never beat it meaningfully
        CHECK(of <= orf * (1.0 + 1e-3) + 1e-9);
    }
}

TEST_CASE("symmetric training data yields a vanishing bias", "[svm]") {
    Rng rng(42);
    const std::size_t half = 8, d = 3;
    DenseMatrix m(2 * half, d);
    std::vector<signed char> y(2 * half);
    for (std::size_t i = 0; i < half; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            float v = float(rng.uniform() * 2.0 - 1.0);
            m.row(i)[j] = v;
            m.row(half + i)[j] = -v;
        }
        y[i] = 1;
        y[half + i] = -1;
    }
    SvmProblem p = m.problem(y, 1.0, true);
    CHECK(std::abs(solve_svm_reference(p).b) < 1e-6);
    CHECK(std::abs(train_svm(p, 1e-8, 200000, 7).b) < 1e-6);
}

TEST_CASE("solvers are deterministic for a fixed seed", "[svm]") {
    RandomProblem rp = random_problem(77, 20, 4);
    SvmProblem p = rp.x.problem(rp.y);

    SvmModel a = train_svm(p, 1e-5, 100000, 9);
    SvmModel b = train_svm(p, 1e-5, 100000, 9);
    CHECK(a.w == b.w);
    CHECK(a.b == b.b);
    CHECK(a.stats.epochs == b.stats.epochs);

    SvmModel r1 = solve_svm_reference(p);
    SvmModel r2 = solve_svm_reference(p);
    CHECK(r1.w == r2.w);
    CHECK(r1.b == r2.b);
}

TEST_CASE("one-class training sets produce flagged constant models", "[svm]") {
    DenseMatrix m = DenseMatrix::from_rows({{1.0, 2.0}, {3.0, 4.0}});
    SvmModel pos = train_svm(m.problem({1, 1}));
    CHECK(pos.stats.degenerate);
    CHECK(pos.w == std::vector<double>{0.0, 0.0});
    CHECK(pos.b == 1.0);

    SvmModel neg = solve_svm_reference(m.problem({-1, -1}));
    CHECK(neg.stats.degenerate);
    CHECK(neg.b == -1.0);

    DenseMatrix big(51, 2);
    CHECK_THROWS_WITH(solve_svm_reference(big.problem(std::vector<signed char>(51, 1))),
                      Catch::Matchers::ContainsSubstring("50"));
}

TEST_CASE("the duality gap certificate holds at convergence", "[svm]") {
    for (int trial = 0; trial < 12; ++trial) {
        RandomProblem rp = random_problem(1000 + std::uint64_t(trial) * 13, 200, 50);
        SvmProblem p = rp.x.problem(rp.y);
        const double tol = 1e-4;
        SvmModel model = train_svm(p, tol, 200000, std::uint64_t(trial));
        REQUIRE(model.stats.converged);
        CHECK(model.stats.duality_gap <= 10.0 * tol);
        CHECK(model.stats.duality_gap >= -1e-9); // weak duality, up to roundoff
    }
}

TEST_CASE("dual variables stay inside the box at every epoch", "[svm]") {
    RandomProblem rp = random_problem(31, 60, 10);
    const double C = 0.7;
    SvmProblem p = rp.x.problem(rp.y, C);
    std::size_t epochs_seen = 0;
    AlphaObserver observer = [&](const std::vector<double>& alpha) {
        ++epochs_seen;
        REQUIRE(alpha.size() == p.n);
        for (double a : alpha) {
            REQUIRE(a >= 0.0);
            REQUIRE(a <= C);
        }
    };
    SvmModel model = train_svm(p, 1e-5, 100000, 2, observer);
    CHECK(model.stats.converged);
    CHECK(epochs_seen == model.stats.epochs);
}

TEST_CASE("jointly rescaling features and C preserves the sign pattern", "[svm]") {
    for (int trial = 0; trial < 5; ++trial) {
        RandomProblem rp = random_problem(600 + std::uint64_t(trial), 30, 6);
        // doubling inputs and quartering C keeps every scale factor a power
        // of two, so the two runs are numerically comparable
        DenseMatrix scaled = rp.x;
        for (auto& v : scaled.data) v *= 2.0f;
        SvmProblem p = rp.x.problem(rp.y, 1.0, false);
        SvmProblem q = scaled.problem(rp.y, 0.25, false);

        SvmModel mp = train_svm(p, 1e-6, 200000, 4);
        SvmModel mq = train_svm(q, 1e-6, 200000, 4);
        for (std::size_t i = 0; i < p.n; ++i)
            CHECK(sign_of(mp.score(p.row(i), p.d)) == sign_of(mq.score(q.row(i), q.d)));
    }
}

namespace {

// Near-orthogonal per-identity signatures plus noise, trivially separable.
FeatureBlock signature_block(std::size_t identities, std::size_t per_identity, std::size_t dim,
                             std::uint64_t seed, std::vector<id64>* ids_out,
                             std::unordered_map<id64, id64>* labels_out) {
    Rng rng(seed);
    FeatureBlock block("sig", dim);
    std::vector<float> row(dim);
    id64 next_instance = 1;
    for (std::size_t ident = 0; ident < identities; ++ident) {
        for (std::size_t k = 0; k < per_identity; ++k) {
            for (auto& v : row) v = float(0.05 * rng.normal());
            row[ident % dim] += 1.0f;
            block.add(next_instance, row);
            ids_out->push_back(next_instance);
            (*labels_out)[next_instance] = id64(10 + ident);
            ++next_instance;
        }
    }
    return block;
}

} // namespace

TEST_CASE("bank training fits one model per identity", "[svm]") {
    std::vector<id64> ids;
    std::unordered_map<id64, id64> labels;
    FeatureBlock block = signature_block(3, 5, 8, 21, &ids, &labels);
    // one extra identity with a single instance must still get a model
    std::vector<float> lone(8, 0.0f);
    lone[5] = 2.0f;
    block.add(99, lone);
    ids.push_back(99);
    labels[99] = 50;

    ModelBank bank = train_bank(block, labels, ids, 1.0, 17);
    REQUIRE(bank.models.size() == 4);
    CHECK(bank.identity_ids() == std::vector<id64>{10, 11, 12, 50});
    CHECK(bank.cue_name == "sig");
    CHECK(bank.dim == 8);

    ScoreMatrix scores = decision_scores(bank, block, ids);
    REQUIRE(scores.rows() == ids.size());
    REQUIRE(scores.cols() == 4);
    for (std::size_t r = 0; r < scores.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.cols(); ++c)
            if (scores.at(r, c) > scores.at(r, best)) best = c;
        CHECK(scores.identity_ids[best] == labels[scores.instance_ids[r]]);
    }

    CHECK_THROWS_AS(train_bank(block, labels, {}, 1.0, 0), data_error);
    std::unordered_map<id64, id64> missing = labels;
    missing.erase(99);
    CHECK_THROWS_WITH(train_bank(block, missing, ids, 1.0, 0),
                      Catch::Matchers::ContainsSubstring("no label for instance 99"));
}

TEST_CASE("bank training is invariant to the thread count", "[svm]") {
    std::vector<id64> ids;
    std::unordered_map<id64, id64> labels;
    FeatureBlock block = signature_block(4, 6, 10, 33, &ids, &labels);

    ModelBank one = train_bank(block, labels, ids, 1.0, 123, 1e-4, 10000, 1);
    ModelBank four = train_bank(block, labels, ids, 1.0, 123, 1e-4, 10000, 4);
    REQUIRE(one.models.size() == four.models.size());
    for (std::size_t k = 0; k < one.models.size(); ++k) {
        CHECK(one.models[k].identity_id == four.models[k].identity_id);
        CHECK(one.models[k].w == four.models[k].w);
        CHECK(one.models[k].b == four.models[k].b);
    }
}

TEST_CASE("score matrices follow the bank layout", "[svm]") {
    FeatureBlock block("toy", 3);
    block.add(1, std::vector<float>{2.0f, 1.0f, 4.0f});
    block.add(2, std::vector<float>{0.0f, 0.0f, 0.0f});

    ModelBank zero;
    zero.cue_name = "toy";
    zero.dim = 3;
    zero.models.resize(2);
    zero.models[0].identity_id = 4;
    zero.models[0].w = {0.0, 0.0, 0.0};
    zero.models[0].b = 0.5;
    zero.models[1].identity_id = 9;
    zero.models[1].w = {0.0, 0.0, 0.0};
    zero.models[1].b = -0.25;

    ScoreMatrix scores = decision_scores(zero, block, {1, 2});
    CHECK(scores.identity_ids == std::vector<id64>{4, 9});
    for (std::size_t r = 0; r < 2; ++r) {
        CHECK(scores.at(r, 0) == 0.5);
        CHECK(scores.at(r, 1) == -0.25);
    }

    // single hand-checkable dot product: 1*2 - 2*1 + 0.5*4 + 0.25
    ModelBank hand = zero;
    hand.models.resize(1);
    hand.models[0].identity_id = 4;
    hand.models[0].w = {1.0, -2.0, 0.5};
    hand.models[0].b = 0.25;
    ScoreMatrix s2 = decision_scores(hand, block, {1});
    CHECK(s2.at(0, 0) == Catch::Approx(2.25).margin(1e-12));

    ModelBank wrong = zero;
    wrong.dim = 5;
    CHECK_THROWS_WITH(decision_scores(wrong, block, {1}),
                      Catch::Matchers::ContainsSubstring("dim"));
}

TEST_CASE("model banks roundtrip through disk", "[svm]") {
    std::vector<id64> ids;
    std::unordered_map<id64, id64> labels;
    FeatureBlock block = signature_block(3, 4, 6, 55, &ids, &labels);
    ModelBank bank = train_bank(block, labels, ids, 1.0, 321);

    fs::path path = fs::temp_directory_path() /
                    ("cuebench_bank_" + std::to_string(::getpid()) + ".cmbk");
    save_model_bank(bank, path.string());
    ModelBank back = load_model_bank(path.string());

    CHECK(back.cue_name == bank.cue_name);
    CHECK(back.dim == bank.dim);
    CHECK(back.C == bank.C);
    CHECK(back.seed == bank.seed);
    REQUIRE(back.models.size() == bank.models.size());
    for (std::size_t k = 0; k < bank.models.size(); ++k) {
        CHECK(back.models[k].identity_id == bank.models[k].identity_id);
        REQUIRE(back.models[k].w.size() == bank.models[k].w.size());
        // weights travel as 32-bit floats, so compare after the same narrowing
        for (std::size_t j = 0; j < bank.dim; ++j)
            CHECK(back.models[k].w[j] == double(float(bank.models[k].w[j])));
        CHECK(back.models[k].b == double(float(bank.models[k].b)));
    }

    std::ifstream in(path, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    in.close();
    bytes[0] = 'Z';
    std::ofstream(path, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
    CHECK_THROWS_WITH(load_model_bank(path.string()),
                      Catch::Matchers::ContainsSubstring("bad magic"));
    fs::remove(path);
}

// Informational full-size timing, excluded from the default run. Invoke with
// the [slow] tag to measure; on one core this takes minutes.
TEST_CASE("full-size bank training completes", "[.][slow]") {
    const std::size_t identities = 581, per_identity = 11, dim = 4096;
    Rng rng(1);
    FeatureBlock block("stack", dim);
    std::vector<id64> ids;
    std::unordered_map<id64, id64> labels;
    std::vector<float> row(dim);
    id64 next = 1;
    for (std::size_t ident = 0; ident < identities; ++ident)
        for (std::size_t k = 0; k < per_identity; ++k) {
            for (auto& v : row) v = float(0.1 * rng.normal());
            row[ident * 7 % dim] += 1.0f;
            block.add(next, row);
            ids.push_back(next);
            labels[next] = id64(ident + 1);
            ++next;
        }
    auto t0 = std::chrono::steady_clock::now();
    ModelBank bank = train_bank(block, labels, ids, 1.0, 9, 1e-3);
    auto seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(bank.models.size() == identities);
    WARN("581-identity bank, dim 4096: trained in " << seconds << " s");
}
