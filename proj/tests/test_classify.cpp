#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cuebench/classify.hpp"
#include "cuebench/rng.hpp"

using namespace cuebench;
namespace fs = std::filesystem;

namespace {

ScoreMatrix hand_matrix() {
    ScoreMatrix m;
    m.instance_ids = {100, 101, 102};
    m.identity_ids = {1, 2, 3, 4};
    m.values = {
        5.0, 7.0, 7.0, 3.0, // tie between identities 2 and 3
        1.0, 0.0, 2.5, 2.0, //
        -1.0, -3.0, -2.0, -4.0,
    };
    return m;
}

std::string temp_file(const std::string& stem) {
    static int counter = 0;
    return (fs::temp_directory_path() /
            (stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
        .string();
}

} // namespace

TEST_CASE("argmax prediction breaks ties toward the lowest identity", "[classify]") {
    ScoreMatrix m = hand_matrix();
    std::vector<Prediction> preds = predict_from_scores(m);
    REQUIRE(preds.size() == 3);
    CHECK(preds[0].instance_id == 100);
    CHECK(preds[0].predicted_identity == 2); // not 3, despite the equal score
    CHECK(preds[0].margin == 0.0);
    CHECK(preds[1].predicted_identity == 3);
    CHECK(preds[1].margin == 0.5);
    CHECK(preds[2].predicted_identity == 1);
    CHECK(preds[2].margin == 1.0);
    for (const auto& p : preds) {
        CHECK(p.margin >= 0.0);
        CHECK_FALSE(p.true_identity.has_value());
        CHECK(p.rank == 0);
    }

    ScoreMatrix empty;
    empty.instance_ids = {1};
    CHECK_THROWS_AS(predict_from_scores(empty), data_error);
}

TEST_CASE("rank counts identities ahead of the true one", "[classify]") {
    ScoreMatrix m = hand_matrix();
    std::unordered_map<id64, id64> truth{{100, 3}, {101, 4}, {102, 1}};
    auto lookup = [&](id64 id) -> std::optional<id64> { return truth.at(id); };
    std::vector<Prediction> preds = predict_from_scores(m, lookup);

    // identity 3 ties the winner but has the higher id, so it ranks second
    CHECK(preds[0].true_identity == 3);
    CHECK(preds[0].rank == 2);
    CHECK(preds[1].rank == 2); // 2.0 is beaten only by 2.5
    CHECK(preds[2].rank == 1); // correct prediction ranks first

    // truth outside the identity columns leaves the rank unset
    auto unknown = [](id64) -> std::optional<id64> { return 99; };
    CHECK(predict_from_scores(m, unknown)[0].rank == 0);

    ScoreMatrix single;
    single.instance_ids = {7};
    single.identity_ids = {42};
    single.values = {-3.0};
    auto only = [](id64) -> std::optional<id64> { return 42; };
    Prediction p = predict_from_scores(single, only)[0];
    CHECK(p.predicted_identity == 42);
    CHECK(p.margin == 0.0);
    CHECK(p.rank == 1);
}

TEST_CASE("predictions are invariant under monotone score transforms", "[classify]") {
    Rng rng(8);
    ScoreMatrix m;
    m.instance_ids = {1, 2, 3, 4, 5};
    m.identity_ids = {10, 20, 30};
    m.values.resize(15);
    for (auto& v : m.values) v = rng.uniform() * 4.0 - 2.0;
    m.values[4] = m.values[3]; // plant one exact tie

    ScoreMatrix shifted = m;
    for (auto& v : shifted.values) v = 2.0 * v + 3.0;

    std::vector<Prediction> a = predict_from_scores(m);
    std::vector<Prediction> b = predict_from_scores(shifted);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i].predicted_identity == b[i].predicted_identity);
}

TEST_CASE("nearest neighbour follows the hand-worked table", "[classify]") {
    FeatureBlock train("pos", 2);
    train.add(1, std::vector<float>{0.0f, 0.0f});
    train.add(2, std::vector<float>{4.0f, 0.0f});
    train.add(3, std::vector<float>{0.0f, 3.0f});
    std::unordered_map<id64, id64> labels{{1, 10}, {2, 20}, {3, 10}};

    FeatureBlock test("pos", 2);
    test.add(50, std::vector<float>{1.0f, 0.0f}); // nearest 1 -> 10
    test.add(51, std::vector<float>{3.0f, 0.0f}); // nearest 2 -> 20
    test.add(52, std::vector<float>{0.0f, 2.0f}); // nearest 3 -> 10
    test.add(53, std::vector<float>{2.0f, 0.0f}); // tie 1 vs 2, lowest id -> 10
    test.add(54, std::vector<float>{4.0f, 0.0f}); // exact hit on 2 -> 20

    auto truth = [](id64 id) -> std::optional<id64> { return id == 51 ? 20 : 10; };
    std::vector<Prediction> preds = predict_nn(train, labels, {1, 2, 3}, test,
                                               {50, 51, 52, 53, 54}, truth);
    REQUIRE(preds.size() == 5);
    CHECK(preds[0].predicted_identity == 10);
    CHECK(preds[1].predicted_identity == 20);
    CHECK(preds[2].predicted_identity == 10);
    CHECK(preds[3].predicted_identity == 10);
    CHECK(preds[4].predicted_identity == 20);
    for (const auto& p : preds) {
        CHECK(p.margin == 0.0);
        CHECK(p.true_identity.has_value());
    }

    // single training instance labels everything alike
    std::vector<Prediction> lone =
        predict_nn(train, labels, {2}, test, {50, 52}, nullptr);
    CHECK(lone[0].predicted_identity == 20);
    CHECK(lone[1].predicted_identity == 20);

    // threaded scan returns the identical table
    std::vector<Prediction> threaded = predict_nn(train, labels, {1, 2, 3}, test,
                                                  {50, 51, 52, 53, 54}, truth, 3);
    for (std::size_t i = 0; i < preds.size(); ++i)
        CHECK(threaded[i].predicted_identity == preds[i].predicted_identity);
}

TEST_CASE("nearest neighbour ignores features shared by all vectors", "[classify]") {
    Rng rng(19);
    FeatureBlock train("raw", 3), train_aug("aug", 4);
    FeatureBlock test("raw", 3), test_aug("aug", 4);
    std::unordered_map<id64, id64> labels;
    for (id64 id = 1; id <= 6; ++id) {
        std::vector<float> v{float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
        std::vector<float> va = v;
        va.push_back(7.5f); // constant coordinate cancels in every distance
        if (id <= 3) {
            train.add(id, v);
            train_aug.add(id, va);
            labels[id] = id * 100;
        } else {
            test.add(id, v);
            test_aug.add(id, va);
        }
    }
    std::vector<Prediction> plain = predict_nn(train, labels, {1, 2, 3}, test, {4, 5, 6});
    std::vector<Prediction> aug = predict_nn(train_aug, labels, {1, 2, 3}, test_aug, {4, 5, 6});
    for (std::size_t i = 0; i < plain.size(); ++i)
        CHECK(plain[i].predicted_identity == aug[i].predicted_identity);
}

TEST_CASE("nearest neighbour validates its inputs", "[classify]") {
    FeatureBlock train("a", 2), test("a", 2), wide("a", 3);
    train.add(1, std::vector<float>{0.0f, 0.0f});
    test.add(2, std::vector<float>{1.0f, 1.0f});
    wide.add(2, std::vector<float>{1.0f, 1.0f, 1.0f});
    std::unordered_map<id64, id64> labels{{1, 10}};

    CHECK_THROWS_WITH(predict_nn(train, labels, {}, test, {2}),
                      Catch::Matchers::ContainsSubstring("empty training set"));
    CHECK_THROWS_WITH(predict_nn(train, labels, {1}, wide, {2}),
                      Catch::Matchers::ContainsSubstring("dim mismatch"));
    CHECK_THROWS_WITH(predict_nn(train, {}, {1}, test, {2}),
                      Catch::Matchers::ContainsSubstring("no label for training instance 1"));

    ModelBank empty_bank;
    CHECK_THROWS_WITH(predict_svm(empty_bank, test, {2}),
                      Catch::Matchers::ContainsSubstring("empty bank"));
}

TEST_CASE("score averaging is an elementwise mean", "[classify]") {
    ScoreMatrix a;
    a.instance_ids = {1, 2};
    a.identity_ids = {10, 20};
    a.values = {1.0, 3.0, -2.0, 0.0};

    ScoreMatrix b = a;
    b.values = {3.0, 1.0, 2.0, 4.0};

    ScoreMatrix mean = average_scores(a, b);
    CHECK(mean.values == std::vector<double>{2.0, 2.0, 0.0, 2.0});

    // idempotent, commutative, and exact cancellation against the negation
    CHECK(average_scores(a, a).values == a.values);
    CHECK(average_scores(a, b).values == average_scores(b, a).values);
    ScoreMatrix neg = a;
    for (auto& v : neg.values) v = -v;
    CHECK(average_scores(a, neg).values == std::vector<double>{0.0, 0.0, 0.0, 0.0});

    // second operand may list the same instances in any row order
    ScoreMatrix shuffled;
    shuffled.instance_ids = {2, 1};
    shuffled.identity_ids = {10, 20};
    shuffled.values = {2.0, 4.0, 3.0, 1.0};
    ScoreMatrix mean2 = average_scores(a, shuffled);
    CHECK(mean2.instance_ids == a.instance_ids);
    CHECK(mean2.values == mean.values);
}

TEST_CASE("score averaging rejects mismatched matrices", "[classify]") {
    ScoreMatrix a;
    a.instance_ids = {1};
    a.identity_ids = {10, 20};
    a.values = {1.0, 2.0};

    ScoreMatrix other_cols = a;
    other_cols.identity_ids = {10, 30};
    CHECK_THROWS_WITH(average_scores(a, other_cols),
                      Catch::Matchers::ContainsSubstring("identity sets differ"));

    ScoreMatrix more_rows = a;
    more_rows.instance_ids = {1, 2};
    more_rows.values = {1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_WITH(average_scores(a, more_rows),
                      Catch::Matchers::ContainsSubstring("instance sets differ"));

    ScoreMatrix other_rows = a;
    other_rows.instance_ids = {5};
    CHECK_THROWS_WITH(average_scores(a, other_rows),
                      Catch::Matchers::ContainsSubstring("missing from second matrix"));
}

TEST_CASE("score matrices roundtrip through disk", "[classify]") {
    Rng rng(3);
    ScoreMatrix m;
    m.instance_ids = {4, 9, 2};
    m.identity_ids = {1, 5};
    m.values.resize(6);
    for (auto& v : m.values) v = rng.normal();

    std::string path = temp_file("scores");
    save_score_matrix(m, path);
    ScoreMatrix back = load_score_matrix(path);
    CHECK(back.instance_ids == m.instance_ids);
    CHECK(back.identity_ids == m.identity_ids);
    REQUIRE(back.values.size() == m.values.size());
    // payload travels as 32-bit floats
    for (std::size_t i = 0; i < m.values.size(); ++i)
        CHECK(back.values[i] == double(float(m.values[i])));

    std::ifstream in(path, std::ios::binary);
    std::string bytes(std::istreambuf_iterator<char>(in), {});
    in.close();

    std::string clipped = bytes.substr(0, bytes.size() - 3);
    std::ofstream(path, std::ios::binary).write(clipped.data(), std::streamsize(clipped.size()));
    CHECK_THROWS_WITH(load_score_matrix(path),
                      Catch::Matchers::ContainsSubstring("truncated at record 2"));

    bytes[0] = 'x';
    std::ofstream(path, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
    CHECK_THROWS_WITH(load_score_matrix(path),
                      Catch::Matchers::ContainsSubstring("bad magic"));
    fs::remove(path);
}

TEST_CASE("prediction CSVs roundtrip with and without ground truth", "[classify]") {
    std::vector<Prediction> preds(3);
    preds[0].instance_id = 11;
    preds[0].predicted_identity = 5;
    preds[0].true_identity = 5;
    preds[0].margin = 0.125;
    preds[0].rank = 1;
    preds[1].instance_id = 12;
    preds[1].predicted_identity = 7;
    preds[1].true_identity = 5;
    preds[1].margin = 1.0 / 3.0;
    preds[1].rank = 4;
    preds[2].instance_id = 13;
    preds[2].predicted_identity = 9; // no truth attached

    std::string path = temp_file("preds");
    save_predictions_csv(preds, path);

    std::ifstream in(path);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    in.close();
    CHECK(header == "instance_id,predicted,true,correct,margin,rank");
    CHECK(first == "11,5,5,1,0.125,1");

    std::vector<Prediction> back = load_predictions_csv(path);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].instance_id == preds[i].instance_id);
        CHECK(back[i].predicted_identity == preds[i].predicted_identity);
        CHECK(back[i].true_identity == preds[i].true_identity);
        CHECK(back[i].margin == preds[i].margin); // %.17g is lossless
        CHECK(back[i].rank == preds[i].rank);
    }

    std::ofstream bad(path);
    bad << "wrong,header\n";
    bad.close();
    CHECK_THROWS_WITH(load_predictions_csv(path),
                      Catch::Matchers::ContainsSubstring("missing prediction CSV header"));

    std::ofstream bad2(path);
    bad2 << "instance_id,predicted,true,correct,margin,rank\n";
    bad2 << "not_a_number,5,5,1,0.5,1\n";
    bad2.close();
    CHECK_THROWS_WITH(load_predictions_csv(path), Catch::Matchers::ContainsSubstring("line 2"));
    fs::remove(path);
}
