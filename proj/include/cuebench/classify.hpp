#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuebench/common.hpp"
#include "cuebench/features.hpp"
#include "cuebench/parallel.hpp"
#include "cuebench/svm.hpp"

namespace cuebench {

struct Prediction {
    id64 instance_id = 0;
    id64 predicted_identity = 0;
    std::optional<id64> true_identity;
    double margin = 0.0;      // top1 - top2 decision value, >= 0
    std::size_t rank = 0;     // 1-based rank of the true identity, 0 if unknown
};

namespace detail {

// Argmax with ties to the lowest identity; columns are already ascending,
// so the first maximum wins. Rank counts identities strictly ahead of the
// true one, breaking exact score ties by identity order.
inline Prediction predict_row(const ScoreMatrix& scores, std::size_t r,
                              std::optional<id64> true_identity) {
    const double* row = scores.row(r);
    std::size_t cols = scores.cols();
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
        if (row[c] > row[best]) best = c;
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
        if (c != best) second = std::max(second, row[c]);

    Prediction pred;
    pred.instance_id = scores.instance_ids[r];
    pred.predicted_identity = scores.identity_ids[best];
    pred.margin = cols > 1 ? row[best] - second : 0.0;
    pred.true_identity = true_identity;
    if (true_identity) {
        auto it = std::find(scores.identity_ids.begin(), scores.identity_ids.end(),
                            *true_identity);
        if (it != scores.identity_ids.end()) {
            std::size_t t = std::size_t(it - scores.identity_ids.begin());
            std::size_t rank = 1;
            for (std::size_t c = 0; c < cols; ++c) {
                if (c == t) continue;
                if (row[c] > row[t] || (row[c] == row[t] && c < t)) ++rank;
            }
            pred.rank = rank;
        }
    }
    return pred;
}

} // namespace detail

using TrueIdentityLookup = std::function<std::optional<id64>(id64)>;

inline std::vector<Prediction> predict_from_scores(const ScoreMatrix& scores,
                                                   const TrueIdentityLookup& truth = nullptr) {
    if (scores.cols() == 0) throw data_error("predict_from_scores: no identities");
    std::vector<Prediction> out(scores.rows());
    for (std::size_t r = 0; r < scores.rows(); ++r)
        out[r] = detail::predict_row(scores, r,
                                     truth ? truth(scores.instance_ids[r]) : std::nullopt);
    return out;
}

inline std::vector<Prediction> predict_svm(const ModelBank& bank, const FeatureBlock& block,
                                           const std::vector<id64>& ids,
                                           const TrueIdentityLookup& truth = nullptr,
                                           unsigned threads = 0) {
    if (bank.models.empty()) throw data_error("predict_svm: empty bank");
    return predict_from_scores(decision_scores(bank, block, ids, threads), truth);
}

// Brute-force nearest neighbour in squared L2. Exact distance ties go to
// the training instance with the lowest instance_id; scanning train ids in
// ascending id order with a strict '<' realizes exactly that.
inline std::vector<Prediction> predict_nn(const FeatureBlock& train_block,
                                          const std::unordered_map<id64, id64>& train_labels,
                                          const std::vector<id64>& train_ids,
                                          const FeatureBlock& test_block,
                                          const std::vector<id64>& test_ids,
                                          const TrueIdentityLookup& truth = nullptr,
                                          unsigned threads = 0) {
    if (train_ids.empty()) throw data_error("predict_nn: empty training set");
    if (train_block.dim() != test_block.dim())
        throw data_error("predict_nn: dim mismatch: train " + std::to_string(train_block.dim()) +
                         " vs test " + std::to_string(test_block.dim()));
    require_features_for(train_block, train_ids);
    require_features_for(test_block, test_ids);
    std::vector<id64> ordered_train = train_ids;
    std::sort(ordered_train.begin(), ordered_train.end());
    for (id64 id : ordered_train)
        if (!train_labels.count(id))
            throw data_error("predict_nn: no label for training instance " + std::to_string(id));

    const std::size_t d = train_block.dim();
    std::vector<Prediction> out(test_ids.size());
    parallel_for(
        test_ids.size(),
        [&](std::size_t t) {
            const float* x = test_block.row(test_ids[t]);
            double best = std::numeric_limits<double>::infinity();
            id64 best_train = ordered_train.front();
            for (id64 tr : ordered_train) {
                const float* v = train_block.row(tr);
                double dist = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    double diff = double(x[j]) - double(v[j]);
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    best_train = tr;
                }
            }
            Prediction pred;
            pred.instance_id = test_ids[t];
            pred.predicted_identity = train_labels.at(best_train);
            pred.margin = 0.0;
            pred.true_identity = truth ? truth(test_ids[t]) : std::nullopt;
            out[t] = pred;
        },
        threads);
    return out;
}

// Elementwise mean of two score matrices over the same instances and
// identities. Row order may differ between the two; the output follows a.
inline ScoreMatrix average_scores(const ScoreMatrix& a, const ScoreMatrix& b) {
    if (a.identity_ids != b.identity_ids)
        throw data_error("average_scores: identity sets differ");
    if (a.rows() != b.rows())
        throw data_error("average_scores: instance sets differ");
    std::unordered_map<id64, std::size_t> b_row;
    for (std::size_t r = 0; r < b.rows(); ++r) b_row[b.instance_ids[r]] = r;
    ScoreMatrix out;
    out.instance_ids = a.instance_ids;
    out.identity_ids = a.identity_ids;
    out.values.resize(a.values.size());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto it = b_row.find(a.instance_ids[r]);
        if (it == b_row.end())
            throw data_error("average_scores: instance " + std::to_string(a.instance_ids[r]) +
                             " missing from second matrix");
        const double* pa = a.row(r);
        const double* pb = b.row(it->second);
        double* po = out.values.data() + r * out.cols();
        for (std::size_t c = 0; c < a.cols(); ++c) po[c] = 0.5 * (pa[c] + pb[c]);
    }
    return out;
}

// Score matrix file: magic "CSCM" | version u32 | json_len u32
// | {"identity_ids": [...]} | count u64 | { instance_id u64, cols x f32 }.
inline constexpr std::uint32_t kScoreMatrixVersion = 1;

inline void save_score_matrix(const ScoreMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    nlohmann::json header = {{"identity_ids", m.identity_ids}};
    std::string hs = header.dump();
    using namespace detail;
    put_bytes(out, "CSCM", 4);
    put_u32(out, kScoreMatrixVersion);
    put_u32(out, std::uint32_t(hs.size()));
    put_bytes(out, hs.data(), hs.size());
    put_u64(out, std::uint64_t(m.rows()));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        put_u64(out, std::uint64_t(m.instance_ids[r]));
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) put_f32(out, float(row[c]));
    }
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline ScoreMatrix load_score_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open score matrix '" + path + "'");
    using namespace detail;
    char magic[4];
    if (!get_bytes(in, magic, 4) || std::memcmp(magic, "CSCM", 4) != 0)
        throw data_error("'" + path + "': bad magic, not a score matrix");
    std::uint32_t version, json_len;
    if (!get_u32(in, version) || version != kScoreMatrixVersion)
        throw data_error("'" + path + "': unsupported score matrix version");
    if (!get_u32(in, json_len)) throw data_error("'" + path + "': truncated header");
    std::string hs(json_len, '\0');
    if (json_len > 0 && !get_bytes(in, hs.data(), json_len))
        throw data_error("'" + path + "': truncated header");
    ScoreMatrix m;
    try {
        m.identity_ids = nlohmann::json::parse(hs).at("identity_ids").get<std::vector<id64>>();
    } catch (const nlohmann::json::exception& e) {
        throw data_error("'" + path + "': bad header JSON: " + e.what());
    }
    std::uint64_t count;
    if (!get_u64(in, count)) throw data_error("'" + path + "': truncated header");
    m.instance_ids.resize(count);
    m.values.resize(count * m.identity_ids.size());
    for (std::uint64_t r = 0; r < count; ++r) {
        std::uint64_t id;
        bool ok = get_u64(in, id);
        float v = 0.0f;
        for (std::size_t c = 0; ok && c < m.identity_ids.size(); ++c) {
            ok = get_f32(in, v);
            m.values[r * m.identity_ids.size() + c] = double(v);
        }
        if (!ok) throw data_error("'" + path + "': truncated at record " + std::to_string(r));
        m.instance_ids[r] = id64(id);
    }
    return m;
}

// Prediction CSV: instance_id,predicted,true,correct,margin,rank.
// Unknown truth serializes as empty true/correct/rank fields.
inline void save_predictions_csv(const std::vector<Prediction>& preds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << "instance_id,predicted,true,correct,margin,rank\n";
    for (const auto& p : preds) {
        out << p.instance_id << ',' << p.predicted_identity << ',';
        if (p.true_identity) {
            out << *p.true_identity << ','
                << (p.predicted_identity == *p.true_identity ? 1 : 0) << ',';
        } else {
            out << ",,";
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", p.margin);
        out << buf << ',';
        if (p.rank > 0) out << p.rank;
        out << '\n';
    }
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline std::vector<Prediction> load_predictions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open predictions file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) ||
        line.rfind("instance_id,predicted,true,correct,margin,rank", 0) != 0)
        throw data_error("'" + path + "': missing prediction CSV header");
    std::vector<Prediction> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        while (fields.size() < 6) fields.push_back("");
        if (fields.size() != 6)
            throw data_error("'" + path + "' line " + std::to_string(line_no) +
                             ": expected 6 fields");
        try {
            Prediction p;
            p.instance_id = std::stoll(fields[0]);
            p.predicted_identity = std::stoll(fields[1]);
            if (!fields[2].empty()) p.true_identity = std::stoll(fields[2]);
            if (!fields[4].empty()) p.margin = std::stod(fields[4]);
            if (!fields[5].empty()) p.rank = std::size_t(std::stoull(fields[5]));
            out.push_back(p);
        } catch (const std::exception&) {
            throw data_error("'" + path + "' line " + std::to_string(line_no) +
                             ": malformed row");
        }
    }
    return out;
}

} // namespace cuebench
