#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuebench/classify.hpp"
#include "cuebench/common.hpp"
#include "cuebench/corpus.hpp"
#include "cuebench/features.hpp"
#include "cuebench/geometry.hpp"
#include "cuebench/splits.hpp"
#include "cuebench/svm.hpp"

namespace cuebench {

struct ClassifierSpec {
    enum class Kind { svm, nn };
    Kind kind = Kind::svm;
    double C = 1.0;
    double tol = 1e-4;
    std::size_t max_iter = 10000;
    std::uint64_t seed = 0;
};

struct BinStat {
    std::string label;
    std::size_t population = 0;
    std::size_t failures = 0;
};

struct FailureHistograms {
    std::vector<BinStat> orientation;       // frontal vs non-frontal
    std::vector<BinStat> head_height;       // [0,100) / [100,200) / [200,inf)
    std::vector<BinStat> truncation;        // body-box area outside the image
    std::vector<BinStat> identity_accuracy; // never-correct bin + accuracy deciles
    std::size_t never_correct = 0;
};

struct EvalReport {
    double overall_accuracy = 0.0;            // percent
    std::array<double, 2> fold_accuracy{};    // indexed by tested fold
    std::array<std::size_t, 2> fold_total{};  // test instances per tested fold
    std::array<std::size_t, 2> fold_correct{};
    double chance_level = 0.0;                // percent
    std::map<id64, double> per_identity_accuracy; // percent, over test predictions
    FailureHistograms strata;
    std::size_t never_correct = 0;
    std::vector<Prediction> predictions;      // both directions, test order
};

inline double accuracy_percent(std::size_t correct, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * double(correct) / double(total);
}

inline double chance_level(const SplitAssignment& split) {
    if (split.identities.empty()) throw data_error("chance_level: split retains no identities");
    return 100.0 / double(split.identities.size());
}

// Failure strata over a prediction set. Populations count every prediction
// with known truth; failures count the wrong ones. Bins are fixed by the
// protocol: detector orientation, head pixel height, and how much of the
// derived body box lies outside the image.
inline FailureHistograms failure_analysis(const std::vector<Prediction>& predictions,
                                          const Corpus& corpus) {
    FailureHistograms h;
    h.orientation = {{"frontal", 0, 0}, {"non_frontal", 0, 0}};
    h.head_height = {{"[0,100)", 0, 0}, {"[100,200)", 0, 0}, {"[200,inf)", 0, 0}};
    h.truncation = {{"0", 0, 0}, {"(0,0.25]", 0, 0}, {"(0.25,0.5]", 0, 0}, {"(0.5,1]", 0, 0}};
    h.identity_accuracy.push_back({"never_correct", 0, 0});
    for (int b = 0; b < 10; ++b) {
        char label[16];
        std::snprintf(label, sizeof label, "(%d,%d]", b * 10, (b + 1) * 10);
        h.identity_accuracy.push_back({label, 0, 0});
    }

    std::map<id64, std::pair<std::size_t, std::size_t>> per_identity; // correct, total
    for (const auto& p : predictions) {
        if (!p.true_identity) continue;
        const Instance& inst = corpus.instance(p.instance_id);
        bool correct = p.predicted_identity == *p.true_identity;

        std::size_t orient = inst.detector_component == DetectorComponent::frontal0 ? 0 : 1;
        std::size_t height = inst.head.h < 100.0 ? 0 : inst.head.h < 200.0 ? 1 : 2;
        Box body = derive_regions(inst.head, inst.image_w, inst.image_h).body;
        double trunc = truncation_fraction(body, inst.image_w, inst.image_h);
        std::size_t tbin = trunc == 0.0 ? 0 : trunc <= 0.25 ? 1 : trunc <= 0.5 ? 2 : 3;

        for (auto [hist, bin] : {std::pair{&h.orientation, orient},
                                 std::pair{&h.head_height, height},
                                 std::pair{&h.truncation, tbin}}) {
            (*hist)[bin].population++;
            if (!correct) (*hist)[bin].failures++;
        }
        auto& [c, t] = per_identity[*p.true_identity];
        if (correct) ++c;
        ++t;
    }
    for (const auto& [identity, ct] : per_identity) {
        (void)identity;
        double acc = double(ct.first) / double(ct.second);
        std::size_t bin;
        if (ct.first == 0) {
            bin = 0;
            ++h.never_correct;
        } else {
            bin = std::size_t(std::ceil(acc * 10.0 - 1e-12)); // deciles (0,0.1], ...
            bin = std::min<std::size_t>(bin, 10);
        }
        h.identity_accuracy[bin].population++;
    }
    return h;
}

namespace detail {

inline std::unordered_map<id64, id64> identity_labels(const Corpus& corpus,
                                                      const std::vector<id64>& ids) {
    std::unordered_map<id64, id64> labels;
    for (id64 id : ids) labels[id] = corpus.instance(id).identity_id;
    return labels;
}

// Restricts an externally supplied score matrix to the given instances,
// requiring the identity columns to match the bank's exactly.
inline ScoreMatrix slice_scores(const ScoreMatrix& external, const std::vector<id64>& ids,
                                const std::vector<id64>& identity_ids) {
    if (external.identity_ids != identity_ids)
        throw data_error("external scores: identity set does not match the evaluated split");
    std::unordered_map<id64, std::size_t> row_of;
    for (std::size_t r = 0; r < external.rows(); ++r) row_of[external.instance_ids[r]] = r;
    ScoreMatrix out;
    out.identity_ids = identity_ids;
    out.instance_ids = ids;
    out.values.reserve(ids.size() * identity_ids.size());
    for (id64 id : ids) {
        auto it = row_of.find(id);
        if (it == row_of.end())
            throw data_error("external scores: no row for instance " + std::to_string(id));
        const double* row = external.row(it->second);
        out.values.insert(out.values.end(), row, row + identity_ids.size());
    }
    return out;
}

// One direction of the protocol: train on `train_fold`, test on the other.
inline std::vector<Prediction> run_direction(const Corpus& corpus, const SplitAssignment& split,
                                             const FeatureBlock& block,
                                             const ClassifierSpec& clf, int train_fold,
                                             const ScoreMatrix* external = nullptr,
                                             unsigned threads = 0) {
    std::vector<id64> train_ids = split.fold_ids(train_fold);
    std::vector<id64> test_ids = split.fold_ids(1 - train_fold);
    if (train_ids.empty())
        throw data_error("run_two_fold: training fold " + std::to_string(train_fold) +
                         " is empty");
    if (test_ids.empty())
        throw data_error("run_two_fold: test fold " + std::to_string(1 - train_fold) +
                         " is empty");
    require_features_for(block, train_ids);
    require_features_for(block, test_ids);
    auto labels = identity_labels(corpus, train_ids);
    TrueIdentityLookup truth = [&corpus](id64 id) -> std::optional<id64> {
        return corpus.instance(id).identity_id;
    };
    if (clf.kind == ClassifierSpec::Kind::nn)
        return predict_nn(block, labels, train_ids, block, test_ids, truth, threads);

    ModelBank bank =
        train_bank(block, labels, train_ids, clf.C,
                   derive_seed(clf.seed, "direction", std::uint64_t(train_fold)), clf.tol,
                   clf.max_iter, threads);
    ScoreMatrix scores = decision_scores(bank, block, test_ids, threads);
    if (external)
        scores = average_scores(scores, slice_scores(*external, test_ids, scores.identity_ids));
    return predict_from_scores(scores, truth);
}

} // namespace detail

// Both protocol directions: fold0-trained models tested on fold1 and vice
// versa. Overall accuracy weights each test instance equally.
inline EvalReport run_two_fold(const Corpus& corpus, const SplitAssignment& split,
                               const FeatureBlock& block, const ClassifierSpec& clf = {},
                               const ScoreMatrix* external_scores = nullptr,
                               unsigned threads = 0) {
    if (split.identities.empty()) throw data_error("run_two_fold: split retains no identities");
    EvalReport report;
    report.chance_level = chance_level(split);
    for (int train_fold = 0; train_fold < 2; ++train_fold) {
        std::vector<Prediction> preds = detail::run_direction(corpus, split, block, clf,
                                                              train_fold, external_scores, threads);
        int tested = 1 - train_fold;
        for (const auto& p : preds) {
            report.fold_total[tested]++;
            if (p.true_identity && p.predicted_identity == *p.true_identity)
                report.fold_correct[tested]++;
        }
        report.predictions.insert(report.predictions.end(), preds.begin(), preds.end());
    }
    for (int fold = 0; fold < 2; ++fold)
        report.fold_accuracy[fold] = accuracy_percent(report.fold_correct[fold],
                                                      report.fold_total[fold]);
    report.overall_accuracy = accuracy_percent(report.fold_correct[0] + report.fold_correct[1],
                                               report.fold_total[0] + report.fold_total[1]);

    std::map<id64, std::pair<std::size_t, std::size_t>> per_identity;
    for (const auto& p : report.predictions) {
        if (!p.true_identity) continue;
        auto& [c, t] = per_identity[*p.true_identity];
        if (p.predicted_identity == *p.true_identity) ++c;
        ++t;
    }
    for (const auto& [identity, ct] : per_identity)
        report.per_identity_accuracy[identity] = accuracy_percent(ct.first, ct.second);
    report.strata = failure_analysis(report.predictions, corpus);
    report.never_correct = report.strata.never_correct;
    return report;
}

struct CurvePoint {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    double accuracy = 0.0; // percent, both directions combined
};

struct CurveSummary {
    std::size_t k = 0;
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation over seeds
};

struct LearningCurve {
    std::vector<CurvePoint> points;
    std::vector<CurveSummary> summary;
};

// Accuracy as a function of the per-identity training budget k. Each trial
// subsamples the training fold of each direction with its own derived seed;
// k at or above the fold sizes reproduces run_two_fold exactly.
inline LearningCurve learning_curve(const Corpus& corpus, const SplitAssignment& split,
                                    const FeatureBlock& block, const ClassifierSpec& clf,
                                    const std::vector<std::size_t>& ks,
                                    const std::vector<std::uint64_t>& seeds,
                                    unsigned threads = 0) {
    if (split.identities.empty())
        throw data_error("learning_curve: split retains no identities");
    LearningCurve curve;
    for (std::size_t k : ks) {
        double sum = 0.0, sum2 = 0.0;
        for (std::uint64_t seed : seeds) {
            std::size_t correct = 0, total = 0;
            for (int train_fold = 0; train_fold < 2; ++train_fold) {
                SplitAssignment sub = subsample_training(
                    split, k, derive_seed(seed, "subsample", std::uint64_t(train_fold)),
                    train_fold);
                std::vector<Prediction> preds =
                    detail::run_direction(corpus, sub, block, clf, train_fold, nullptr, threads);
                for (const auto& p : preds) {
                    if (p.true_identity && p.predicted_identity == *p.true_identity) ++correct;
                    ++total;
                }
            }
            double acc = accuracy_percent(correct, total);
            curve.points.push_back({k, seed, acc});
            sum += acc;
            sum2 += acc * acc;
        }
        double n = double(seeds.size());
        double mean = n > 0.0 ? sum / n : 0.0;
        double var = n > 1.0 ? std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0)) : 0.0;
        curve.summary.push_back({k, mean, std::sqrt(var)});
    }
    return curve;
}

// Scored head detection, optionally carrying the recognizer's identity
// guess for identified-recall.
struct Detection {
    id64 photo_id = 0;
    Box box;
    double score = 0.0;
    std::optional<id64> predicted_identity;
};

struct RecallPoint {
    std::size_t k = 0;          // average detections kept per photo
    std::size_t kept = 0;       // detections inside the budget
    double recall = 0.0;        // matched ground-truth heads / all heads
    std::optional<double> identified_recall;
};

// Detection recall as the per-photo detection budget grows. The budget is
// global (k x number of photos) by default, mirroring an "average k per
// image" reading; per_image_budget applies top-k within each photo instead.
// Matching is greedy by score with IoU >= 0.5, one detection per head.
inline std::vector<RecallPoint> open_world_recall(const std::vector<Detection>& detections,
                                                  const Corpus& corpus,
                                                  const std::vector<std::size_t>& ks =
                                                      {1, 2, 3, 4, 5, 6, 7, 8, 9, 10},
                                                  bool per_image_budget = false) {
    std::unordered_map<id64, std::vector<const Instance*>> heads_by_photo;
    for (const auto& inst : corpus.instances)
        heads_by_photo[inst.photo_id].push_back(&inst);
    const std::size_t n_photos = heads_by_photo.size();
    const std::size_t n_heads = corpus.instances.size();

    // score-descending order, stable so equal scores keep input order
    std::vector<std::size_t> order(detections.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].score > detections[b].score;
    });

    bool any_identity = false;
    for (const auto& d : detections) any_identity = any_identity || d.predicted_identity.has_value();

    std::vector<RecallPoint> table;
    for (std::size_t k : ks) {
        std::vector<std::size_t> kept;
        if (per_image_budget) {
            std::unordered_map<id64, std::size_t> taken;
            for (std::size_t i : order)
                if (taken[detections[i].photo_id]++ < k) kept.push_back(i);
        } else {
            std::size_t budget = k * n_photos;
            for (std::size_t i : order) {
                if (kept.size() >= budget) break;
                kept.push_back(i);
            }
        }

        std::unordered_set<id64> matched;
        std::size_t matched_identified = 0;
        for (std::size_t i : kept) {
            const Detection& det = detections[i];
            auto photo = heads_by_photo.find(det.photo_id);
            if (photo == heads_by_photo.end()) continue;
            const Instance* best = nullptr;
            double best_iou = 0.0;
            for (const Instance* inst : photo->second) {
                if (matched.count(inst->instance_id)) continue;
                double overlap = iou(det.box, inst->head);
                if (overlap < 0.5) continue;
                if (!best || overlap > best_iou ||
                    (overlap == best_iou && inst->instance_id < best->instance_id)) {
                    best = inst;
                    best_iou = overlap;
                }
            }
            if (best) {
                matched.insert(best->instance_id);
                if (det.predicted_identity && *det.predicted_identity == best->identity_id)
                    ++matched_identified;
            }
        }
        RecallPoint point;
        point.k = k;
        point.kept = kept.size();
        point.recall = n_heads == 0 ? 0.0 : double(matched.size()) / double(n_heads);
        if (any_identity)
            point.identified_recall =
                n_heads == 0 ? 0.0 : double(matched_identified) / double(n_heads);
        table.push_back(point);
    }
    return table;
}

// Accuracies rescaled against a reference system, as percentages.
inline std::vector<std::pair<std::string, double>> relative_report(
    const std::map<std::string, EvalReport>& reports, const std::string& reference) {
    auto ref = reports.find(reference);
    if (ref == reports.end())
        throw data_error("relative_report: reference '" + reference + "' not found");
    if (ref->second.overall_accuracy <= 0.0)
        throw data_error("relative_report: reference accuracy is zero");
    std::vector<std::pair<std::string, double>> table;
    for (const auto& [name, report] : reports)
        table.emplace_back(name, 100.0 * report.overall_accuracy / ref->second.overall_accuracy);
    return table;
}

// JSON / CSV emission.

inline nlohmann::json to_json(const FailureHistograms& h) {
    auto hist = [](const std::vector<BinStat>& bins) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& b : bins)
            j.push_back({{"label", b.label}, {"population", b.population}, {"failures", b.failures}});
        return j;
    };
    return {{"orientation", hist(h.orientation)},
            {"head_height", hist(h.head_height)},
            {"truncation", hist(h.truncation)},
            {"identity_accuracy", hist(h.identity_accuracy)},
            {"never_correct", h.never_correct}};
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per_identity = nlohmann::json::object();
    for (const auto& [identity, acc] : r.per_identity_accuracy)
        per_identity[std::to_string(identity)] = acc;
    return {{"overall_accuracy", r.overall_accuracy},
            {"fold_accuracy", {r.fold_accuracy[0], r.fold_accuracy[1]}},
            {"fold_total", {r.fold_total[0], r.fold_total[1]}},
            {"fold_correct", {r.fold_correct[0], r.fold_correct[1]}},
            {"chance_level", r.chance_level},
            {"per_identity_accuracy", per_identity},
            {"strata", to_json(r.strata)},
            {"never_correct", r.never_correct}};
}

inline void save_report_json(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << to_json(r).dump(2) << '\n';
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline void save_histograms_csv(const FailureHistograms& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << "stratum,bin,population,failures\n";
    auto rows = [&](const char* name, const std::vector<BinStat>& bins) {
        for (const auto& b : bins)
            out << name << ',' << b.label << ',' << b.population << ',' << b.failures << '\n';
    };
    rows("orientation", h.orientation);
    rows("head_height", h.head_height);
    rows("truncation", h.truncation);
    rows("identity_accuracy", h.identity_accuracy);
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline void save_curve_csv(const LearningCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << "k,seed,accuracy\n";
    char buf[64];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.10g", p.accuracy);
        out << p.k << ',' << p.seed << ',' << buf << '\n';
    }
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline void save_recall_csv(const std::vector<RecallPoint>& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << "k,kept,recall,identified_recall\n";
    char buf[64];
    for (const auto& p : table) {
        std::snprintf(buf, sizeof buf, "%.10g", p.recall);
        out << p.k << ',' << p.kept << ',' << buf << ',';
        if (p.identified_recall) {
            std::snprintf(buf, sizeof buf, "%.10g", *p.identified_recall);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw data_error("write failure on '" + path + "'");
}

} // namespace cuebench
