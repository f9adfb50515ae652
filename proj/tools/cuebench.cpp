// Batch evaluation front end: corpus -> splits -> features -> training ->
// reports. Every command takes --config (JSON, flags win) and a master
// --seed that is hashed into per-stage streams, so identical invocations
// produce byte-identical outputs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cuebench/cuebench.hpp"

namespace fs = std::filesystem;
using namespace cuebench;

namespace {

// CLI11 ships TOML config support; this adapter reads a JSON object
// instead, with one nested object per subcommand.
class JsonConfig : public CLI::Config {
  public:
    std::string to_config(const CLI::App*, bool, bool, std::string) const override {
        return "{}\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json doc;
        try {
            input >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw CLI::FileError("config root must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        walk(doc, {}, items);
        return items;
    }

  private:
    static void walk(const nlohmann::json& node, std::vector<std::string> parents,
                     std::vector<CLI::ConfigItem>& items) {
        for (auto it = node.begin(); it != node.end(); ++it) {
            if (it->is_object()) {
                auto next = parents;
                next.push_back(it.key());
                walk(*it, next, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = it.key();
            if (it->is_array())
                for (const auto& v : *it) item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(*it));
            items.push_back(std::move(item));
        }
    }

    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        return v.dump();
    }
};

struct CommonOpts {
    std::string manifest;
    std::uint64_t seed = 0;
    unsigned threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_manifest = true) {
    cmd->configurable(); // allow a config-file section named after the command
    cmd->fallthrough();  // --config and friends may follow the command name
    auto* m = cmd->add_option("--manifest", opts.manifest, "corpus manifest (JSON lines)");
    if (needs_manifest) m->required();
    cmd->add_option("--seed", opts.seed, "master seed; stage seeds derive from it");
    cmd->add_option("--threads", opts.threads,
                    "worker threads (0 = CUEBENCH_THREADS env, then hardware)");
}

std::vector<const FeatureBlock*> pointers(const std::vector<FeatureBlock>& blocks) {
    std::vector<const FeatureBlock*> ptrs;
    for (const auto& b : blocks) ptrs.push_back(&b);
    return ptrs;
}

// Loads every named feature file and fuses them in the given order; a
// single file passes through untouched.
FeatureBlock assemble_features(const Corpus& corpus, const std::vector<std::string>& paths,
                               const std::vector<id64>& ids, bool per_cue_l2) {
    if (paths.empty()) throw usage_error("no feature files given");
    std::vector<FeatureBlock> blocks;
    for (const auto& path : paths) {
        blocks.push_back(load_features(path));
        require_known_instances(corpus, blocks.back());
    }
    if (blocks.size() == 1 && !per_cue_l2) return std::move(blocks.front());
    return fuse(pointers(blocks), ids, per_cue_l2);
}

std::vector<id64> split_instance_ids(const SplitAssignment& split) {
    std::vector<id64> ids = split.fold_ids(0);
    std::vector<id64> fold1 = split.fold_ids(1);
    ids.insert(ids.end(), fold1.begin(), fold1.end());
    std::sort(ids.begin(), ids.end());
    return ids;
}

ClassifierSpec make_classifier(const std::string& name, double C, double tol,
                               std::size_t max_iter, std::uint64_t master_seed) {
    ClassifierSpec clf;
    if (name == "svm")
        clf.kind = ClassifierSpec::Kind::svm;
    else if (name == "nn")
        clf.kind = ClassifierSpec::Kind::nn;
    else
        throw usage_error("unknown classifier '" + name + "' (svm, nn)");
    clf.C = C;
    clf.tol = tol;
    clf.max_iter = max_iter;
    clf.seed = derive_seed(master_seed, "classifier");
    return clf;
}

int run_split(const CommonOpts& common, const std::string& type, const std::string& in_split,
              const std::string& out_path) {
    Corpus corpus = load_manifest(common.manifest);
    std::uint64_t seed = derive_seed(common.seed, "split");
    SplitAssignment split;
    if (type == "original") {
        split = split_original(corpus);
    } else if (type == "album") {
        split = split_album(corpus, {}, seed);
    } else if (type == "time") {
        split = split_time(corpus, {}, seed);
    } else if (type == "day") {
        if (in_split.empty())
            throw usage_error("--type day needs --in-split with the externally defined folds");
        split = ingest_day_split(corpus, load_split(in_split), seed);
    } else {
        throw usage_error("unknown split type '" + type + "' (original, album, time, day)");
    }
    SplitValidation check = validate_split(corpus, split);
    std::printf("split type=%s identities=%zu dropped=%zu fold0=%zu fold1=%zu\n",
                to_string(split.split_type), split.identities.size(),
                split.dropped.size(), split.fold_ids(0).size(), split.fold_ids(1).size());
    for (const auto& v : check.violations) std::fprintf(stderr, "violation: %s\n", v.c_str());
    if (!check.ok) throw invariant_error("generated split failed validation");
    save_split(split, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int run_features(const CommonOpts& common, const std::string& cue, const std::string& image_dir,
                 const std::string& out_path) {
    Corpus corpus = load_manifest(common.manifest);
    auto load_photo = [&](const Instance& inst) -> ImagePatch {
        fs::path path = fs::path(image_dir) / (std::to_string(inst.photo_id) + ".ppm");
        try {
            return load_ppm(path.string());
        } catch (const error& e) {
            throw data_error("instance " + std::to_string(inst.instance_id) + ": " + e.what());
        }
    };
    FeatureBlock block = extract_cue(corpus, cue, load_photo, common.threads);
    save_features(block, out_path);
    std::printf("wrote %s (cue=%s dim=%zu count=%zu)\n", out_path.c_str(),
                block.cue_name().c_str(), block.dim(), block.size());
    return 0;
}

int run_train(const CommonOpts& common, const std::vector<std::string>& feature_paths,
              const std::string& split_path, int train_fold, double C, double tol,
              std::size_t max_iter, bool per_cue_l2, const std::string& out_path) {
    Corpus corpus = load_manifest(common.manifest);
    SplitAssignment split = load_split(split_path);
    if (train_fold != 0 && train_fold != 1) throw usage_error("--fold must be 0 or 1");
    std::vector<id64> train_ids = split.fold_ids(train_fold);
    if (train_ids.empty()) throw data_error("training fold is empty");
    FeatureBlock block = assemble_features(corpus, feature_paths, split_instance_ids(split),
                                           per_cue_l2);
    std::unordered_map<id64, id64> labels;
    for (id64 id : train_ids) labels[id] = corpus.instance(id).identity_id;
    std::uint64_t seed = derive_seed(derive_seed(common.seed, "classifier"), "direction",
                                     std::uint64_t(train_fold));
    ModelBank bank = train_bank(block, labels, train_ids, C, seed, tol, max_iter,
                                common.threads);
    save_model_bank(bank, out_path);
    std::printf("wrote %s (identities=%zu dim=%zu)\n", out_path.c_str(), bank.models.size(),
                bank.dim);
    return 0;
}

struct EvalOpts {
    std::vector<std::string> feature_paths;
    std::string split_path;
    std::string classifier = "svm";
    double C = 1.0;
    double tol = 1e-4;
    std::size_t max_iter = 10000;
    bool per_cue_l2 = false;
    std::vector<std::string> avg_scores;
    std::vector<std::size_t> curve_ks;
    std::size_t curve_seeds = 0;
    std::string out_dir = ".";
};

int run_eval(const CommonOpts& common, const EvalOpts& opts, bool curve_only) {
    Corpus corpus = load_manifest(common.manifest);
    SplitAssignment split = load_split(opts.split_path);
    SplitValidation check = validate_split(corpus, split);
    if (!check.ok) throw data_error("split fails validation: " + check.violations.front());
    FeatureBlock block = assemble_features(corpus, opts.feature_paths,
                                           split_instance_ids(split), opts.per_cue_l2);
    ClassifierSpec clf =
        make_classifier(opts.classifier, opts.C, opts.tol, opts.max_iter, common.seed);
    fs::create_directories(opts.out_dir);
    fs::path out(opts.out_dir);

    if (!curve_only) {
        std::optional<ScoreMatrix> external;
        for (const auto& path : opts.avg_scores) {
            ScoreMatrix m = load_score_matrix(path);
            external = external ? average_scores(*external, m) : std::move(m);
        }
        EvalReport report = run_two_fold(corpus, split, block, clf,
                                         external ? &*external : nullptr, common.threads);
        save_report_json(report, (out / "report.json").string());
        save_predictions_csv(report.predictions, (out / "predictions.csv").string());
        save_histograms_csv(report.strata, (out / "histograms.csv").string());
        std::printf("accuracy %.4f%% (chance %.4f%%) over %zu test instances\n",
                    report.overall_accuracy, report.chance_level,
                    report.fold_total[0] + report.fold_total[1]);
    }

    if (!opts.curve_ks.empty()) {
        if (opts.curve_seeds == 0) throw usage_error("--curve needs --curve-seeds >= 1");
        std::vector<std::uint64_t> seeds;
        for (std::size_t i = 0; i < opts.curve_seeds; ++i)
            seeds.push_back(derive_seed(common.seed, "curve", i));
        LearningCurve curve =
            learning_curve(corpus, split, block, clf, opts.curve_ks, seeds, common.threads);
        save_curve_csv(curve, (out / "curve.csv").string());
        for (const auto& s : curve.summary)
            std::printf("k=%zu mean=%.4f%% stddev=%.4f\n", s.k, s.mean, s.stddev);
    } else if (curve_only) {
        throw usage_error("curve command needs --curve with at least one k");
    }
    return 0;
}

int run_analyze(const CommonOpts& common, const std::string& predictions_path,
                const std::string& out_path) {
    Corpus corpus = load_manifest(common.manifest);
    std::vector<Prediction> preds = load_predictions_csv(predictions_path);
    FailureHistograms strata = failure_analysis(preds, corpus);
    save_histograms_csv(strata, out_path);
    std::size_t correct = 0, known = 0;
    for (const auto& p : preds) {
        if (!p.true_identity) continue;
        ++known;
        if (p.predicted_identity == *p.true_identity) ++correct;
    }
    std::printf("%zu predictions, accuracy %.4f%%, never-correct identities: %zu\n", known,
                accuracy_percent(correct, known), strata.never_correct);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

std::vector<Detection> load_detections_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "'");
    std::vector<Detection> dets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line_no == 1) continue; // header
        std::istringstream row(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() < 6)
            throw data_error(path + ":" + std::to_string(line_no) +
                             ": expected photo_id,x,y,w,h,score[,predicted_identity]");
        try {
            Detection d;
            d.photo_id = std::stoll(fields[0]);
            d.box = {std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3]),
                     std::stod(fields[4])};
            d.score = std::stod(fields[5]);
            if (fields.size() > 6 && !fields[6].empty())
                d.predicted_identity = std::stoll(fields[6]);
            dets.push_back(d);
        } catch (const std::exception&) {
            throw data_error(path + ":" + std::to_string(line_no) + ": malformed detection row");
        }
    }
    return dets;
}

int run_recall(const CommonOpts& common, const std::string& detections_path, std::size_t k_max,
               bool per_image, const std::string& out_path) {
    Corpus corpus = load_manifest(common.manifest);
    std::vector<Detection> dets = load_detections_csv(detections_path);
    if (k_max == 0) throw usage_error("--k-max must be >= 1");
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k <= k_max; ++k) ks.push_back(k);
    std::vector<RecallPoint> table = open_world_recall(dets, corpus, ks, per_image);
    save_recall_csv(table, out_path);
    for (const auto& p : table) std::printf("k=%zu recall=%.4f\n", p.k, p.recall);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cue-based person recognition evaluation toolkit"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file; command-line flags win");

    CommonOpts c_split, c_feat, c_train, c_eval, c_curve, c_analyze, c_recall;

    auto* split_cmd = app.add_subcommand("split", "generate and validate a two-fold split");
    add_common(split_cmd, c_split);
    std::string split_type, in_split, split_out = "split.json";
    split_cmd->add_option("--type", split_type, "original | album | time | day")->required();
    split_cmd->add_option("--in-split", in_split, "externally defined folds (day split)");
    split_cmd->add_option("--out", split_out, "output split file");

    auto* feat_cmd = app.add_subcommand("features", "extract a built-in cue to a CUEF file");
    add_common(feat_cmd, c_feat);
    std::string cue, image_dir = ".", feat_out = "features.cuef";
    feat_cmd->add_option("--cue", cue, "h_rgb | gist_s")->required();
    feat_cmd->add_option("--images", image_dir, "directory with <photo_id>.ppm files");
    feat_cmd->add_option("--out", feat_out, "output feature file");

    auto* train_cmd = app.add_subcommand("train", "train a one-vs-rest bank on one fold");
    add_common(train_cmd, c_train);
    EvalOpts t;
    int train_fold = 0;
    std::string train_out = "bank.cmbk";
    train_cmd->add_option("--features", t.feature_paths, "feature files, fused in order")
        ->required();
    train_cmd->add_option("--split", t.split_path, "split file")->required();
    train_cmd->add_option("--fold", train_fold, "training fold (0 or 1)");
    train_cmd->add_option("--C", t.C, "SVM regularization");
    train_cmd->add_option("--tol", t.tol, "solver tolerance");
    train_cmd->add_option("--max-iter", t.max_iter, "solver epoch cap");
    train_cmd->add_flag("--per-cue-l2", t.per_cue_l2, "L2-normalize each cue before fusing");
    train_cmd->add_option("--out", train_out, "output model bank");

    auto add_eval_opts = [](CLI::App* cmd, EvalOpts& opts, bool with_report) {
        cmd->add_option("--features", opts.feature_paths, "feature files, fused in order")
            ->required();
        cmd->add_option("--split", opts.split_path, "split file")->required();
        cmd->add_option("--classifier", opts.classifier, "svm | nn");
        cmd->add_option("--C", opts.C, "SVM regularization");
        cmd->add_option("--tol", opts.tol, "solver tolerance");
        cmd->add_option("--max-iter", opts.max_iter, "solver epoch cap");
        cmd->add_flag("--per-cue-l2", opts.per_cue_l2, "L2-normalize each cue before fusing");
        cmd->add_option("--curve", opts.curve_ks, "per-identity training budgets k")
            ->delimiter(',');
        cmd->add_option("--curve-seeds", opts.curve_seeds, "trials per k");
        cmd->add_option("--out-dir", opts.out_dir, "report directory");
        if (with_report)
            cmd->add_option("--avg-scores", opts.avg_scores,
                            "score files averaged into the SVM scores, in order");
    };

    auto* eval_cmd = app.add_subcommand("eval", "two-fold evaluation with reports");
    add_common(eval_cmd, c_eval);
    EvalOpts e;
    add_eval_opts(eval_cmd, e, true);

    auto* curve_cmd = app.add_subcommand("curve", "learning curve only");
    add_common(curve_cmd, c_curve);
    EvalOpts cv;
    add_eval_opts(curve_cmd, cv, false);

    auto* analyze_cmd = app.add_subcommand("analyze", "failure strata from a predictions CSV");
    add_common(analyze_cmd, c_analyze);
    std::string pred_path, analyze_out = "histograms.csv";
    analyze_cmd->add_option("--predictions", pred_path, "predictions CSV")->required();
    analyze_cmd->add_option("--out", analyze_out, "output histogram CSV");

    auto* recall_cmd = app.add_subcommand("recall", "open-world detection recall vs budget");
    add_common(recall_cmd, c_recall);
    std::string det_path, recall_out = "recall.csv";
    std::size_t k_max = 10;
    bool per_image = false;
    recall_cmd->add_option("--detections", det_path, "detections CSV")->required();
    recall_cmd->add_option("--k-max", k_max, "evaluate k = 1..k_max");
    recall_cmd->add_flag("--per-image", per_image, "top-k per photo instead of a global budget");
    recall_cmd->add_option("--out", recall_out, "output recall CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& help) {
        return app.exit(help);
    } catch (const CLI::CallForAllHelp& help) {
        return app.exit(help);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*split_cmd) return run_split(c_split, split_type, in_split, split_out);
        if (*feat_cmd) return run_features(c_feat, cue, image_dir, feat_out);
        if (*train_cmd)
            return run_train(c_train, t.feature_paths, t.split_path, train_fold, t.C, t.tol,
                             t.max_iter, t.per_cue_l2, train_out);
        if (*eval_cmd) return run_eval(c_eval, e, false);
        if (*curve_cmd) return run_eval(c_curve, cv, true);
        if (*analyze_cmd) return run_analyze(c_analyze, pred_path, analyze_out);
        if (*recall_cmd) return run_recall(c_recall, det_path, k_max, per_image, recall_out);
    } catch (const usage_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const invariant_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
