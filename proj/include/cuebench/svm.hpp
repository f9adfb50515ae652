#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuebench/common.hpp"
#include "cuebench/features.hpp"
#include "cuebench/parallel.hpp"
#include "cuebench/rng.hpp"

namespace cuebench {

// Training problem over a dense row-major view. Vectors are not owned;
// bank training points many problems at one shared matrix.
struct SvmProblem {
    const float* x = nullptr; // n x d, row-major
    std::size_t n = 0, d = 0;
    std::vector<signed char> y; // +1 / -1 per row
    double C = 1.0;
    bool bias = true; // realized as a constant-1 feature, so the bias is regularized

    const float* row(std::size_t i) const { return x + i * d; }

    void validate() const {
        if (n == 0 || d == 0) throw data_error("SvmProblem: empty problem");
        if (y.size() != n) throw data_error("SvmProblem: label count != row count");
        if (!(C > 0.0)) throw data_error("SvmProblem: C must be positive");
        for (signed char v : y)
            if (v != 1 && v != -1) throw data_error("SvmProblem: labels must be +1 or -1");
    }
};

// Owning matrix helper; mainly for tests and for staging training folds.
struct DenseMatrix {
    std::vector<float> data;
    std::size_t rows = 0, cols = 0;

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : data(r * c, 0.0f), rows(r), cols(c) {}

    static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows_in) {
        if (rows_in.empty()) throw data_error("DenseMatrix: no rows");
        DenseMatrix m(rows_in.size(), rows_in[0].size());
        for (std::size_t i = 0; i < rows_in.size(); ++i) {
            if (rows_in[i].size() != m.cols) throw data_error("DenseMatrix: ragged rows");
            for (std::size_t j = 0; j < m.cols; ++j) m.data[i * m.cols + j] = float(rows_in[i][j]);
        }
        return m;
    }

    float* row(std::size_t i) { return data.data() + i * cols; }
    const float* row(std::size_t i) const { return data.data() + i * cols; }

    SvmProblem problem(std::vector<signed char> labels, double C = 1.0, bool bias = true) const {
        SvmProblem p;
        p.x = data.data();
        p.n = rows;
        p.d = cols;
        p.y = std::move(labels);
        p.C = C;
        p.bias = bias;
        return p;
    }
};

struct SvmTrainStats {
    std::size_t epochs = 0;
    bool converged = false;
    bool degenerate = false;   // one-class training set
    double duality_gap = 0.0;
    double max_violation = 0.0;
};

struct SvmModel {
    std::vector<double> w;
    double b = 0.0;
    id64 identity_id = -1;
    SvmTrainStats stats;

    double score(const float* x, std::size_t d) const {
        if (d != w.size()) throw data_error("SvmModel::score: dim mismatch");
        double s = b;
        for (std::size_t j = 0; j < d; ++j) s += w[j] * double(x[j]);
        return s;
    }
};

// Primal objective 0.5*||w~||^2 + C * sum hinge, where w~ includes the bias
// weight whenever the problem augments one (the bias is regularized).
inline double svm_primal_objective(const SvmProblem& p, const SvmModel& m) {
    double reg = m.b * m.b * (p.bias ? 1.0 : 0.0);
    for (double v : m.w) reg += v * v;
    double loss = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
        double margin = double(p.y[i]) * m.score(p.row(i), p.d);
        loss += std::max(0.0, 1.0 - margin);
    }
    return 0.5 * reg + p.C * loss;
}

namespace detail {

inline bool svm_degenerate(const SvmProblem& p, SvmModel& out) {
    bool has_pos = false, has_neg = false;
    for (signed char v : p.y) (v > 0 ? has_pos : has_neg) = true;
    if (has_pos && has_neg) return false;
    out.w.assign(p.d, 0.0);
    out.b = has_pos ? 1.0 : -1.0;
    out.stats.converged = true;
    out.stats.degenerate = true;
    return true;
}

// Dot products against the bias-augmented row without materializing it.
inline double aug_dot(const SvmProblem& p, std::size_t i, const std::vector<double>& w) {
    const float* xi = p.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < p.d; ++j) s += w[j] * double(xi[j]);
    if (p.bias) s += w[p.d];
    return s;
}

inline void aug_axpy(const SvmProblem& p, std::size_t i, double a, std::vector<double>& w) {
    const float* xi = p.row(i);
    for (std::size_t j = 0; j < p.d; ++j) w[j] += a * double(xi[j]);
    if (p.bias) w[p.d] += a;
}

inline double duality_gap(const SvmProblem& p, const std::vector<double>& w,
                          const std::vector<double>& alpha) {
    double wnorm2 = 0.0;
    for (double v : w) wnorm2 += v * v;
    double loss = 0.0, asum = 0.0;
    for (std::size_t i = 0; i < p.n; ++i) {
        loss += std::max(0.0, 1.0 - double(p.y[i]) * aug_dot(p, i, w));
        asum += alpha[i];
    }
    double primal = 0.5 * wnorm2 + p.C * loss;
    double dual = asum - 0.5 * wnorm2;
    return primal - dual;
}

} // namespace detail

using AlphaObserver = std::function<void(const std::vector<double>&)>;

// Dual coordinate descent on the L1-loss SVC dual:
//   min 0.5*a'Qa - e'a  s.t. 0 <= a_i <= C,  Q_ij = y_i y_j x~_i . x~_j
// with per-epoch shuffling and shrinking of bound-locked coordinates.
// Convergence is declared when the projected-gradient spread over a full
// pass drops below tol; max_iter counts epochs.
inline SvmModel train_svm(const SvmProblem& p, double tol = 1e-4, std::size_t max_iter = 10000,
                          std::uint64_t seed = 0, const AlphaObserver& observer = nullptr) {
    p.validate();
    SvmModel model;
    if (detail::svm_degenerate(p, model)) return model;

    const std::size_t n = p.n;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> w(p.d + (p.bias ? 1 : 0), 0.0);
    std::vector<double> alpha(n, 0.0);
    std::vector<double> qd(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* xi = p.row(i);
        double s = p.bias ? 1.0 : 0.0;
        for (std::size_t j = 0; j < p.d; ++j) s += double(xi[j]) * double(xi[j]);
        qd[i] = s;
    }

    std::vector<std::size_t> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = i;
    std::size_t active_size = n;
    double pgmax_old = inf, pgmin_old = -inf;
    Rng rng(seed);

    std::size_t epoch = 0;
    bool converged = false;
    double last_spread = inf;
    for (; epoch < max_iter; ++epoch) {
        double pgmax_new = -inf, pgmin_new = inf;
        // shuffle the active prefix
        for (std::size_t i = active_size; i > 1; --i)
            std::swap(index[i - 1], index[std::size_t(rng.below(i))]);

        for (std::size_t s = 0; s < active_size; ++s) {
            std::size_t i = index[s];
            double yi = double(p.y[i]);
            double g = yi * detail::aug_dot(p, i, w) - 1.0;

            double pg = 0.0;
            if (alpha[i] == 0.0) {
                if (g > pgmax_old) {
                    // locked at the lower bound; shrink from the active set
                    --active_size;
                    std::swap(index[s], index[active_size]);
                    --s;
                    continue;
                }
                if (g < 0.0) pg = g;
            } else if (alpha[i] == p.C) {
                if (g < pgmin_old) {
                    --active_size;
                    std::swap(index[s], index[active_size]);
                    --s;
                    continue;
                }
                if (g > 0.0) pg = g;
            } else {
                pg = g;
            }
            pgmax_new = std::max(pgmax_new, pg);
            pgmin_new = std::min(pgmin_new, pg);

            if (std::abs(pg) > 1e-12) {
                double old = alpha[i];
                alpha[i] = std::min(std::max(old - g / qd[i], 0.0), p.C);
                detail::aug_axpy(p, i, (alpha[i] - old) * yi, w);
            }
        }
        if (observer) observer(alpha);

        if (pgmax_new == -inf) { // every coordinate shrunk this pass
            pgmax_new = 0.0;
            pgmin_new = 0.0;
        }
        last_spread = pgmax_new - pgmin_new;
        if (last_spread <= tol) {
            if (active_size == n) {
                converged = true;
                ++epoch;
                break;
            }
            // criterion met on the shrunken set: re-check against everyone
            active_size = n;
            pgmax_old = inf;
            pgmin_old = -inf;
            continue;
        }
        pgmax_old = pgmax_new <= 0.0 ? inf : pgmax_new;
        pgmin_old = pgmin_new >= 0.0 ? -inf : pgmin_new;
    }

    model.w.assign(w.begin(), w.begin() + std::ptrdiff_t(p.d));
    model.b = p.bias ? w[p.d] : 0.0;
    model.stats.epochs = epoch;
    model.stats.converged = converged;
    model.stats.max_violation = last_spread;
    model.stats.duality_gap = detail::duality_gap(p, w, alpha);
    return model;
}

// Reference solver: plain projected gradient ascent on the dual with an
// exact 1/L step, run until the coordinate-wise optimality violations all
// but vanish. Quadratic cost in n, so capped at 50 samples.
inline SvmModel solve_svm_reference(const SvmProblem& p) {
    p.validate();
    if (p.n > 50)
        throw data_error("solve_svm_reference: n must be <= 50, got " + std::to_string(p.n));
    SvmModel model;
    if (detail::svm_degenerate(p, model)) return model;

    const std::size_t n = p.n;
    std::vector<double> q(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const float* xi = p.row(i);
            const float* xj = p.row(j);
            double dot = p.bias ? 1.0 : 0.0;
            for (std::size_t k = 0; k < p.d; ++k) dot += double(xi[k]) * double(xj[k]);
            double v = double(p.y[i]) * double(p.y[j]) * dot;
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }

    // spectral norm of Q by power iteration (Q is PSD)
    std::vector<double> vec(n, 1.0 / std::sqrt(double(n))), tmp(n);
    double lmax = 0.0;
    for (int it = 0; it < 200; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += q[i * n + j] * vec[j];
            tmp[i] = s;
        }
        double norm = 0.0;
        for (double v : tmp) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-300) break;
        lmax = norm;
        for (std::size_t i = 0; i < n; ++i) vec[i] = tmp[i] / norm;
    }
    double step = lmax > 1e-300 ? 1.0 / (1.01 * lmax) : 1.0;

    std::vector<double> alpha(n, 0.0), grad(n);
    std::size_t iters = 0;
    const std::size_t max_iters = 500000;
    double viol = std::numeric_limits<double>::infinity();
    for (; iters < max_iters; ++iters) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 1.0;
            for (std::size_t j = 0; j < n; ++j) s -= q[i * n + j] * alpha[j];
            grad[i] = s; // ascent direction of the concave dual
        }
        if (iters % 16 == 0) {
            viol = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double v;
                if (alpha[i] <= 0.0)
                    v = std::max(grad[i], 0.0);
                else if (alpha[i] >= p.C)
                    v = std::max(-grad[i], 0.0);
                else
                    v = std::abs(grad[i]);
                viol = std::max(viol, v);
            }
            if (viol <= 1e-10) break;
        }
        for (std::size_t i = 0; i < n; ++i)
            alpha[i] = std::min(std::max(alpha[i] + step * grad[i], 0.0), p.C);
    }

    std::vector<double> w(p.d + (p.bias ? 1 : 0), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (alpha[i] != 0.0) detail::aug_axpy(p, i, alpha[i] * double(p.y[i]), w);
    model.w.assign(w.begin(), w.begin() + std::ptrdiff_t(p.d));
    model.b = p.bias ? w[p.d] : 0.0;
    model.stats.epochs = iters;
    model.stats.converged = viol <= 1e-10;
    model.stats.max_violation = viol;
    model.stats.duality_gap = detail::duality_gap(p, w, alpha);
    return model;
}

// One-vs-rest model collection over a single fused cue space.
struct ModelBank {
    std::string cue_name;
    std::size_t dim = 0;
    double C = 1.0;
    std::uint64_t seed = 0;
    std::vector<SvmModel> models; // ascending identity_id

    std::vector<id64> identity_ids() const {
        std::vector<id64> ids;
        ids.reserve(models.size());
        for (const auto& m : models) ids.push_back(m.identity_id);
        return ids;
    }
};

// Trains one model per identity appearing in `ids`. Each identity gets its
// own RNG stream derived from (seed, identity_id), making the bank invariant
// to training order and thread count.
inline ModelBank train_bank(const FeatureBlock& block,
                            const std::unordered_map<id64, id64>& labels,
                            const std::vector<id64>& ids, double C = 1.0,
                            std::uint64_t seed = 0, double tol = 1e-4,
                            std::size_t max_iter = 10000, unsigned threads = 0) {
    if (ids.empty()) throw data_error("train_bank: empty training set");
    require_features_for(block, ids);

    DenseMatrix x(ids.size(), block.dim());
    std::vector<id64> identity_of(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = labels.find(ids[i]);
        if (it == labels.end())
            throw data_error("train_bank: no label for instance " + std::to_string(ids[i]));
        identity_of[i] = it->second;
        std::memcpy(x.row(i), block.row(ids[i]), block.dim() * sizeof(float));
    }

    std::vector<id64> identities = identity_of;
    std::sort(identities.begin(), identities.end());
    identities.erase(std::unique(identities.begin(), identities.end()), identities.end());

    ModelBank bank;
    bank.cue_name = block.cue_name();
    bank.dim = block.dim();
    bank.C = C;
    bank.seed = seed;
    bank.models.resize(identities.size());
    parallel_for(
        identities.size(),
        [&](std::size_t k) {
            id64 identity = identities[k];
            std::vector<signed char> y(ids.size());
            for (std::size_t i = 0; i < ids.size(); ++i)
                y[i] = identity_of[i] == identity ? 1 : -1;
            SvmProblem p = x.problem(std::move(y), C, true);
            SvmModel m = train_svm(p, tol, max_iter, derive_seed(seed, std::uint64_t(identity)));
            m.identity_id = identity;
            bank.models[k] = std::move(m);
        },
        threads);
    return bank;
}

// Decision values w_j . x_i + b_j for every instance x identity pair.
// Rows follow `ids`; columns are the bank's identities in ascending order.
struct ScoreMatrix {
    std::vector<id64> instance_ids;
    std::vector<id64> identity_ids;
    std::vector<double> values; // rows x cols

    std::size_t rows() const { return instance_ids.size(); }
    std::size_t cols() const { return identity_ids.size(); }
    double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
    const double* row(std::size_t r) const { return values.data() + r * cols(); }
};

inline ScoreMatrix decision_scores(const ModelBank& bank, const FeatureBlock& block,
                                   const std::vector<id64>& ids, unsigned threads = 0) {
    if (bank.dim != block.dim())
        throw data_error("decision_scores: bank dim " + std::to_string(bank.dim) +
                         " != block dim " + std::to_string(block.dim()));
    require_features_for(block, ids);
    ScoreMatrix scores;
    scores.instance_ids = ids;
    scores.identity_ids = bank.identity_ids();
    scores.values.assign(ids.size() * bank.models.size(), 0.0);
    parallel_for(
        ids.size(),
        [&](std::size_t r) {
            const float* x = block.row(ids[r]);
            double* out = scores.values.data() + r * bank.models.size();
            for (std::size_t c = 0; c < bank.models.size(); ++c)
                out[c] = bank.models[c].score(x, bank.dim);
        },
        threads);
    return scores;
}

// Bank file: magic "CMBK" | version u32 | json_len u32 | header JSON
// | records { identity_id u64, dim x f32 weights, f32 bias }.
inline constexpr std::uint32_t kBankVersion = 1;

inline void save_model_bank(const ModelBank& bank, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    nlohmann::json header = {{"cue", bank.cue_name},
                             {"dim", bank.dim},
                             {"C", bank.C},
                             {"seed", bank.seed},
                             {"count", bank.models.size()}};
    std::string hs = header.dump();
    using namespace detail;
    put_bytes(out, "CMBK", 4);
    put_u32(out, kBankVersion);
    put_u32(out, std::uint32_t(hs.size()));
    put_bytes(out, hs.data(), hs.size());
    for (const auto& m : bank.models) {
        if (m.w.size() != bank.dim)
            throw data_error("save_model_bank: model dim mismatch for identity " +
                             std::to_string(m.identity_id));
        put_u64(out, std::uint64_t(m.identity_id));
        for (double v : m.w) put_f32(out, float(v));
        put_f32(out, float(m.b));
    }
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline ModelBank load_model_bank(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open model bank '" + path + "'");
    using namespace detail;
    char magic[4];
    if (!get_bytes(in, magic, 4) || std::memcmp(magic, "CMBK", 4) != 0)
        throw data_error("'" + path + "': bad magic, not a model bank");
    std::uint32_t version, json_len;
    if (!get_u32(in, version) || version != kBankVersion)
        throw data_error("'" + path + "': unsupported bank version");
    if (!get_u32(in, json_len)) throw data_error("'" + path + "': truncated header");
    std::string hs(json_len, '\0');
    if (json_len > 0 && !get_bytes(in, hs.data(), json_len))
        throw data_error("'" + path + "': truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("'" + path + "': bad header JSON: " + e.what());
    }
    ModelBank bank;
    bank.cue_name = header.at("cue").get<std::string>();
    bank.dim = header.at("dim").get<std::size_t>();
    bank.C = header.at("C").get<double>();
    bank.seed = header.at("seed").get<std::uint64_t>();
    std::size_t count = header.at("count").get<std::size_t>();
    if (bank.dim == 0) throw data_error("'" + path + "': dim must be positive");
    bank.models.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::uint64_t identity = 0;
        bool ok = get_u64(in, identity);
        SvmModel& m = bank.models[k];
        m.identity_id = id64(identity);
        m.w.resize(bank.dim);
        float v = 0.0f;
        for (std::size_t j = 0; ok && j < bank.dim; ++j) {
            ok = get_f32(in, v);
            m.w[j] = double(v);
        }
        if (ok) ok = get_f32(in, v);
        if (!ok) throw data_error("'" + path + "': truncated at record " + std::to_string(k));
        m.b = double(v);
    }
    return bank;
}

} // namespace cuebench
