#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuebench/common.hpp"
#include "cuebench/corpus.hpp"
#include "cuebench/parallel.hpp"
#include "cuebench/rng.hpp"

namespace cuebench {

enum class SplitType { original, album, time, day, external };

inline const char* to_string(SplitType t) {
    switch (t) {
        case SplitType::original: return "original";
        case SplitType::album: return "album";
        case SplitType::time: return "time";
        case SplitType::day: return "day";
        case SplitType::external: return "external";
    }
    throw invariant_error("unknown split type value");
}

inline SplitType split_type_from_string(const std::string& s) {
    for (int i = 0; i <= int(SplitType::external); ++i)
        if (s == to_string(SplitType(i))) return SplitType(i);
    throw data_error("unknown split type '" + s + "'");
}

struct IdentitySplit {
    id64 identity_id = 0;
    std::vector<id64> fold0, fold1;  // instance ids, ascending
    std::vector<id64> shared_albums; // albums split across folds (album protocol)
    std::vector<id64> discarded;     // instances removed to equalize folds (day)
};

struct DroppedIdentity {
    id64 identity_id = 0;
    std::string reason;
};

struct SplitAssignment {
    SplitType split_type = SplitType::external;
    std::uint64_t seed = 0;
    std::vector<IdentitySplit> identities; // ascending identity_id
    std::vector<DroppedIdentity> dropped;  // ascending identity_id

    std::vector<id64> identity_ids() const {
        std::vector<id64> out;
        out.reserve(identities.size());
        for (const auto& s : identities) out.push_back(s.identity_id);
        return out;
    }

    // All instances of one fold, identity-major, ids ascending within.
    std::vector<id64> fold_ids(int fold) const {
        std::vector<id64> out;
        for (const auto& s : identities) {
            const auto& f = fold == 0 ? s.fold0 : s.fold1;
            out.insert(out.end(), f.begin(), f.end());
        }
        return out;
    }
};

namespace detail {

inline std::vector<id64> sorted_ids(std::vector<id64> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Identities to split: the given list as-is (an explicitly empty list means
// an empty assignment), or every identity in the corpus when unspecified.
inline std::vector<id64> resolve_identities(const Corpus& corpus,
                                            const std::optional<std::vector<id64>>& identities) {
    std::vector<id64> out;
    if (identities)
        out = *identities;
    else
        for (const auto& [identity, ids] : corpus.by_identity) out.push_back(identity);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct AlbumGroup {
    id64 album_id = 0;
    std::vector<id64> instance_ids; // ascending
};

// Minimal-imbalance partition of whole albums between the folds.
// Reachable fold0 sums are computed exactly (subset-sum over album sizes),
// the winning sum prefers the larger fold0 on ties, and reconstruction
// prefers fold0 while walking albums in (size desc, album_id asc) order,
// which keeps the assignment canonical for a given album multiset.
inline std::vector<bool> partition_albums(const std::vector<AlbumGroup>& albums,
                                          std::size_t total) {
    const std::size_t m = albums.size();
    // reach[i][s]: albums i..m-1 can contribute exactly s to fold0
    std::vector<std::vector<char>> reach(m + 1, std::vector<char>(total + 1, 0));
    reach[m][0] = 1;
    for (std::size_t i = m; i-- > 0;) {
        std::size_t size = albums[i].instance_ids.size();
        for (std::size_t s = 0; s <= total; ++s)
            reach[i][s] = reach[i + 1][s] || (s >= size && reach[i + 1][s - size]);
    }
    std::size_t best_sum = 0;
    long best_gap = long(total) + 1;
    for (std::size_t s = 0; s <= total; ++s) {
        if (!reach[0][s]) continue;
        long gap = std::abs(long(total) - 2 * long(s));
        if (gap < best_gap || (gap == best_gap && s > best_sum)) {
            best_gap = gap;
            best_sum = s;
        }
    }
    std::vector<bool> in_fold0(m, false);
    std::size_t remaining = best_sum;
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t size = albums[i].instance_ids.size();
        if (remaining >= size && reach[i + 1][remaining - size]) {
            in_fold0[i] = true;
            remaining -= size;
        }
    }
    return in_fold0;
}

} // namespace detail

// Odd/even split over the manifest order: per identity, instances sorted by
// sequence_index go alternately to fold0 (even positions) and fold1.
// Identities left with fewer than `min_per_fold` instances in either fold
// are dropped with the reason recorded.
inline SplitAssignment split_original(const Corpus& corpus,
                                      const std::optional<std::vector<id64>>& identities = std::nullopt,
                                      std::size_t min_per_fold = 5) {
    SplitAssignment split;
    split.split_type = SplitType::original;
    split.seed = 0; // protocol is deterministic, no randomness consumed
    for (id64 identity : detail::resolve_identities(corpus, identities)) {
        auto it = corpus.by_identity.find(identity);
        if (it == corpus.by_identity.end() || it->second.empty()) {
            split.dropped.push_back({identity, "no instances"});
            continue;
        }
        std::vector<const Instance*> insts;
        for (id64 id : it->second) insts.push_back(&corpus.instance(id));
        std::sort(insts.begin(), insts.end(), [](const Instance* a, const Instance* b) {
            return a->sequence_index < b->sequence_index;
        });
        IdentitySplit is;
        is.identity_id = identity;
        for (std::size_t i = 0; i < insts.size(); ++i)
            (i % 2 == 0 ? is.fold0 : is.fold1).push_back(insts[i]->instance_id);
        if (std::min(is.fold0.size(), is.fold1.size()) < min_per_fold) {
            split.dropped.push_back(
                {identity, "fold with " + std::to_string(std::min(is.fold0.size(), is.fold1.size())) +
                               " instances (< " + std::to_string(min_per_fold) + ")"});
            continue;
        }
        is.fold0 = detail::sorted_ids(std::move(is.fold0));
        is.fold1 = detail::sorted_ids(std::move(is.fold1));
        split.identities.push_back(std::move(is));
    }
    return split;
}

// Whole-album split: per identity, albums are partitioned to make the folds
// as equal as possible without breaking an album apart; when the best
// whole-album imbalance still exceeds one instance, exactly one album from
// the larger fold is split across both folds and recorded as shared.
// The protocol is fully deterministic; the seed is recorded for provenance.
inline SplitAssignment split_album(const Corpus& corpus,
                                   const std::optional<std::vector<id64>>& identities = std::nullopt,
                                   std::uint64_t seed = 0) {
    SplitAssignment split;
    split.split_type = SplitType::album;
    split.seed = seed;
    for (id64 identity : detail::resolve_identities(corpus, identities)) {
        auto it = corpus.by_identity.find(identity);
        if (it == corpus.by_identity.end() || it->second.empty()) {
            split.dropped.push_back({identity, "no instances"});
            continue;
        }
        std::map<id64, std::vector<id64>> by_album;
        for (id64 id : it->second) by_album[corpus.instance(id).album_id].push_back(id);
        std::vector<detail::AlbumGroup> albums;
        std::size_t total = 0;
        for (auto& [album, ids] : by_album) {
            albums.push_back({album, detail::sorted_ids(std::move(ids))});
            total += albums.back().instance_ids.size();
        }
        std::sort(albums.begin(), albums.end(), [](const auto& a, const auto& b) {
            if (a.instance_ids.size() != b.instance_ids.size())
                return a.instance_ids.size() > b.instance_ids.size();
            return a.album_id < b.album_id;
        });

        std::vector<bool> in_fold0 = detail::partition_albums(albums, total);
        IdentitySplit is;
        is.identity_id = identity;
        for (std::size_t i = 0; i < albums.size(); ++i) {
            auto& fold = in_fold0[i] ? is.fold0 : is.fold1;
            fold.insert(fold.end(), albums[i].instance_ids.begin(), albums[i].instance_ids.end());
        }
        long gap = long(is.fold0.size()) - long(is.fold1.size());
        if (std::abs(gap) > 1) {
            // Split one album across the folds. Any album in the larger fold
            // is big enough (otherwise moving it whole would have beaten the
            // minimal partition); take the largest there, ties by album_id.
            bool larger0 = gap > 0;
            std::size_t pick = albums.size();
            for (std::size_t i = 0; i < albums.size(); ++i)
                if (in_fold0[i] == larger0) {
                    pick = i;
                    break; // albums are in (size desc, id asc) order already
                }
            if (pick == albums.size())
                throw invariant_error("split_album: imbalanced identity with empty larger fold");
            const auto& donor = albums[pick].instance_ids;
            std::size_t move = std::size_t(std::abs(gap)) / 2;
            auto& src = larger0 ? is.fold0 : is.fold1;
            auto& dst = larger0 ? is.fold1 : is.fold0;
            // move the highest-id instances of the donor album
            std::vector<id64> moved(donor.end() - std::ptrdiff_t(move), donor.end());
            for (id64 id : moved) src.erase(std::find(src.begin(), src.end(), id));
            dst.insert(dst.end(), moved.begin(), moved.end());
            is.shared_albums.push_back(albums[pick].album_id);
        }
        is.fold0 = detail::sorted_ids(std::move(is.fold0));
        is.fold1 = detail::sorted_ids(std::move(is.fold1));
        split.identities.push_back(std::move(is));
    }
    return split;
}

// Chronological split: per identity, the oldest half (by timestamp, ties by
// instance_id) forms fold0 and the newest half fold1; instances without a
// timestamp then alternate onto the smaller fold, fold0 first on ties.
// Deterministic; the seed is recorded for provenance only.
inline SplitAssignment split_time(const Corpus& corpus,
                                  const std::optional<std::vector<id64>>& identities = std::nullopt,
                                  std::uint64_t seed = 0) {
    SplitAssignment split;
    split.split_type = SplitType::time;
    split.seed = seed;
    for (id64 identity : detail::resolve_identities(corpus, identities)) {
        auto it = corpus.by_identity.find(identity);
        if (it == corpus.by_identity.end() || it->second.empty()) {
            split.dropped.push_back({identity, "no instances"});
            continue;
        }
        std::vector<const Instance*> stamped;
        std::vector<id64> unstamped;
        for (id64 id : it->second) {
            const Instance& inst = corpus.instance(id);
            if (inst.timestamp)
                stamped.push_back(&inst);
            else
                unstamped.push_back(id);
        }
        std::sort(stamped.begin(), stamped.end(), [](const Instance* a, const Instance* b) {
            if (*a->timestamp != *b->timestamp) return *a->timestamp < *b->timestamp;
            return a->instance_id < b->instance_id;
        });
        std::sort(unstamped.begin(), unstamped.end());

        IdentitySplit is;
        is.identity_id = identity;
        std::size_t oldest = (stamped.size() + 1) / 2;
        for (std::size_t i = 0; i < stamped.size(); ++i)
            (i < oldest ? is.fold0 : is.fold1).push_back(stamped[i]->instance_id);
        for (id64 id : unstamped)
            (is.fold0.size() <= is.fold1.size() ? is.fold0 : is.fold1).push_back(id);
        is.fold0 = detail::sorted_ids(std::move(is.fold0));
        is.fold1 = detail::sorted_ids(std::move(is.fold1));
        split.identities.push_back(std::move(is));
    }
    return split;
}

// Ingests externally annotated fold labels (the Day protocol), then
// equalizes each identity's folds by random discards from the larger one
// and drops identities left with fewer than `min_per_fold` per fold.
inline SplitAssignment ingest_day_split(const Corpus& corpus, const SplitAssignment& external,
                                        std::uint64_t seed, std::size_t min_per_fold = 5) {
    SplitAssignment split;
    split.split_type = SplitType::day;
    split.seed = seed;
    std::unordered_set<id64> seen;
    for (const auto& entry : external.identities) {
        for (int fold = 0; fold < 2; ++fold)
            for (id64 id : fold == 0 ? entry.fold0 : entry.fold1) {
                if (!corpus.has_instance(id))
                    throw data_error("day split: instance " + std::to_string(id) +
                                     " not in corpus");
                if (corpus.instance(id).identity_id != entry.identity_id)
                    throw data_error("day split: instance " + std::to_string(id) +
                                     " labeled under identity " +
                                     std::to_string(entry.identity_id) + " but belongs to " +
                                     std::to_string(corpus.instance(id).identity_id));
                if (!seen.insert(id).second)
                    throw data_error("day split: instance " + std::to_string(id) +
                                     " assigned to more than one fold");
            }
    }

    std::vector<IdentitySplit> entries(external.identities.begin(), external.identities.end());
    std::sort(entries.begin(), entries.end(),
              [](const IdentitySplit& a, const IdentitySplit& b) {
                  return a.identity_id < b.identity_id;
              });
    for (auto& entry : entries) {
        IdentitySplit is;
        is.identity_id = entry.identity_id;
        is.fold0 = detail::sorted_ids(entry.fold0);
        is.fold1 = detail::sorted_ids(entry.fold1);
        if (is.fold0.size() != is.fold1.size()) {
            auto& larger = is.fold0.size() > is.fold1.size() ? is.fold0 : is.fold1;
            std::size_t excess = std::max(is.fold0.size(), is.fold1.size()) -
                                 std::min(is.fold0.size(), is.fold1.size());
            Rng rng(derive_seed(seed, std::uint64_t(is.identity_id)));
            std::vector<id64> discard = sample_without_replacement(larger, excess, rng);
            std::sort(discard.begin(), discard.end());
            for (id64 id : discard) larger.erase(std::find(larger.begin(), larger.end(), id));
            is.discarded = std::move(discard);
        }
        if (std::min(is.fold0.size(), is.fold1.size()) < min_per_fold) {
            split.dropped.push_back(
                {is.identity_id,
                 "fold with " + std::to_string(std::min(is.fold0.size(), is.fold1.size())) +
                     " instances (< " + std::to_string(min_per_fold) + ")"});
            continue;
        }
        split.identities.push_back(std::move(is));
    }
    return split;
}

// Keeps at most k training instances per identity in the designated
// training fold, sampled uniformly with a per-identity derived stream.
// The other (test) fold is untouched.
inline SplitAssignment subsample_training(const SplitAssignment& split, std::size_t k,
                                          std::uint64_t seed, int train_fold = 0) {
    if (k < 1) throw data_error("subsample_training: k must be >= 1");
    if (train_fold != 0 && train_fold != 1)
        throw data_error("subsample_training: train_fold must be 0 or 1");
    SplitAssignment out = split;
    for (auto& is : out.identities) {
        auto& fold = train_fold == 0 ? is.fold0 : is.fold1;
        if (fold.size() <= k) continue;
        Rng rng(derive_seed(seed, std::uint64_t(is.identity_id)));
        fold = detail::sorted_ids(sample_without_replacement(fold, k, rng));
    }
    return out;
}

struct SplitValidation {
    bool ok = true;
    std::vector<std::string> violations;

    void fail(std::string msg) {
        ok = false;
        violations.push_back(std::move(msg));
    }
};

inline SplitValidation validate_split(const Corpus& corpus, const SplitAssignment& split) {
    SplitValidation report;
    std::unordered_set<id64> all_assigned;
    for (const auto& is : split.identities) {
        std::string who = "identity " + std::to_string(is.identity_id);
        std::unordered_set<id64> fold0(is.fold0.begin(), is.fold0.end());
        for (id64 id : is.fold1)
            if (fold0.count(id)) report.fail(who + ": instance " + std::to_string(id) +
                                             " present in both folds");
        for (int fold = 0; fold < 2; ++fold)
            for (id64 id : fold == 0 ? is.fold0 : is.fold1) {
                if (!corpus.has_instance(id)) {
                    report.fail(who + ": instance " + std::to_string(id) + " not in corpus");
                    continue;
                }
                if (corpus.instance(id).identity_id != is.identity_id)
                    report.fail(who + ": instance " + std::to_string(id) + " belongs to identity " +
                                std::to_string(corpus.instance(id).identity_id));
                if (!all_assigned.insert(id).second)
                    report.fail("instance " + std::to_string(id) +
                                " assigned under more than one identity");
            }

        long gap = std::abs(long(is.fold0.size()) - long(is.fold1.size()));
        if (split.split_type != SplitType::external && gap > 1)
            report.fail(who + ": fold imbalance " + std::to_string(gap));
        if ((split.split_type == SplitType::original || split.split_type == SplitType::day) &&
            std::min(is.fold0.size(), is.fold1.size()) < 5)
            report.fail(who + ": retained with fewer than 5 instances in a fold");

        if (split.split_type == SplitType::album) {
            std::unordered_set<id64> albums0, albums1;
            for (id64 id : is.fold0)
                if (corpus.has_instance(id)) albums0.insert(corpus.instance(id).album_id);
            for (id64 id : is.fold1)
                if (corpus.has_instance(id)) albums1.insert(corpus.instance(id).album_id);
            std::vector<id64> overlap;
            for (id64 a : albums0)
                if (albums1.count(a)) overlap.push_back(a);
            std::sort(overlap.begin(), overlap.end());
            std::vector<id64> declared = detail::sorted_ids(is.shared_albums);
            if (overlap != declared)
                report.fail(who + ": shared_albums does not match albums present in both folds");
            if (declared.size() > 1)
                report.fail(who + ": more than one shared album");
        }

        if (split.split_type == SplitType::time) {
            std::optional<std::int64_t> max0, min1;
            for (id64 id : is.fold0)
                if (corpus.has_instance(id) && corpus.instance(id).timestamp)
                    max0 = max0 ? std::max(*max0, *corpus.instance(id).timestamp)
                                : *corpus.instance(id).timestamp;
            for (id64 id : is.fold1)
                if (corpus.has_instance(id) && corpus.instance(id).timestamp)
                    min1 = min1 ? std::min(*min1, *corpus.instance(id).timestamp)
                                : *corpus.instance(id).timestamp;
            if (max0 && min1 && *max0 > *min1)
                report.fail(who + ": fold0 contains a newer timestamp than fold1");
        }
    }
    return report;
}

// JSON round trip. Arrays are written in canonical (sorted) order, so a
// given assignment always serializes to the same bytes.

inline nlohmann::json to_json(const SplitAssignment& split) {
    nlohmann::json j;
    j["split_type"] = to_string(split.split_type);
    j["seed"] = split.seed;
    j["identities"] = nlohmann::json::array();
    for (const auto& is : split.identities) {
        nlohmann::json e;
        e["identity_id"] = is.identity_id;
        e["fold0"] = is.fold0;
        e["fold1"] = is.fold1;
        e["shared_albums"] = is.shared_albums;
        e["discarded"] = is.discarded;
        j["identities"].push_back(std::move(e));
    }
    j["dropped"] = nlohmann::json::array();
    for (const auto& d : split.dropped)
        j["dropped"].push_back({{"identity_id", d.identity_id}, {"reason", d.reason}});
    return j;
}

inline SplitAssignment split_from_json(const nlohmann::json& j) {
    SplitAssignment split;
    split.split_type = split_type_from_string(j.at("split_type").get<std::string>());
    split.seed = j.value("seed", std::uint64_t(0));
    for (const auto& e : j.at("identities")) {
        IdentitySplit is;
        is.identity_id = e.at("identity_id").get<id64>();
        is.fold0 = e.at("fold0").get<std::vector<id64>>();
        is.fold1 = e.at("fold1").get<std::vector<id64>>();
        if (e.contains("shared_albums"))
            is.shared_albums = e.at("shared_albums").get<std::vector<id64>>();
        if (e.contains("discarded")) is.discarded = e.at("discarded").get<std::vector<id64>>();
        split.identities.push_back(std::move(is));
    }
    if (j.contains("dropped"))
        for (const auto& d : j.at("dropped"))
            split.dropped.push_back(
                {d.at("identity_id").get<id64>(), d.value("reason", std::string())});
    return split;
}

inline void save_split(const SplitAssignment& split, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << to_json(split).dump(2) << '\n';
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline SplitAssignment load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open split file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error("'" + path + "': bad split JSON: " + e.what());
    }
    try {
        return split_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("'" + path + "': bad split JSON: " + e.what());
    }
}

} // namespace cuebench
