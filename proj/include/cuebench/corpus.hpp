#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cuebench/common.hpp"
#include "cuebench/geometry.hpp"

namespace cuebench {

// One annotated head occurrence in one photo.
struct Instance {
    id64 instance_id = 0;
    id64 photo_id = 0;
    id64 album_id = 0;
    id64 identity_id = 0;
    Box head;
    double image_w = 0.0, image_h = 0.0;
    std::optional<std::int64_t> timestamp;           // seconds since epoch
    DetectorComponent detector_component = DetectorComponent::none;
    std::size_t sequence_index = 0;                  // manifest line order
};

enum class Age { infant, child, young_adult, middle_age, senior, unknown };
enum class Gender { female, male, unknown };
enum class Glasses { none, glasses, sunglasses, unknown };
enum class HairColour { black, white, other, unknown };
enum class HairLength { no_hair, less_hair, short_hair, medium, long_hair, unknown };

struct AttributeAnnotation {
    id64 identity_id = 0;
    Age age = Age::unknown;
    Gender gender = Gender::unknown;
    Glasses glasses = Glasses::unknown;
    HairColour haircolour = HairColour::unknown;
    HairLength hairlength = HairLength::unknown;
};

namespace detail {

template <typename E>
E parse_enum(const std::string& s, const std::vector<std::pair<const char*, E>>& table,
             const char* field) {
    for (const auto& [name, value] : table)
        if (s == name) return value;
    throw data_error(std::string("attributes: unknown ") + field + " value '" + s + "'");
}

inline const std::vector<std::pair<const char*, Age>>& age_table() {
    static const std::vector<std::pair<const char*, Age>> t = {
        {"infant", Age::infant},         {"child", Age::child},
        {"young_adult", Age::young_adult}, {"middle_age", Age::middle_age},
        {"senior", Age::senior},         {"unknown", Age::unknown}};
    return t;
}
inline const std::vector<std::pair<const char*, Gender>>& gender_table() {
    static const std::vector<std::pair<const char*, Gender>> t = {
        {"female", Gender::female}, {"male", Gender::male}, {"unknown", Gender::unknown}};
    return t;
}
inline const std::vector<std::pair<const char*, Glasses>>& glasses_table() {
    static const std::vector<std::pair<const char*, Glasses>> t = {
        {"none", Glasses::none},
        {"glasses", Glasses::glasses},
        {"sunglasses", Glasses::sunglasses},
        {"unknown", Glasses::unknown}};
    return t;
}
inline const std::vector<std::pair<const char*, HairColour>>& haircolour_table() {
    static const std::vector<std::pair<const char*, HairColour>> t = {
        {"black", HairColour::black},
        {"white", HairColour::white},
        {"other", HairColour::other},
        {"unknown", HairColour::unknown}};
    return t;
}
inline const std::vector<std::pair<const char*, HairLength>>& hairlength_table() {
    static const std::vector<std::pair<const char*, HairLength>> t = {
        {"no_hair", HairLength::no_hair},   {"less_hair", HairLength::less_hair},
        {"short", HairLength::short_hair},  {"medium", HairLength::medium},
        {"long", HairLength::long_hair},    {"unknown", HairLength::unknown}};
    return t;
}

} // namespace detail

// Immutable instance collection with identity and album indices.
struct Corpus {
    std::vector<Instance> instances;
    std::unordered_map<id64, std::vector<id64>> by_identity;
    std::unordered_map<id64, std::vector<id64>> by_album;
    std::optional<std::vector<AttributeAnnotation>> attributes;

    std::unordered_map<id64, std::size_t> index_of; // instance_id -> position

    const Instance& instance(id64 instance_id) const {
        auto it = index_of.find(instance_id);
        if (it == index_of.end())
            throw data_error("unknown instance_id " + std::to_string(instance_id));
        return instances[it->second];
    }

    bool has_instance(id64 instance_id) const { return index_of.count(instance_id) > 0; }

    void rebuild_indices() {
        by_identity.clear();
        by_album.clear();
        index_of.clear();
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const Instance& inst = instances[i];
            if (!index_of.emplace(inst.instance_id, i).second)
                throw data_error("duplicate instance_id " + std::to_string(inst.instance_id));
            by_identity[inst.identity_id].push_back(inst.instance_id);
            by_album[inst.album_id].push_back(inst.instance_id);
        }
    }
};

// Parses a JSON-Lines manifest. Line order defines sequence_index, which the
// odd/even split protocol later relies on, so ingestion never reorders.
inline Corpus load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest '" + path + "'");
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("manifest line " + std::to_string(line_no) +
                             ": parse error: " + e.what());
        }
        try {
            Instance inst;
            inst.instance_id = j.at("instance_id").get<id64>();
            inst.photo_id = j.at("photo_id").get<id64>();
            inst.album_id = j.at("album_id").get<id64>();
            inst.identity_id = j.at("identity_id").get<id64>();
            const auto& head = j.at("head");
            inst.head = Box{head.at("x").get<double>(), head.at("y").get<double>(),
                            head.at("w").get<double>(), head.at("h").get<double>()};
            const auto& img = j.at("image");
            inst.image_w = img.at("w").get<double>();
            inst.image_h = img.at("h").get<double>();
            if (j.contains("timestamp")) inst.timestamp = j.at("timestamp").get<std::int64_t>();
            if (j.contains("detector_component"))
                inst.detector_component =
                    detector_component_from_string(j.at("detector_component").get<std::string>());
            inst.sequence_index = line_no - 1;

            inst.head.validate("head");
            if (!(inst.image_w > 0.0) || !(inst.image_h > 0.0))
                throw data_error("image dims must be positive");
            corpus.instances.push_back(inst);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("manifest line " + std::to_string(line_no) + ": " + e.what());
        } catch (const data_error& e) {
            throw data_error("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    corpus.rebuild_indices();
    return corpus;
}

// Parses JSON-Lines identity attributes and validates the enum vocabulary.
inline std::vector<AttributeAnnotation> load_attributes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open attributes file '" + path + "'");
    std::vector<AttributeAnnotation> out;
    std::unordered_set<id64> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            AttributeAnnotation a;
            a.identity_id = j.at("identity_id").get<id64>();
            if (!seen.insert(a.identity_id).second)
                throw data_error("duplicate identity_id " + std::to_string(a.identity_id));
            using namespace detail;
            if (j.contains("age"))
                a.age = parse_enum(j.at("age").get<std::string>(), age_table(), "age");
            if (j.contains("gender"))
                a.gender = parse_enum(j.at("gender").get<std::string>(), gender_table(), "gender");
            if (j.contains("glasses"))
                a.glasses =
                    parse_enum(j.at("glasses").get<std::string>(), glasses_table(), "glasses");
            if (j.contains("haircolour"))
                a.haircolour = parse_enum(j.at("haircolour").get<std::string>(),
                                          haircolour_table(), "haircolour");
            if (j.contains("hairlength"))
                a.hairlength = parse_enum(j.at("hairlength").get<std::string>(),
                                          hairlength_table(), "hairlength");
            out.push_back(a);
        } catch (const nlohmann::json::exception& e) {
            throw data_error("attributes line " + std::to_string(line_no) +
                             ": parse error: " + e.what());
        } catch (const data_error& e) {
            throw data_error("attributes line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

} // namespace cuebench
