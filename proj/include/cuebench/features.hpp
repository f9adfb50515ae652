#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cuebench/common.hpp"
#include "cuebench/corpus.hpp"

namespace cuebench {

// Dense per-instance feature matrix for one cue. Rows are stored in
// insertion order (which file IO preserves), with an id index on the side.
class FeatureBlock {
public:
    FeatureBlock() = default;
    FeatureBlock(std::string cue_name, std::size_t dim)
        : cue_name_(std::move(cue_name)), dim_(dim) {
        if (dim_ == 0) throw data_error("FeatureBlock: dim must be positive");
    }

    const std::string& cue_name() const { return cue_name_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<id64>& ids() const { return ids_; }

    bool has(id64 instance_id) const { return row_of_.count(instance_id) > 0; }

    const float* row(id64 instance_id) const {
        auto it = row_of_.find(instance_id);
        if (it == row_of_.end())
            throw data_error("cue '" + cue_name_ + "': no features for instance " +
                             std::to_string(instance_id));
        return data_.data() + it->second * dim_;
    }

    const float* row_at(std::size_t index) const { return data_.data() + index * dim_; }

    void add(id64 instance_id, const float* v) {
        for (std::size_t i = 0; i < dim_; ++i)
            if (!std::isfinite(v[i]))
                throw data_error("cue '" + cue_name_ + "': non-finite value for instance " +
                                 std::to_string(instance_id));
        if (!row_of_.emplace(instance_id, ids_.size()).second)
            throw data_error("cue '" + cue_name_ + "': duplicate instance " +
                             std::to_string(instance_id));
        ids_.push_back(instance_id);
        data_.insert(data_.end(), v, v + dim_);
    }

    void add(id64 instance_id, const std::vector<float>& v) {
        if (v.size() != dim_)
            throw data_error("cue '" + cue_name_ + "': expected dim " + std::to_string(dim_) +
                             ", got " + std::to_string(v.size()));
        add(instance_id, v.data());
    }

    void add(id64 instance_id, const std::vector<double>& v) {
        if (v.size() != dim_)
            throw data_error("cue '" + cue_name_ + "': expected dim " + std::to_string(dim_) +
                             ", got " + std::to_string(v.size()));
        std::vector<float> narrow(v.begin(), v.end());
        add(instance_id, narrow.data());
    }

    // Scales each row to unit L2 norm; zero rows are left untouched.
    void l2_normalize_rows() {
        for (std::size_t r = 0; r < ids_.size(); ++r) {
            float* p = data_.data() + r * dim_;
            double norm2 = 0.0;
            for (std::size_t i = 0; i < dim_; ++i) norm2 += double(p[i]) * double(p[i]);
            if (norm2 <= 0.0) continue;
            float inv = float(1.0 / std::sqrt(norm2));
            for (std::size_t i = 0; i < dim_; ++i) p[i] *= inv;
        }
    }

private:
    std::string cue_name_;
    std::size_t dim_ = 0;
    std::vector<id64> ids_;
    std::unordered_map<id64, std::size_t> row_of_;
    std::vector<float> data_;
};

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), std::streamsize(n));
}
inline void put_u16(std::ostream& out, std::uint16_t v) {
    unsigned char b[2] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8)};
    put_bytes(out, b, 2);
}
inline void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (unsigned char)(v >> (8 * i));
    put_bytes(out, b, 4);
}
inline void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
    put_bytes(out, b, 8);
}
inline void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline bool get_bytes(std::istream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    return std::size_t(in.gcount()) == n;
}
inline bool get_u16(std::istream& in, std::uint16_t& v) {
    unsigned char b[2];
    if (!get_bytes(in, b, 2)) return false;
    v = std::uint16_t(b[0] | (std::uint16_t(b[1]) << 8));
    return true;
}
inline bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!get_bytes(in, b, 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return true;
}
inline bool get_u64(std::istream& in, std::uint64_t& v) {
    unsigned char b[8];
    if (!get_bytes(in, b, 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return true;
}
inline bool get_f32(std::istream& in, float& v) {
    std::uint32_t bits;
    if (!get_u32(in, bits)) return false;
    std::memcpy(&v, &bits, 4);
    return true;
}

} // namespace detail

// CUEF layout, little-endian throughout:
//   magic "CUEF" | version u32 = 1 | name_len u16 | cue_name bytes
//   | dim u32 | count u64 | count x { instance_id u64, dim x f32 }
inline constexpr std::uint32_t kCuefVersion = 1;

inline void save_features(const FeatureBlock& block, const std::string& path) {
    if (block.dim() == 0) throw data_error("save_features: block has no dimension");
    if (block.cue_name().size() > 0xffff)
        throw data_error("save_features: cue name too long");
    for (std::size_t r = 0; r < block.size(); ++r) {
        const float* p = block.row_at(r);
        for (std::size_t i = 0; i < block.dim(); ++i)
            if (!std::isfinite(p[i]))
                throw data_error("save_features: non-finite value for instance " +
                                 std::to_string(block.ids()[r]));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    using namespace detail;
    put_bytes(out, "CUEF", 4);
    put_u32(out, kCuefVersion);
    put_u16(out, std::uint16_t(block.cue_name().size()));
    put_bytes(out, block.cue_name().data(), block.cue_name().size());
    put_u32(out, std::uint32_t(block.dim()));
    put_u64(out, std::uint64_t(block.size()));
    for (std::size_t r = 0; r < block.size(); ++r) {
        put_u64(out, std::uint64_t(block.ids()[r]));
        const float* p = block.row_at(r);
        for (std::size_t i = 0; i < block.dim(); ++i) put_f32(out, p[i]);
    }
    if (!out) throw data_error("write failure on '" + path + "'");
}

inline FeatureBlock load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open feature file '" + path + "'");
    using namespace detail;
    char magic[4];
    if (!get_bytes(in, magic, 4) || std::memcmp(magic, "CUEF", 4) != 0)
        throw data_error("'" + path + "': bad magic, not a CUEF file");
    std::uint32_t version;
    if (!get_u32(in, version)) throw data_error("'" + path + "': truncated header");
    if (version != kCuefVersion)
        throw data_error("'" + path + "': unsupported version " + std::to_string(version));
    std::uint16_t name_len;
    if (!get_u16(in, name_len)) throw data_error("'" + path + "': truncated header");
    std::string name(name_len, '\0');
    if (name_len > 0 && !get_bytes(in, name.data(), name_len))
        throw data_error("'" + path + "': truncated header");
    std::uint32_t dim;
    std::uint64_t count;
    if (!get_u32(in, dim) || !get_u64(in, count))
        throw data_error("'" + path + "': truncated header");
    if (dim == 0) throw data_error("'" + path + "': dim must be positive");

    FeatureBlock block(name, dim);
    std::vector<float> row(dim);
    for (std::uint64_t k = 0; k < count; ++k) {
        std::uint64_t id;
        bool ok = get_u64(in, id);
        for (std::uint32_t i = 0; ok && i < dim; ++i) ok = get_f32(in, row[i]);
        if (!ok)
            throw data_error("'" + path + "': truncated at record " + std::to_string(k));
        for (std::uint32_t i = 0; i < dim; ++i)
            if (!std::isfinite(row[i]))
                throw data_error("'" + path + "': non-finite value in record " +
                                 std::to_string(k));
        block.add(id64(id), row.data());
    }
    return block;
}

// Concatenates cues in the given order for the given instances.
inline FeatureBlock fuse(const std::vector<const FeatureBlock*>& blocks,
                         const std::vector<id64>& ids, bool per_cue_l2 = false) {
    if (blocks.empty()) throw data_error("fuse: no blocks given");
    std::size_t dim = 0;
    std::string name;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        dim += blocks[b]->dim();
        if (b) name += '+';
        name += blocks[b]->cue_name();
    }
    FeatureBlock out(name, dim);
    std::vector<float> row(dim);
    for (id64 id : ids) {
        std::size_t off = 0;
        for (const FeatureBlock* b : blocks) {
            if (!b->has(id))
                throw data_error("fuse: cue '" + b->cue_name() + "' has no features for instance " +
                                 std::to_string(id));
            const float* p = b->row(id);
            std::copy(p, p + b->dim(), row.begin() + std::ptrdiff_t(off));
            if (per_cue_l2) {
                double norm2 = 0.0;
                for (std::size_t i = 0; i < b->dim(); ++i)
                    norm2 += double(p[i]) * double(p[i]);
                if (norm2 > 0.0) {
                    float inv = float(1.0 / std::sqrt(norm2));
                    for (std::size_t i = 0; i < b->dim(); ++i) row[off + i] *= inv;
                }
            }
            off += b->dim();
        }
        out.add(id, row.data());
    }
    return out;
}

// Join checks between feature blocks and the corpus / an id selection.

inline void require_known_instances(const Corpus& corpus, const FeatureBlock& block) {
    for (id64 id : block.ids())
        if (!corpus.has_instance(id))
            throw data_error("cue '" + block.cue_name() + "' references instance " +
                             std::to_string(id) + " absent from the corpus");
}

inline void require_features_for(const FeatureBlock& block, const std::vector<id64>& ids) {
    for (id64 id : ids)
        if (!block.has(id))
            throw data_error("cue '" + block.cue_name() + "': missing features for instance " +
                             std::to_string(id));
}

} // namespace cuebench
