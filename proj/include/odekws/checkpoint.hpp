#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "odekws/dataset.hpp"
#include "odekws/errors.hpp"
#include "odekws/lbn.hpp"
#include "odekws/model.hpp"
#include "odekws/tensor.hpp"
#include "odekws/trainer.hpp"

namespace odekws {

namespace detail {

// --- little-endian primitives ------------------------------------------

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffull));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void need(std::istream& is, const char* section) {
    if (!is) throw ParseError(std::string("checkpoint truncated in ") + section);
}

inline std::uint32_t get_u32(std::istream& is, const char* section) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    need(is, section);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& is, const char* section) {
    const std::uint64_t lo = get_u32(is, section);
    const std::uint64_t hi = get_u32(is, section);
    return lo | (hi << 32);
}

inline float get_f32(std::istream& is, const char* section) {
    const std::uint32_t bits = get_u32(is, section);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline double get_f64(std::istream& is, const char* section) {
    const std::uint64_t bits = get_u64(is, section);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline std::string get_str(std::istream& is, const char* section, std::uint32_t max_len = 1u << 20) {
    const std::uint32_t len = get_u32(is, section);
    if (len > max_len)
        throw ParseError(std::string("implausible string length in ") + section);
    std::string s(len, '\0');
    is.read(s.data(), static_cast<std::streamsize>(len));
    need(is, section);
    return s;
}

}  // namespace detail

// --- config digest ------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Stable fingerprint of everything that shaped a training run. Changing
/// any knob changes the digest; re-running the same recipe does not.
inline std::string config_digest(const ModelSpec& spec, const TrainConfig& cfg) {
    std::string s = variant_name(spec.variant);
    char buf[64];
    const auto add_num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "|%.17g", v);
        s += buf;
    };
    const auto add_int = [&](long long v) {
        std::snprintf(buf, sizeof(buf), "|%lld", v);
        s += buf;
    };
    add_int(spec.n_classes);
    add_num(spec.depth);
    add_num(spec.train_tolerance);
    add_num(spec.infer_tolerance);
    add_num(cfg.lr0);
    add_num(cfg.momentum);
    add_int(cfg.batch_size);
    add_int(cfg.epochs);
    for (int d : cfg.decay_steps) add_int(d);
    add_num(cfg.decay_factor);
    add_num(cfg.weight_decay);
    add_num(cfg.train_tolerance);
    add_int(static_cast<long long>(cfg.seed));
    return hex64(fnv1a64(s));
}

// --- checkpoint format ----------------------------------------------------
//
// Little-endian throughout:
//   magic "ODEKWS", version u32
//   variant tag, config digest, task (length-prefixed strings; task is the
//     comma-joined keyword list, empty for the standard ten)
//   tensor count u32, then per tensor: name, rank u32, dims u32..., f32 data
//   layer count u32, then per layer: name, channels u32, record count u64,
//     records in time order: t f64, mean ch x f32, var ch x f32, count u64
//   producing epoch u32

inline constexpr char kCheckpointMagic[6] = {'O', 'D', 'E', 'K', 'W', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A checkpoint parsed back into plain data, before any model is built.
struct Checkpoint {
    std::string variant_tag;
    std::string config_digest;
    std::string task;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
    std::vector<std::pair<std::string, LbnDatabase<float>::LayerMap>> stats;
    std::uint32_t produced_epoch = 0;
};

inline void save_checkpoint(const std::string& path, Model<float>& model,
                            const std::string& digest, const std::string& task,
                            int produced_epoch) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint: " + path);

    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u32(os, kCheckpointVersion);
    detail::put_str(os, variant_name(model.spec.variant));
    detail::put_str(os, digest);
    detail::put_str(os, task);

    const auto params = model.parameters();
    detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        detail::put_str(os, p->name);
        detail::put_u32(os, static_cast<std::uint32_t>(p->tensor.rank()));
        for (int d : p->tensor.dims()) detail::put_u32(os, static_cast<std::uint32_t>(d));
        for (std::int64_t i = 0; i < p->tensor.size(); ++i) detail::put_f32(os, p->tensor[i]);
    }

    const auto& layers = model.db.layers();
    detail::put_u32(os, static_cast<std::uint32_t>(layers.size()));
    for (const auto& [name, records] : layers) {
        const std::uint32_t channels =
            records.empty() ? 0u
                            : static_cast<std::uint32_t>(records.begin()->second.mean.size());
        detail::put_str(os, name);
        detail::put_u32(os, channels);
        detail::put_u64(os, records.size());
        for (const auto& [key, rec] : records) {
            if (rec.mean.size() != channels || rec.var.size() != channels)
                throw ShapeError("inconsistent channel count in statistics for layer '" + name +
                                 "'");
            detail::put_f64(os, static_cast<double>(key) * 1e-6);
            for (float m : rec.mean) detail::put_f32(os, m);
            for (float v : rec.var) detail::put_f32(os, v);
            detail::put_u64(os, rec.count);
        }
    }

    detail::put_u32(os, static_cast<std::uint32_t>(produced_epoch));
    os.flush();
    if (!os) throw IoError("failed while writing checkpoint: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint: " + path);

    char magic[6];
    is.read(magic, sizeof(magic));
    detail::need(is, "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ParseError("not a checkpoint file: " + path);
    const std::uint32_t version = detail::get_u32(is, "header");
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.variant_tag = detail::get_str(is, "header");
    ck.config_digest = detail::get_str(is, "header");
    ck.task = detail::get_str(is, "header");

    const std::uint32_t n_tensors = detail::get_u32(is, "tensor table");
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        const std::string name = detail::get_str(is, "tensor table");
        const std::uint32_t rank = detail::get_u32(is, "tensor table");
        if (rank == 0 || rank > 8)
            throw ParseError("implausible rank for tensor '" + name + "'");
        std::vector<int> dims(rank);
        std::int64_t count = 1;
        for (auto& d : dims) {
            d = static_cast<int>(detail::get_u32(is, "tensor table"));
            if (d <= 0 || count > (1 << 28) / d)
                throw ParseError("implausible dimensions for tensor '" + name + "'");
            count *= d;
        }
        Tensor<float> tensor(dims);
        for (std::int64_t i = 0; i < count; ++i)
            tensor[i] = detail::get_f32(is, "tensor data");
        ck.tensors.emplace_back(name, std::move(tensor));
    }

    const std::uint32_t n_layers = detail::get_u32(is, "statistics section");
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const std::string name = detail::get_str(is, "statistics section");
        const std::uint32_t channels = detail::get_u32(is, "statistics section");
        if (channels == 0 || channels > (1u << 16))
            throw ParseError("implausible channel count for layer '" + name + "'");
        const std::uint64_t n_records = detail::get_u64(is, "statistics section");
        if (n_records > (1ull << 24))
            throw ParseError("implausible record count for layer '" + name + "'");
        LbnDatabase<float>::LayerMap records;
        for (std::uint64_t r = 0; r < n_records; ++r) {
            const double t = detail::get_f64(is, "statistics record");
            StatRecord<float> rec;
            rec.mean.resize(channels);
            rec.var.resize(channels);
            for (auto& m : rec.mean) m = detail::get_f32(is, "statistics record");
            for (auto& v : rec.var) v = detail::get_f32(is, "statistics record");
            rec.count = detail::get_u64(is, "statistics record");
            if (rec.count == 0)
                throw ParseError("empty statistics record for layer '" + name + "'");
            records[lbn_time_key(t)] = std::move(rec);
        }
        ck.stats.emplace_back(name, std::move(records));
    }

    ck.produced_epoch = detail::get_u32(is, "trailer");
    is.peek();
    if (!is.eof()) throw ParseError("trailing bytes after checkpoint trailer");
    return ck;
}

/// A checkpoint turned back into a runnable model plus its task definition.
struct LoadedModel {
    Model<float> model;
    LabelMap labels;
    std::string task;
    std::string config_digest;
    std::uint32_t produced_epoch = 0;
};

inline std::vector<std::string> split_task(const std::string& task) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : task) {
        if (c == ',') {
            words.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty() || !words.empty()) words.push_back(cur);
    return words;
}

inline LoadedModel load_model(const std::string& path) {
    Checkpoint ck = read_checkpoint(path);

    LabelMap labels = ck.task.empty() ? LabelMap::standard() : LabelMap::subset(split_task(ck.task));
    const ModelSpec spec =
        ModelSpec::for_variant(variant_from_name(ck.variant_tag), labels.n_classes());
    LoadedModel out{build_model<float>(spec, 0), std::move(labels), ck.task, ck.config_digest,
                    ck.produced_epoch};

    const auto params = out.model.parameters();
    if (ck.tensors.size() != params.size())
        throw ParseError("checkpoint carries " + std::to_string(ck.tensors.size()) +
                         " tensors but variant '" + ck.variant_tag + "' declares " +
                         std::to_string(params.size()));
    for (auto& [name, tensor] : ck.tensors) {
        Parameter<float>* target = nullptr;
        for (auto* p : params)
            if (p->name == name) target = p;
        if (!target) throw ParseError("unexpected tensor '" + name + "' in checkpoint");
        if (tensor.dims() != target->tensor.dims())
            throw ParseError("tensor '" + name + "' has shape " +
                             Tensor<float>::dims_str(tensor.dims()) + " but the variant needs " +
                             Tensor<float>::dims_str(target->tensor.dims()));
        target->tensor = std::move(tensor);
    }

    std::vector<const LbnLayer*> known;
    known.push_back(&out.model.stem_norm);
    for (const auto& l : out.model.ode_norms) known.push_back(&l);
    for (auto& [name, records] : ck.stats) {
        const LbnLayer* layer = nullptr;
        for (const auto* k : known)
            if (k->layer_id == name) layer = k;
        if (!layer) throw ParseError("statistics for unknown layer '" + name + "'");
        for (auto& [key, rec] : records) {
            if (static_cast<int>(rec.mean.size()) != layer->channels)
                throw ParseError("statistics for layer '" + name + "' carry " +
                                 std::to_string(rec.mean.size()) + " channels, expected " +
                                 std::to_string(layer->channels));
            out.model.db.restore(name, static_cast<double>(key) * 1e-6, std::move(rec));
        }
    }
    return out;
}

}  // namespace odekws
