#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "hairmatte/model.hpp"
#include "hairmatte/optim.hpp"
#include "hairmatte/textio.hpp"

namespace hairmatte {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct HistoryRow {
    int epoch = 0;
    double l_m = 0.0;
    double l_c = 0.0;
    double l2 = 0.0;
    double total = 0.0;
    double val_iou = 0.0;

    bool operator==(const HistoryRow&) const = default;
};

struct TrainingMeta {
    int epoch = 0;
    std::vector<HistoryRow> history;

    bool operator==(const TrainingMeta&) const = default;
};

// ---------------------------------------------------------------------------
// ModelSpec <-> canonical text
// ---------------------------------------------------------------------------

inline std::string spec_to_text(const ModelSpec& spec) {
    std::string out;
    out += "variant=" + std::string(variant_name(spec.variant)) + "\n";
    out += "input_size=" + std::to_string(spec.input_size) + "\n";
    out += "num_classes=" + std::to_string(spec.num_classes) + "\n";
    out += "width=" + format_number(spec.width) + "\n";
    out += "decoder_depth=" + std::to_string(spec.decoder_depth) + "\n";
    out += "use_batchnorm=" + std::string(spec.use_batchnorm ? "1" : "0") + "\n";
    return out;
}

inline ModelSpec spec_from_text(const std::string& text) {
    const auto kv = parse_kv(text, "model spec");
    ModelSpec spec;
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        require(it != kv.end(), ErrorKind::format,
                std::string("model spec: missing key \"") + key + "\"");
        return it->second;
    };
    spec.variant = parse_variant(get("variant"));
    spec.input_size = static_cast<int>(parse_long(get("input_size"), "input_size"));
    spec.num_classes = static_cast<int>(parse_long(get("num_classes"), "num_classes"));
    spec.width = static_cast<float>(parse_double(get("width"), "width"));
    spec.decoder_depth = static_cast<int>(parse_long(get("decoder_depth"), "decoder_depth"));
    spec.use_batchnorm = parse_long(get("use_batchnorm"), "use_batchnorm") != 0;
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Binary helpers, explicit little-endian
// ---------------------------------------------------------------------------

namespace ckpt_detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    put_u32(buf, static_cast<std::uint32_t>(v & 0xffffffffu));
    put_u32(buf, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

inline void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf += s;
}

inline void put_blob(std::string& buf, const std::string& name, const Tensor& t) {
    put_str(buf, name);
    put_u32(buf, 4);
    const Shape s = t.shape();
    put_u32(buf, static_cast<std::uint32_t>(s.n));
    put_u32(buf, static_cast<std::uint32_t>(s.c));
    put_u32(buf, static_cast<std::uint32_t>(s.h));
    put_u32(buf, static_cast<std::uint32_t>(s.w));
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(buf, t[i]);
}

class Reader {
public:
    Reader(const std::string& data, std::size_t offset, std::string path)
        : data_(data), pos_(offset), path_(std::move(path)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_ + i]);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        const std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::string str() {
        const std::uint32_t len = u32();
        need(len);
        std::string s = data_.substr(pos_, len);
        pos_ += len;
        return s;
    }

    std::pair<std::string, Tensor> blob() {
        std::string name = str();
        const std::uint32_t rank = u32();
        require(rank == 4, ErrorKind::format,
                "checkpoint " + path_ + ": unsupported blob rank " + std::to_string(rank));
        Shape s;
        s.n = static_cast<int>(u32());
        s.c = static_cast<int>(u32());
        s.h = static_cast<int>(u32());
        s.w = static_cast<int>(u32());
        Tensor t(s);
        need(4 * t.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = f32();
        return {std::move(name), std::move(t)};
    }

private:
    void need(std::size_t count) {
        require(pos_ + count <= data_.size(), ErrorKind::format, "truncated checkpoint " + path_);
    }

    const std::string& data_;
    std::size_t pos_ = 0;
    std::string path_;
};

// BN running stats are serialized after the trainable blobs, in graph order.
inline std::vector<std::pair<std::string, int>> bn_ops(const Model& model) {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& op : model.graph) {
        if (op.bn >= 0) out.emplace_back(op.name, op.bn);
    }
    return out;
}

}  // namespace ckpt_detail

// ---------------------------------------------------------------------------
// save / load
// ---------------------------------------------------------------------------

inline std::string encode_checkpoint(const Model& model, const AdadeltaState* opt = nullptr,
                                     const TrainingMeta* meta = nullptr) {
    using namespace ckpt_detail;
    std::string buf;
    buf += "HMNC";
    put_u32(buf, kCheckpointVersion);
    put_str(buf, spec_to_text(model.spec));

    const auto bn = bn_ops(model);
    put_u32(buf, static_cast<std::uint32_t>(model.params.size() + 2 * bn.size()));
    for (const auto& p : model.params) put_blob(buf, p.name, p.node->value);
    for (const auto& [name, idx] : bn) {
        put_blob(buf, name + ".bn.running_mean", model.bn_states[idx].mean);
        put_blob(buf, name + ".bn.running_var", model.bn_states[idx].var);
    }

    const bool with_opt = opt && opt->initialized_for(model);
    buf.push_back(with_opt ? char(1) : char(0));
    if (with_opt) {
        put_u32(buf, static_cast<std::uint32_t>(model.params.size()));
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            put_blob(buf, model.params[i].name + ".accum_grad_sq", opt->accum_grad_sq[i]);
            put_blob(buf, model.params[i].name + ".accum_update_sq", opt->accum_update_sq[i]);
        }
    }

    put_u32(buf, meta ? static_cast<std::uint32_t>(meta->epoch) : 0);
    put_u32(buf, meta ? static_cast<std::uint32_t>(meta->history.size()) : 0);
    if (meta) {
        for (const auto& row : meta->history) {
            put_u32(buf, static_cast<std::uint32_t>(row.epoch));
            put_f64(buf, row.l_m);
            put_f64(buf, row.l_c);
            put_f64(buf, row.l2);
            put_f64(buf, row.total);
            put_f64(buf, row.val_iou);
        }
    }
    return buf;
}

inline void save_checkpoint(const Model& model, const std::string& path,
                            const AdadeltaState* opt = nullptr,
                            const TrainingMeta* meta = nullptr) {
    const std::string buf = encode_checkpoint(model, opt, meta);
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    require(out.good(), ErrorKind::io, "failed writing checkpoint " + path);
}

inline Model decode_checkpoint(const std::string& bytes, const std::string& path,
                               AdadeltaState* opt = nullptr, TrainingMeta* meta = nullptr) {
    using namespace ckpt_detail;
    require(bytes.size() >= 4 && bytes.compare(0, 4, "HMNC") == 0, ErrorKind::format,
            "bad checkpoint magic in " + path);
    Reader r(bytes, 4, path);
    const std::uint32_t version = r.u32();
    require(version == kCheckpointVersion, ErrorKind::format,
            "unsupported checkpoint version " + std::to_string(version) + " in " + path +
                " (expected " + std::to_string(kCheckpointVersion) + ")");
    const ModelSpec spec = spec_from_text(r.str());
    Model model = build_model(spec, /*seed=*/0);

    const std::uint32_t blob_count = r.u32();
    const auto bn = bn_ops(model);
    require(blob_count == model.params.size() + 2 * bn.size(), ErrorKind::format,
            "checkpoint " + path + ": blob count " + std::to_string(blob_count) +
                " does not match architecture (" +
                std::to_string(model.params.size() + 2 * bn.size()) + ")");

    for (std::size_t i = 0; i < model.params.size(); ++i) {
        auto [name, tensor] = r.blob();
        auto& p = model.params[i];
        require(name == p.name, ErrorKind::format,
                "checkpoint " + path + ": unexpected blob \"" + name + "\" (expected \"" + p.name +
                    "\")");
        require(tensor.shape() == p.node->value.shape(), ErrorKind::format,
                "checkpoint " + path + ": blob \"" + name + "\" shape " + tensor.shape().str() +
                    " does not match model shape " + p.node->value.shape().str());
        p.node->value = std::move(tensor);
    }
    for (const auto& [opname, idx] : bn) {
        for (const bool is_mean : {true, false}) {
            auto [name, tensor] = r.blob();
            const std::string expected =
                opname + (is_mean ? ".bn.running_mean" : ".bn.running_var");
            require(name == expected, ErrorKind::format,
                    "checkpoint " + path + ": unexpected blob \"" + name + "\" (expected \"" +
                        expected + "\")");
            auto& state = model.bn_states[idx];
            require(tensor.shape() == state.mean.shape(), ErrorKind::format,
                    "checkpoint " + path + ": blob \"" + name + "\" shape mismatch");
            (is_mean ? state.mean : state.var) = std::move(tensor);
        }
    }

    if (r.u8() != 0) {
        const std::uint32_t count = r.u32();
        require(count == model.params.size(), ErrorKind::format,
                "checkpoint " + path + ": optimizer state count mismatch");
        AdadeltaState tmp;
        tmp.init(model);
        for (std::uint32_t i = 0; i < count; ++i) {
            auto [gname, gt] = r.blob();
            auto [uname, ut] = r.blob();
            require(gt.shape() == model.params[i].node->value.shape() &&
                        ut.shape() == model.params[i].node->value.shape(),
                    ErrorKind::format, "checkpoint " + path + ": optimizer blob shape mismatch");
            tmp.accum_grad_sq[i] = std::move(gt);
            tmp.accum_update_sq[i] = std::move(ut);
        }
        if (opt) *opt = std::move(tmp);
    } else if (opt) {
        *opt = AdadeltaState{};
    }

    TrainingMeta m;
    m.epoch = static_cast<int>(r.u32());
    const std::uint32_t rows = r.u32();
    for (std::uint32_t i = 0; i < rows; ++i) {
        HistoryRow row;
        row.epoch = static_cast<int>(r.u32());
        row.l_m = r.f64();
        row.l_c = r.f64();
        row.l2 = r.f64();
        row.total = r.f64();
        row.val_iou = r.f64();
        m.history.push_back(row);
    }
    if (meta) *meta = std::move(m);
    return model;
}

inline Model load_checkpoint(const std::string& path, AdadeltaState* opt = nullptr,
                             TrainingMeta* meta = nullptr) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path, opt, meta);
}

}  // namespace hairmatte
