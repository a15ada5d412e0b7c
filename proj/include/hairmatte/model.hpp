#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hairmatte/autodiff.hpp"
#include "hairmatte/conv.hpp"
#include "hairmatte/ops.hpp"
#include "hairmatte/rng.hpp"
#include "hairmatte/tensor.hpp"

namespace hairmatte {

enum class Variant { hairsegnet, hairmattenet };

inline const char* variant_name(Variant v) {
    return v == Variant::hairsegnet ? "hairsegnet" : "hairmattenet";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "hairsegnet") return Variant::hairsegnet;
    if (s == "hairmattenet") return Variant::hairmattenet;
    fail(ErrorKind::usage, "unknown variant \"" + s + "\" (hairsegnet|hairmattenet)");
}

struct ModelSpec {
    Variant variant = Variant::hairmattenet;
    int input_size = 224;
    int num_classes = 2;
    float width = 1.0f;  // uniform channel multiplier
    int decoder_depth = 64;
    bool use_batchnorm = true;

    void validate() const {
        require(input_size >= 32 && input_size % 32 == 0, ErrorKind::usage,
                "model spec: input_size " + std::to_string(input_size) +
                    " violates \"divisible by 32\" (five stride-2 stages)");
        require(num_classes >= 2, ErrorKind::usage,
                "model spec: num_classes " + std::to_string(num_classes) + " violates \">= 2\"");
        require(width > 0.0f && width <= 1.0f, ErrorKind::usage,
                "model spec: width " + std::to_string(width) + " violates \"in (0, 1]\"");
        require(decoder_depth == 16 || decoder_depth == 32 || decoder_depth == 64 ||
                    decoder_depth == 128,
                ErrorKind::usage,
                "model spec: decoder_depth " + std::to_string(decoder_depth) +
                    " violates \"in {16, 32, 64, 128}\"");
    }

    int scaled(int base_channels) const {
        const int c = static_cast<int>(std::lround(static_cast<double>(base_channels) * width));
        return c < 1 ? 1 : c;
    }

    bool operator==(const ModelSpec&) const = default;
};

enum class ParamRole {
    conv_standard,   // dense spatial conv (the stem)
    conv_depthwise,  // per-channel 3x3
    conv_pointwise,  // 1x1 channel mixing, including skip adapters
    conv_final,      // the classifier conv
    bias,
    bn_scale,
    bn_shift,
};

inline bool regularized_role(ParamRole r) {
    return r == ParamRole::conv_standard || r == ParamRole::conv_pointwise;
}

template <typename T>
struct ModelT {
    struct Param {
        std::string name;
        ValueT<T> node;
        ParamRole role;
    };

    struct OpDef {
        enum class Kind { conv, upsample2x, add, softmax };
        Kind kind = Kind::conv;
        int input = -1;  // producer op index, -1 for the network input
        int rhs = -1;    // second producer (add)
        int kernel = -1;
        int bias = -1;
        int gamma = -1;
        int beta = -1;
        int bn = -1;  // index into bn_states
        ConvGeom geom;
        bool relu_after = false;
        bool encoder = false;
        Shape out_shape;  // batch dim recorded as 1
        std::string name;
    };

    ModelSpec spec;
    std::vector<Param> params;
    std::vector<ops::BnRunningT<T>> bn_states;
    std::vector<OpDef> graph;
    int output_op = -1;
    int bottleneck_op = -1;

    // ---- execution ----

    ValueT<T> forward_value(const TensorT<T>& batch, bool training) {
        require(batch.h() == spec.input_size && batch.w() == spec.input_size, ErrorKind::shape,
                "forward: batch spatial size " + batch.shape().str() + " does not match spec input_size " +
                    std::to_string(spec.input_size));
        require(batch.c() == 3, ErrorKind::shape,
                "forward: expected 3 channels on axis c, got " + std::to_string(batch.c()));
        auto input = constant(batch);
        std::vector<ValueT<T>> outs(graph.size());
        for (std::size_t i = 0; i < graph.size(); ++i) {
            const OpDef& op = graph[i];
            const ValueT<T>& in = op.input < 0 ? input : outs[op.input];
            switch (op.kind) {
                case OpDef::Kind::conv: {
                    auto v = ops::conv2d(in, params[op.kernel].node,
                                         op.bias >= 0 ? params[op.bias].node : ValueT<T>{},
                                         op.geom);
                    if (op.bn >= 0) {
                        v = ops::batch_norm(v, params[op.gamma].node, params[op.beta].node,
                                            &bn_states[op.bn], training);
                    }
                    if (op.relu_after) v = ops::relu(v);
                    outs[i] = std::move(v);
                    break;
                }
                case OpDef::Kind::upsample2x:
                    outs[i] = ops::upsample_replicate2x(in);
                    break;
                case OpDef::Kind::add:
                    outs[i] = ops::add(in, outs[op.rhs]);
                    break;
                case OpDef::Kind::softmax:
                    outs[i] = ops::softmax_channels(in);
                    break;
            }
        }
        return outs[output_op];
    }

    TensorT<T> forward(const TensorT<T>& batch) {
        NoGradGuard off;
        return forward_value(batch, /*training=*/false)->value;
    }

    // ---- accounting ----

    std::int64_t mac_count() const {
        std::int64_t total = 0;
        for (const auto& op : graph) {
            if (op.kind != OpDef::Kind::conv) continue;
            const Shape in = op.input < 0 ? Shape{1, 3, spec.input_size, spec.input_size}
                                          : graph[op.input].out_shape;
            total += conv2d_macs(in, params[op.kernel].node->value.shape(), op.geom);
        }
        return total;
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const auto& p : params) total += static_cast<std::int64_t>(p.node->value.size());
        return total;
    }

    std::int64_t param_bytes() const { return param_count() * 4; }  // f32 storage

    int skip_edge_count() const {
        int edges = 0;
        for (const auto& op : graph) {
            if (op.kind == OpDef::Kind::add) ++edges;
        }
        return edges;
    }

    // Theoretical receptive field of the encoder output, from the conv chain
    // along the backbone (merges and 1x1 layers do not change it).
    int encoder_receptive_field() const {
        std::int64_t rf = 1, jump = 1;
        for (const auto& op : graph) {
            if (!op.encoder || op.kind != OpDef::Kind::conv) continue;
            const Shape k = params[op.kernel].node->value.shape();
            const std::int64_t keff = static_cast<std::int64_t>(k.h - 1) * op.geom.dilation + 1;
            rf += (keff - 1) * jump;
            jump *= op.geom.stride;
        }
        return static_cast<int>(rf);
    }

    // ---- parameter utilities ----

    void zero_grads() {
        for (auto& p : params) p.node->zero_grad();
    }

    std::vector<TensorT<T>> snapshot_params() const {
        std::vector<TensorT<T>> out;
        out.reserve(params.size());
        for (const auto& p : params) out.push_back(p.node->value);
        return out;
    }

    void restore_params(const std::vector<TensorT<T>>& snap) {
        require(snap.size() == params.size(), ErrorKind::data,
                "restore_params: parameter count mismatch");
        for (std::size_t i = 0; i < snap.size(); ++i) params[i].node->value = snap[i];
    }

    const Param* find_param(const std::string& name) const {
        for (const auto& p : params) {
            if (p.name == name) return &p;
        }
        return nullptr;
    }
};

using Model = ModelT<float>;

// Sum of squared weights over regularized kernels (dense + pointwise convs).
// Depthwise kernels, the final conv, biases and norm parameters are skipped.
template <typename T>
double l2_penalty(const ModelT<T>& model, T weight) {
    double acc = 0.0;
    for (const auto& p : model.params) {
        if (!regularized_role(p.role)) continue;
        for (std::size_t i = 0; i < p.node->value.size(); ++i) {
            const double v = p.node->value[i];
            acc += v * v;
        }
    }
    return static_cast<double>(weight) * acc;
}

// d(l2_penalty)/dW = 2*weight*W, accumulated directly into parameter grads.
template <typename T>
void accumulate_l2_gradients(ModelT<T>& model, T weight) {
    if (weight == T(0)) return;
    for (auto& p : model.params) {
        if (!regularized_role(p.role)) continue;
        p.node->ensure_grad();
        for (std::size_t i = 0; i < p.node->value.size(); ++i) {
            p.node->grad[i] += T(2) * weight * p.node->value[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace model_detail {

template <typename T>
struct Builder {
    ModelT<T>& m;
    Rng rng;
    Shape cur{1, 3, 0, 0};
    int cur_op = -1;

    Builder(ModelT<T>& model, std::uint64_t seed) : m(model), rng(seed) {
        cur.h = cur.w = model.spec.input_size;
    }

    int add_param(const std::string& name, TensorT<T> value, ParamRole role) {
        m.params.push_back({name, parameter(std::move(value)), role});
        return static_cast<int>(m.params.size()) - 1;
    }

    TensorT<T> kaiming_uniform(Shape s, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        TensorT<T> t(s);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
        return t;
    }

    // conv [+ bn] [+ relu] as one graph op; returns the op index
    int conv(const std::string& name, int from, const Shape& in, int out_c, int k, int stride,
             int dilation, int groups, ParamRole role, bool bn, bool relu,
             bool force_bias = false) {
        typename ModelT<T>::OpDef op;
        op.kind = ModelT<T>::OpDef::Kind::conv;
        op.input = from;
        op.name = name;
        op.geom = ConvGeom{stride, dilation, groups, Padding::Same()};
        const Shape kshape{out_c, in.c / groups, k, k};
        op.kernel = add_param(name + ".kernel", kaiming_uniform(kshape, kshape.c * k * k), role);
        const bool with_bias = force_bias || !bn;
        if (with_bias) {
            op.bias = add_param(name + ".bias", TensorT<T>::zeros(1, out_c, 1, 1), ParamRole::bias);
        }
        if (bn) {
            op.gamma = add_param(name + ".bn.scale", TensorT<T>::full(1, out_c, 1, 1, T(1)),
                                 ParamRole::bn_scale);
            op.beta = add_param(name + ".bn.shift", TensorT<T>::zeros(1, out_c, 1, 1),
                                ParamRole::bn_shift);
            op.bn = static_cast<int>(m.bn_states.size());
            m.bn_states.push_back(ops::BnRunningT<T>::identity(out_c));
        }
        op.relu_after = relu;
        op.out_shape = conv2d_output_shape(in, kshape, op.geom);
        m.graph.push_back(op);
        return static_cast<int>(m.graph.size()) - 1;
    }

    int upsample(int from, const Shape& in) {
        typename ModelT<T>::OpDef op;
        op.kind = ModelT<T>::OpDef::Kind::upsample2x;
        op.input = from;
        op.out_shape = Shape{1, in.c, in.h * 2, in.w * 2};
        op.name = "upsample";
        m.graph.push_back(op);
        return static_cast<int>(m.graph.size()) - 1;
    }

    int add(int a, int b) {
        typename ModelT<T>::OpDef op;
        op.kind = ModelT<T>::OpDef::Kind::add;
        op.input = a;
        op.rhs = b;
        op.out_shape = m.graph[a].out_shape;
        op.name = "merge";
        m.graph.push_back(op);
        return static_cast<int>(m.graph.size()) - 1;
    }

    int softmax(int from) {
        typename ModelT<T>::OpDef op;
        op.kind = ModelT<T>::OpDef::Kind::softmax;
        op.input = from;
        op.out_shape = m.graph[from].out_shape;
        op.name = "softmax";
        m.graph.push_back(op);
        return static_cast<int>(m.graph.size()) - 1;
    }

    Shape out(int op) const { return m.graph[op].out_shape; }
};

struct EncoderRow {
    int out_c;
    int stride;
};

// MobileNet backbone: a dense 3x3 stem then 13 depthwise-separable blocks.
inline const std::vector<EncoderRow>& encoder_rows() {
    static const std::vector<EncoderRow> rows = {
        {32, 2},    // stem (dense 3x3)
        {64, 1},    {128, 2}, {128, 1}, {256, 2}, {256, 1}, {512, 2},
        {512, 1},   {512, 1}, {512, 1}, {512, 1}, {512, 1}, {1024, 2},
        {1024, 1},
    };
    return rows;
}

// Builds the encoder. With `dilate_last_two_strides`, the last two stride-2
// blocks run at stride 1 and every later 3x3 kernel is dilated by the
// accumulated rate, which keeps the receptive field of the original
// backbone. Records the deepest block output per resolution.
template <typename T>
int build_encoder(Builder<T>& b, bool dilate_last_two_strides,
                  std::map<int, int>& deepest_at_resolution) {
    const ModelSpec& spec = b.m.spec;
    const auto& rows = encoder_rows();

    std::vector<int> stride2_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].stride == 2) stride2_rows.push_back(static_cast<int>(i));
    }
    int first_converted = static_cast<int>(rows.size());
    if (dilate_last_two_strides) {
        first_converted = stride2_rows[stride2_rows.size() - 2];
    }

    int rate = 1;
    int op = -1;
    Shape cur{1, 3, spec.input_size, spec.input_size};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int out_c = spec.scaled(rows[i].out_c);
        const bool convert = static_cast<int>(i) >= first_converted && rows[i].stride == 2;
        const int stride = convert ? 1 : rows[i].stride;
        const int dilation = rate;
        if (convert) rate *= 2;
        if (i == 0) {
            op = b.conv("enc.stem", op, cur, out_c, 3, stride, dilation, 1,
                        ParamRole::conv_standard, spec.use_batchnorm, true);
        } else {
            const std::string base = "enc.sep" + std::to_string(i + 1);
            op = b.conv(base + ".dw", op, cur, cur.c, 3, stride, dilation, cur.c,
                        ParamRole::conv_depthwise, spec.use_batchnorm, true);
            b.m.graph.back().encoder = true;
            op = b.conv(base + ".pw", op, b.out(op), out_c, 1, 1, 1, 1, ParamRole::conv_pointwise,
                        spec.use_batchnorm, true);
        }
        b.m.graph.back().encoder = true;
        cur = b.out(op);
        deepest_at_resolution[cur.h] = op;
    }
    // the stem is encoder too
    b.m.graph[0].encoder = true;
    b.m.bottleneck_op = op;
    return op;
}

// upsample -> [skip merge] -> depthwise 3x3 -> pointwise(depth) -> ReLU
template <typename T>
int build_decoder_stage(Builder<T>& b, int stage, int from, int merge_with) {
    const ModelSpec& spec = b.m.spec;
    Shape cur = b.out(from);
    int op = b.upsample(from, cur);
    if (merge_with >= 0) op = b.add(op, merge_with);
    cur = b.out(op);
    const std::string base = "dec.stage" + std::to_string(stage);
    op = b.conv(base + ".dw", op, cur, cur.c, 3, 1, 1, cur.c, ParamRole::conv_depthwise,
                spec.use_batchnorm, false);
    op = b.conv(base + ".pw", op, b.out(op), spec.decoder_depth, 1, 1, 1, 1,
                ParamRole::conv_pointwise, spec.use_batchnorm, true);
    return op;
}

template <typename T>
void build_head(Builder<T>& b, int from) {
    const ModelSpec& spec = b.m.spec;
    int op = b.conv("head", from, b.out(from), spec.num_classes, 1, 1, 1, 1,
                    ParamRole::conv_final, /*bn=*/false, /*relu=*/false, /*force_bias=*/true);
    op = b.softmax(op);
    b.m.output_op = op;
}

}  // namespace model_detail

template <typename T>
ModelT<T> build_hairsegnet(const ModelSpec& spec, std::uint64_t seed) {
    require(spec.variant == Variant::hairsegnet, ErrorKind::usage,
            "build_hairsegnet: spec variant mismatch");
    spec.validate();
    ModelT<T> m;
    m.spec = spec;
    model_detail::Builder<T> b(m, seed);
    std::map<int, int> deepest;
    int op = model_detail::build_encoder(b, /*dilate_last_two_strides=*/true, deepest);
    for (int stage = 1; stage <= 3; ++stage) {
        op = model_detail::build_decoder_stage(b, stage, op, -1);
    }
    model_detail::build_head(b, op);
    return m;
}

template <typename T>
ModelT<T> build_hairmattenet(const ModelSpec& spec, std::uint64_t seed) {
    require(spec.variant == Variant::hairmattenet, ErrorKind::usage,
            "build_hairmattenet: spec variant mismatch");
    spec.validate();
    ModelT<T> m;
    m.spec = spec;
    model_detail::Builder<T> b(m, seed);
    std::map<int, int> deepest;
    int op = model_detail::build_encoder(b, /*dilate_last_two_strides=*/false, deepest);

    // Inner skip at the bottleneck resolution: 1x1 adapter back to the
    // bottleneck depth, merged by addition.
    {
        const Shape bott = b.out(op);
        const int src = deepest.at(bott.h);
        const int adapter = b.conv("skip.inner", src, b.out(src), bott.c, 1, 1, 1, 1,
                                   ParamRole::conv_pointwise, false, false, true);
        op = b.add(op, adapter);
    }

    // Five upsampling stages; the three outer skips enter at input/8,
    // input/4 and input/2 right after the upsample that reaches them. The
    // stage at input/16 and the final full-resolution stage have no skip.
    const int s = spec.input_size;
    const std::map<int, std::string> skip_resolutions = {
        {s / 8, "skip.outer0"}, {s / 4, "skip.outer1"}, {s / 2, "skip.outer2"}};
    for (int stage = 1; stage <= 5; ++stage) {
        const int target_res = b.out(op).h * 2;
        int merge_with = -1;
        auto it = skip_resolutions.find(target_res);
        if (it != skip_resolutions.end()) {
            const int src = deepest.at(target_res);
            merge_with = b.conv(it->second, src, b.out(src), spec.decoder_depth, 1, 1, 1, 1,
                                ParamRole::conv_pointwise, false, false, true);
        }
        op = model_detail::build_decoder_stage(b, stage, op, merge_with);
    }
    model_detail::build_head(b, op);
    return m;
}

template <typename T>
ModelT<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
    return spec.variant == Variant::hairsegnet ? build_hairsegnet<T>(spec, seed)
                                               : build_hairmattenet<T>(spec, seed);
}

inline Model build_model(const ModelSpec& spec, std::uint64_t seed) {
    return build_model<float>(spec, seed);
}

}  // namespace hairmatte
