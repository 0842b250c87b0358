#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "a3/binary_io.hpp"
#include "a3/errors.hpp"
#include "a3/losses.hpp"
#include "a3/tensor.hpp"

namespace a3 {

enum class LayerKind : std::uint8_t { Dense = 0, Conv2D = 1, ReLU = 2, MaxPool2 = 3, Flatten = 4 };

inline const char* to_string(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "Dense";
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool2: return "MaxPool2";
        case LayerKind::Flatten: return "Flatten";
    }
    return "?";
}

/// One layer of a sequential network. Parameters are kept in file precision
/// (f32); evaluation converts them to the working precision on the fly.
struct Layer {
    LayerKind kind = LayerKind::ReLU;
    // Dense
    std::uint32_t in_features = 0;
    std::uint32_t out_features = 0;
    // Conv2D
    std::uint32_t in_channels = 0;
    std::uint32_t out_channels = 0;
    std::uint32_t kernel = 0;
    std::uint32_t stride = 1;
    std::uint32_t padding = 0;

    std::vector<float> weights;  // Dense: out x in. Conv2D: out_ch x in_ch x k x k.
    std::vector<float> bias;

    static Layer dense(std::uint32_t in, std::uint32_t out, std::vector<float> w, std::vector<float> b) {
        Layer l;
        l.kind = LayerKind::Dense;
        l.in_features = in;
        l.out_features = out;
        l.weights = std::move(w);
        l.bias = std::move(b);
        return l;
    }

    static Layer conv2d(std::uint32_t in_ch, std::uint32_t out_ch, std::uint32_t k, std::uint32_t stride,
                        std::uint32_t pad, std::vector<float> w, std::vector<float> b) {
        Layer l;
        l.kind = LayerKind::Conv2D;
        l.in_channels = in_ch;
        l.out_channels = out_ch;
        l.kernel = k;
        l.stride = stride;
        l.padding = pad;
        l.weights = std::move(w);
        l.bias = std::move(b);
        return l;
    }

    static Layer relu() { return Layer{}; }
    static Layer maxpool2() {
        Layer l;
        l.kind = LayerKind::MaxPool2;
        return l;
    }
    static Layer flatten() {
        Layer l;
        l.kind = LayerKind::Flatten;
        return l;
    }

    std::size_t expected_weight_count() const {
        switch (kind) {
            case LayerKind::Dense: return std::size_t(in_features) * out_features;
            case LayerKind::Conv2D: return std::size_t(out_channels) * in_channels * kernel * kernel;
            default: return 0;
        }
    }
    std::size_t expected_bias_count() const {
        switch (kind) {
            case LayerKind::Dense: return out_features;
            case LayerKind::Conv2D: return out_channels;
            default: return 0;
        }
    }

    /// Output shape for the given input shape; throws ValidationError when incompatible.
    Shape output_shape(const Shape& in) const {
        switch (kind) {
            case LayerKind::Dense:
                if (in.size() != 1 || in[0] != in_features)
                    throw ValidationError("Dense expects input (" + std::to_string(in_features) + "), got " +
                                          shape_string(in));
                return {out_features};
            case LayerKind::Conv2D: {
                if (in.size() != 3 || in[0] != in_channels)
                    throw ValidationError("Conv2D expects " + std::to_string(in_channels) + " input channels, got " +
                                          shape_string(in));
                if (kernel == 0 || stride == 0) throw ValidationError("Conv2D kernel and stride must be positive");
                const std::size_t h = in[1] + 2 * std::size_t(padding), w = in[2] + 2 * std::size_t(padding);
                if (h < kernel || w < kernel)
                    throw ValidationError("Conv2D kernel larger than padded input " + shape_string(in));
                return {out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1};
            }
            case LayerKind::ReLU: return in;
            case LayerKind::MaxPool2:
                if (in.size() != 3 || in[1] < 2 || in[2] < 2)
                    throw ValidationError("MaxPool2 expects (C,H,W) with H,W >= 2, got " + shape_string(in));
                return {in[0], in[1] / 2, in[2] / 2};
            case LayerKind::Flatten: return {shape_size(in)};
        }
        throw CapabilityError("unsupported layer kind");
    }
};

/// Sequential classifier. Immutable once constructed; all evaluation is const.
class Model {
public:
    Model() = default;

    Model(Shape input_shape, std::size_t num_classes, std::vector<Layer> layers)
        : input_shape_(std::move(input_shape)), num_classes_(num_classes), layers_(std::move(layers)) {
        validate();
    }

    const Shape& input_shape() const noexcept { return input_shape_; }
    std::size_t input_size() const noexcept { return shape_size(input_shape_); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    /// activation_shapes()[i] is the input shape of layer i; the last entry is (num_classes).
    const std::vector<Shape>& activation_shapes() const noexcept { return shapes_; }

private:
    void validate() {
        if (input_shape_.size() != 3) throw ValidationError("model input shape must be (C,H,W)");
        if (shape_size(input_shape_) == 0) throw ValidationError("model input shape has zero size");
        if (num_classes_ < 2) throw ValidationError("model needs at least 2 classes");
        shapes_.clear();
        shapes_.push_back(input_shape_);
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Layer& l = layers_[i];
            if (l.weights.size() != l.expected_weight_count() || l.bias.size() != l.expected_bias_count())
                throw ValidationError("layer " + std::to_string(i) + " (" + to_string(l.kind) +
                                      ") parameter count inconsistent with geometry");
            for (float v : l.weights)
                if (!std::isfinite(v)) throw ValidationError("layer " + std::to_string(i) + " has non-finite weight");
            for (float v : l.bias)
                if (!std::isfinite(v)) throw ValidationError("layer " + std::to_string(i) + " has non-finite bias");
            try {
                shapes_.push_back(l.output_shape(shapes_.back()));
            } catch (const ValidationError& e) {
                throw ValidationError("layer " + std::to_string(i) + ": " + e.what());
            }
        }
        const Shape& out = shapes_.back();
        if (out.size() != 1 || out[0] != num_classes_)
            throw ValidationError("model output shape " + shape_string(out) + " does not match num_classes " +
                                  std::to_string(num_classes_));
    }

    Shape input_shape_;
    std::size_t num_classes_ = 0;
    std::vector<Layer> layers_;
    std::vector<Shape> shapes_;
};

namespace detail {

// Range of output positions o for which o*stride + k - pad lies in [0, n).
inline std::pair<std::size_t, std::size_t> conv_valid_range(std::size_t out_n, std::size_t n, std::size_t stride,
                                                            std::size_t k, std::size_t pad) {
    const long s = long(stride), off = long(k) - long(pad);
    long lo = off >= 0 ? 0 : (-off + s - 1) / s;
    long hi_incl = (long(n) - 1 - off);
    if (hi_incl < 0) return {0, 0};
    hi_incl /= s;
    long hi = std::min<long>(hi_incl + 1, long(out_n));
    if (lo >= hi) return {0, 0};
    return {std::size_t(lo), std::size_t(hi)};
}

template <typename T>
void conv_forward(const Layer& l, const Shape& in_s, const Shape& out_s, std::span<const T> in, std::span<T> out) {
    const std::size_t H = in_s[1], W = in_s[2], OH = out_s[1], OW = out_s[2], K = l.kernel, S = l.stride,
                      P = l.padding, IC = l.in_channels;
    for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
        T* o = out.data() + oc * OH * OW;
        std::fill(o, o + OH * OW, T(l.bias[oc]));
        for (std::size_t ic = 0; ic < IC; ++ic) {
            const T* x = in.data() + ic * H * W;
            for (std::size_t ky = 0; ky < K; ++ky) {
                const auto [oy0, oy1] = conv_valid_range(OH, H, S, ky, P);
                for (std::size_t kx = 0; kx < K; ++kx) {
                    const auto [ox0, ox1] = conv_valid_range(OW, W, S, kx, P);
                    const T w = T(l.weights[((oc * IC + ic) * K + ky) * K + kx]);
                    for (std::size_t oy = oy0; oy < oy1; ++oy) {
                        const T* xr = x + (oy * S + ky - P) * W;
                        T* orow = o + oy * OW;
                        for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += w * xr[ox * S + kx - P];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_backward(const Layer& l, const Shape& in_s, const Shape& out_s, std::span<const T> gout, std::span<T> gin) {
    const std::size_t H = in_s[1], W = in_s[2], OH = out_s[1], OW = out_s[2], K = l.kernel, S = l.stride,
                      P = l.padding, IC = l.in_channels;
    std::fill(gin.begin(), gin.end(), T{0});
    for (std::size_t oc = 0; oc < l.out_channels; ++oc) {
        const T* g = gout.data() + oc * OH * OW;
        for (std::size_t ic = 0; ic < IC; ++ic) {
            T* gx = gin.data() + ic * H * W;
            for (std::size_t ky = 0; ky < K; ++ky) {
                const auto [oy0, oy1] = conv_valid_range(OH, H, S, ky, P);
                for (std::size_t kx = 0; kx < K; ++kx) {
                    const auto [ox0, ox1] = conv_valid_range(OW, W, S, kx, P);
                    const T w = T(l.weights[((oc * IC + ic) * K + ky) * K + kx]);
                    for (std::size_t oy = oy0; oy < oy1; ++oy) {
                        T* gr = gx + (oy * S + ky - P) * W;
                        const T* grow = g + oy * OW;
                        for (std::size_t ox = ox0; ox < ox1; ++ox) gr[ox * S + kx - P] += w * grow[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// Activations of one forward evaluation, kept for the reverse sweep.
template <typename T>
class ForwardPass {
public:
    ForwardPass(const Model& model, std::span<const T> x) : model_(&model) {
        if (x.size() != model.input_size())
            throw DimensionError("input has " + std::to_string(x.size()) + " values, model expects " +
                                 shape_string(model.input_shape()));
        for (T v : x)
            if (!std::isfinite(v)) throw DomainError("non-finite model input");
        const auto& layers = model.layers();
        const auto& shapes = model.activation_shapes();
        acts_.resize(layers.size() + 1);
        pool_idx_.resize(layers.size());
        acts_[0].assign(x.begin(), x.end());
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const Layer& l = layers[i];
            const std::vector<T>& in = acts_[i];
            std::vector<T>& out = acts_[i + 1];
            out.assign(shape_size(shapes[i + 1]), T{0});
            switch (l.kind) {
                case LayerKind::Dense: {
                    const std::size_t n_in = l.in_features;
                    for (std::size_t o = 0; o < l.out_features; ++o) {
                        const float* w = l.weights.data() + o * n_in;
                        T acc = T(l.bias[o]);
                        for (std::size_t j = 0; j < n_in; ++j) acc += T(w[j]) * in[j];
                        out[o] = acc;
                    }
                    break;
                }
                case LayerKind::Conv2D:
                    detail::conv_forward<T>(l, shapes[i], shapes[i + 1], in, out);
                    break;
                case LayerKind::ReLU:
                    for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] > T{0} ? in[j] : T{0};
                    break;
                case LayerKind::MaxPool2: {
                    const std::size_t C = shapes[i][0], H = shapes[i][1], W = shapes[i][2];
                    const std::size_t OH = H / 2, OW = W / 2;
                    auto& idx = pool_idx_[i];
                    idx.assign(out.size(), 0);
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t oy = 0; oy < OH; ++oy)
                            for (std::size_t ox = 0; ox < OW; ++ox) {
                                std::size_t best = (c * H + 2 * oy) * W + 2 * ox;
                                for (std::size_t dy = 0; dy < 2; ++dy)
                                    for (std::size_t dx = 0; dx < 2; ++dx) {
                                        const std::size_t k = (c * H + 2 * oy + dy) * W + 2 * ox + dx;
                                        if (in[k] > in[best]) best = k;  // first maximal element wins
                                    }
                                const std::size_t o = (c * OH + oy) * OW + ox;
                                out[o] = in[best];
                                idx[o] = std::uint32_t(best);
                            }
                    break;
                }
                case LayerKind::Flatten:
                    out = in;
                    break;
                default:
                    throw CapabilityError("unsupported layer kind in forward");
            }
        }
    }

    std::span<const T> logits() const noexcept { return acts_.back(); }
    std::span<const T> input() const noexcept { return acts_.front(); }

    /// Reverse sweep: gradient of <grad_logits, f(x)> with respect to x.
    std::vector<T> backward(std::span<const T> grad_logits) const {
        const auto& layers = model_->layers();
        const auto& shapes = model_->activation_shapes();
        if (grad_logits.size() != model_->num_classes())
            throw DimensionError("logit gradient has wrong length");
        std::vector<T> g(grad_logits.begin(), grad_logits.end());
        std::vector<T> gin;
        for (std::size_t i = layers.size(); i-- > 0;) {
            const Layer& l = layers[i];
            const std::vector<T>& in = acts_[i];
            gin.assign(in.size(), T{0});
            switch (l.kind) {
                case LayerKind::Dense: {
                    const std::size_t n_in = l.in_features;
                    for (std::size_t o = 0; o < l.out_features; ++o) {
                        const T go = g[o];
                        if (go == T{0}) continue;
                        const float* w = l.weights.data() + o * n_in;
                        for (std::size_t j = 0; j < n_in; ++j) gin[j] += T(w[j]) * go;
                    }
                    break;
                }
                case LayerKind::Conv2D:
                    detail::conv_backward<T>(l, shapes[i], shapes[i + 1], g, gin);
                    break;
                case LayerKind::ReLU:
                    for (std::size_t j = 0; j < in.size(); ++j) gin[j] = in[j] > T{0} ? g[j] : T{0};
                    break;
                case LayerKind::MaxPool2: {
                    const auto& idx = pool_idx_[i];
                    for (std::size_t o = 0; o < g.size(); ++o) gin[idx[o]] += g[o];
                    break;
                }
                case LayerKind::Flatten:
                    gin = g;
                    break;
                default:
                    throw CapabilityError("unsupported layer kind in backward");
            }
            std::swap(g, gin);
        }
        return g;
    }

private:
    const Model* model_;
    std::vector<std::vector<T>> acts_;
    std::vector<std::vector<std::uint32_t>> pool_idx_;
};

/// Logits for a batch shaped N x C x H x W (or a single C x H x W image).
template <typename T>
Tensor<T> forward(const Model& model, const Tensor<T>& batch) {
    const Shape& in = model.input_shape();
    std::size_t n = 0;
    if (batch.rank() == 4 && Shape(batch.shape().begin() + 1, batch.shape().end()) == in)
        n = batch.shape()[0];
    else if (batch.shape() == in)
        n = 1;
    else
        throw DimensionError("batch shape " + shape_string(batch.shape()) + " incompatible with model input " +
                             shape_string(in));
    const std::size_t d = model.input_size(), c = model.num_classes();
    Tensor<T> out(Shape{n, c});
    for (std::size_t i = 0; i < n; ++i) {
        ForwardPass<T> pass(model, batch.data().subspan(i * d, d));
        std::copy(pass.logits().begin(), pass.logits().end(), out.data().begin() + std::ptrdiff_t(i * c));
    }
    return out;
}

template <typename T>
std::size_t predict(const Model& model, const Tensor<T>& x) {
    ForwardPass<T> pass(model, x.data());
    return predict<T>(pass.logits());
}

/// Exact input gradient of the loss by reverse-mode sweep.
template <typename T>
Tensor<T> input_gradient(const Model& model, const Tensor<T>& x, const LossKind& loss, std::size_t y) {
    if (y >= model.num_classes()) throw ValidationError("label out of range");
    ForwardPass<T> pass(model, x.data());
    const auto gl = loss_gradient<T>(pass.logits(), y, loss);
    return Tensor<T>(x.shape(), pass.backward(gl));
}

// ---- A3MW weight file ------------------------------------------------------

inline std::vector<std::uint8_t> serialize_model(const Model& m) {
    ByteWriter w;
    w.magic("A3MW");
    w.u32_le(1);
    for (std::size_t d : m.input_shape()) w.u32_le(std::uint32_t(d));
    w.u32_le(std::uint32_t(m.num_classes()));
    w.u32_le(std::uint32_t(m.layers().size()));
    for (const Layer& l : m.layers()) {
        w.u8(std::uint8_t(l.kind));
        if (l.kind == LayerKind::Dense) {
            w.u32_le(l.in_features);
            w.u32_le(l.out_features);
        } else if (l.kind == LayerKind::Conv2D) {
            w.u32_le(l.in_channels);
            w.u32_le(l.out_channels);
            w.u32_le(l.kernel);
            w.u32_le(l.stride);
            w.u32_le(l.padding);
        }
        for (float v : l.weights) w.f32_le(v);
        for (float v : l.bias) w.f32_le(v);
    }
    return w.take();
}

inline Model parse_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("A3MW", "model file");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32_le("version");
    if (version != 1) throw FormatError("unsupported A3MW version " + std::to_string(version), version_at);
    Shape input{r.u32_le("input channels"), r.u32_le("input height"), r.u32_le("input width")};
    const std::uint32_t classes = r.u32_le("num_classes");
    const std::uint32_t count = r.u32_le("layer_count");
    std::vector<Layer> layers;
    layers.reserve(std::min<std::uint32_t>(count, 4096));
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t kind_at = r.offset();
        const std::uint8_t kind = r.u8("layer kind");
        if (kind > 4) throw FormatError("unknown layer kind " + std::to_string(kind), kind_at);
        Layer l;
        l.kind = LayerKind(kind);
        if (l.kind == LayerKind::Dense) {
            l.in_features = r.u32_le("dense in");
            l.out_features = r.u32_le("dense out");
        } else if (l.kind == LayerKind::Conv2D) {
            l.in_channels = r.u32_le("conv in_ch");
            l.out_channels = r.u32_le("conv out_ch");
            l.kernel = r.u32_le("conv kernel");
            l.stride = r.u32_le("conv stride");
            l.padding = r.u32_le("conv padding");
        }
        const std::size_t nw = l.expected_weight_count(), nb = l.expected_bias_count();
        r.need((nw + nb) * 4, "layer parameters");
        l.weights.resize(nw);
        l.bias.resize(nb);
        for (auto& v : l.weights) v = r.f32_le("weight");
        for (auto& v : l.bias) v = r.f32_le("bias");
        layers.push_back(std::move(l));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last layer", r.offset());
    return Model(std::move(input), classes, std::move(layers));
}

inline Model load_model(const std::string& path) { return parse_model(read_file_bytes(path)); }

inline void save_model(const Model& m, const std::string& path) { write_file_bytes(path, serialize_model(m)); }

}  // namespace a3
