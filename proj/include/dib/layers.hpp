#pragma once

#include <string>
#include <vector>

#include "dib/tensor.hpp"

namespace dib {

enum class LayerKind { Dense, Conv2d, MaxPool2d, Dropout, Softmax, Flatten, Relu };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Relu: return "relu";
    }
    return "?";
}

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    Index width = 0;                              // dense
    Index channels = 0, kh = 0, kw = 0, stride = 1; // conv2d
    Index ph = 0, pw = 0;                         // maxpool2d
    double drop_p = 0.0;                          // dropout

    static LayerSpec dense(Index width) {
        if (width < 1) throw ValueError("dense width must be >= 1");
        LayerSpec s;
        s.kind = LayerKind::Dense;
        s.width = width;
        return s;
    }

    static LayerSpec conv2d(Index channels, Index kh, Index kw, Index stride = 1) {
        if (channels < 1 || kh < 1 || kw < 1 || stride < 1)
            throw ValueError("conv2d parameters must be >= 1");
        LayerSpec s;
        s.kind = LayerKind::Conv2d;
        s.channels = channels;
        s.kh = kh;
        s.kw = kw;
        s.stride = stride;
        return s;
    }

    static LayerSpec maxpool2d(Index ph, Index pw) {
        if (ph < 1 || pw < 1) throw ValueError("maxpool2d window must be >= 1");
        LayerSpec s;
        s.kind = LayerKind::MaxPool2d;
        s.ph = ph;
        s.pw = pw;
        return s;
    }

    static LayerSpec dropout(double p) {
        if (!(p >= 0.0 && p < 1.0)) throw ValueError("dropout p must be in [0,1)");
        LayerSpec s;
        s.kind = LayerKind::Dropout;
        s.drop_p = p;
        return s;
    }

    static LayerSpec softmax() {
        LayerSpec s;
        s.kind = LayerKind::Softmax;
        return s;
    }

    static LayerSpec flatten() {
        LayerSpec s;
        s.kind = LayerKind::Flatten;
        return s;
    }

    static LayerSpec relu() {
        LayerSpec s;
        s.kind = LayerKind::Relu;
        return s;
    }

    bool operator==(const LayerSpec&) const = default;
};

// Output shape of one layer given its input shape. Throws ShapeError naming
// the layer index on any incompatibility.
inline Shape layer_output_shape(const LayerSpec& l, const Shape& in, Index layer_index) {
    auto fail = [&](const std::string& msg) {
        throw ShapeError("layer " + std::to_string(layer_index) + " (" +
                         layer_kind_name(l.kind) + "): " + msg + ", input shape " + shape_str(in));
    };
    switch (l.kind) {
        case LayerKind::Dense:
            if (in.size() != 1) fail("dense expects a flat input");
            return {l.width};
        case LayerKind::Conv2d: {
            if (in.size() != 3) fail("conv2d expects (channels, height, width)");
            const Index h = in[1], w = in[2];
            if (h < l.kh || w < l.kw)
                fail("kernel " + std::to_string(l.kh) + "x" + std::to_string(l.kw) +
                     " larger than input");
            const Index ho = (h - l.kh) / l.stride + 1;
            const Index wo = (w - l.kw) / l.stride + 1;
            return {l.channels, ho, wo};
        }
        case LayerKind::MaxPool2d: {
            if (in.size() != 3) fail("maxpool2d expects (channels, height, width)");
            if (in[1] < l.ph || in[2] < l.pw) fail("pool window larger than input");
            return {in[0], in[1] / l.ph, in[2] / l.pw};
        }
        case LayerKind::Dropout:
        case LayerKind::Relu:
            return in;
        case LayerKind::Softmax:
            if (in.size() != 1) fail("softmax expects a flat input");
            return in;
        case LayerKind::Flatten:
            return {shape_size(in)};
    }
    fail("unknown layer kind");
    return {};
}

struct NetworkSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;

    bool operator==(const NetworkSpec&) const = default;
};

// Shapes at every layer boundary: result[0] is the input shape and
// result[l+1] the output of layer l. Checks the whole-spec invariants:
// softmax appears exactly once, as the final layer.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
    if (spec.input_shape.empty()) throw ShapeError("network input shape is empty");
    for (Index d : spec.input_shape)
        if (d < 1) throw ShapeError("network input dims must be >= 1");
    if (spec.layers.empty()) throw ShapeError("network has no layers");

    std::vector<Shape> shapes;
    shapes.reserve(spec.layers.size() + 1);
    shapes.push_back(spec.input_shape);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const bool last = (l + 1 == spec.layers.size());
        if (spec.layers[l].kind == LayerKind::Softmax && !last)
            throw ShapeError("layer " + std::to_string(l) +
                             ": softmax may appear only as the final layer");
        if (last && spec.layers[l].kind != LayerKind::Softmax)
            throw ShapeError("final layer must be softmax");
        shapes.push_back(layer_output_shape(spec.layers[l], shapes.back(), static_cast<Index>(l)));
    }
    return shapes;
}

inline Index class_count(const NetworkSpec& spec) {
    return shape_size(infer_shapes(spec).back());
}

} // namespace dib
