#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dib/layers.hpp"
#include "dib/rng.hpp"
#include "dib/tensor.hpp"

namespace dib {

template <typename Scalar>
struct LayerParams {
    Tensor<Scalar> weights;
    Tensor<Scalar> bias;

    bool has_params() const { return weights.size() > 0; }
};

// A layered feed-forward classifier: the spec plus its parameter state.
// Immutable by convention once built; training works on copies.
template <typename Scalar>
struct Network {
    NetworkSpec spec;
    std::vector<Shape> shapes;              // boundary shapes, input first
    std::vector<LayerParams<Scalar>> params; // one entry per layer
    std::uint64_t seed = 0;

    Index classes() const { return shape_size(shapes.back()); }
    Index input_size() const { return shape_size(spec.input_shape); }
    Index layer_count() const { return static_cast<Index>(spec.layers.size()); }
};

namespace detail {

inline std::uint64_t layer_init_seed(std::uint64_t seed, std::size_t layer) {
    return splitmix64(seed ^ splitmix64(0x6c617965'72000000ull + layer));
}

// Glorot-uniform weights, zero biases. Draws happen in double and are cast,
// so float and double engines consume the identical rng sequence.
template <typename Scalar>
LayerParams<Scalar> init_layer_params(const LayerSpec& l, const Shape& in, Rng& rng) {
    LayerParams<Scalar> p;
    if (l.kind == LayerKind::Dense) {
        const Index fan_in = in[0], fan_out = l.width;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        p.weights = Tensor<Scalar>({fan_in, fan_out});
        for (Index i = 0; i < p.weights.size(); ++i)
            p.weights.data[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
        p.bias = Tensor<Scalar>({fan_out});
    } else if (l.kind == LayerKind::Conv2d) {
        const Index cin = in[0];
        const Index fan_in = cin * l.kh * l.kw;
        const Index fan_out = l.channels * l.kh * l.kw;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        p.weights = Tensor<Scalar>({l.channels, cin, l.kh, l.kw});
        for (Index i = 0; i < p.weights.size(); ++i)
            p.weights.data[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
        p.bias = Tensor<Scalar>({l.channels});
    }
    return p;
}

// Patches matrix for valid convolution: row per output pixel, column per
// (in-channel, ky, kx). X_row is one example's flat (C,H,W) features.
template <typename Scalar>
void im2col(const Scalar* x, const Shape& in, const LayerSpec& l, const Shape& out,
            MatrixR<Scalar>& patches) {
    const Index cin = in[0], h = in[1], w = in[2];
    const Index ho = out[1], wo = out[2];
    patches.resize(ho * wo, cin * l.kh * l.kw);
    for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox) {
            const Index row = oy * wo + ox;
            Scalar* dst = patches.data() + row * patches.cols();
            for (Index c = 0; c < cin; ++c) {
                const Scalar* plane = x + c * h * w;
                for (Index ky = 0; ky < l.kh; ++ky) {
                    const Scalar* src = plane + (oy * l.stride + ky) * w + ox * l.stride;
                    for (Index kx = 0; kx < l.kw; ++kx) *dst++ = src[kx];
                }
            }
        }
    }
}

template <typename Scalar>
void col2im_add(const MatrixR<Scalar>& patches, const Shape& in, const LayerSpec& l,
                const Shape& out, Scalar* dx) {
    const Index cin = in[0], h = in[1], w = in[2];
    const Index ho = out[1], wo = out[2];
    for (Index oy = 0; oy < ho; ++oy) {
        for (Index ox = 0; ox < wo; ++ox) {
            const Index row = oy * wo + ox;
            const Scalar* src = patches.data() + row * patches.cols();
            for (Index c = 0; c < cin; ++c) {
                Scalar* plane = dx + c * h * w;
                for (Index ky = 0; ky < l.kh; ++ky) {
                    Scalar* dst = plane + (oy * l.stride + ky) * w + ox * l.stride;
                    for (Index kx = 0; kx < l.kw; ++kx) dst[kx] += *src++;
                }
            }
        }
    }
}

template <typename Scalar>
void conv2d_forward(const MatrixR<Scalar>& x, const LayerSpec& l, const Shape& in,
                    const Shape& out, const LayerParams<Scalar>& p, MatrixR<Scalar>& y) {
    const Index n = x.rows();
    const Index cout = out[0], ho = out[1], wo = out[2];
    const Index q = in[0] * l.kh * l.kw;
    y.resize(n, cout * ho * wo);
    Eigen::Map<const MatrixR<Scalar>> wm(p.weights.data.data(), cout, q);
    const auto b = p.bias.vector();
    MatrixR<Scalar> patches;
    for (Index i = 0; i < n; ++i) {
        im2col(x.data() + i * x.cols(), in, l, out, patches);
        Eigen::Map<MatrixR<Scalar>> yi(y.data() + i * y.cols(), cout, ho * wo);
        yi.noalias() = wm * patches.transpose();
        yi.colwise() += b;
    }
}

template <typename Scalar>
void conv2d_backward(const MatrixR<Scalar>& x, const MatrixR<Scalar>& dy, const LayerSpec& l,
                     const Shape& in, const Shape& out, const LayerParams<Scalar>& p,
                     LayerParams<Scalar>& grad, MatrixR<Scalar>& dx) {
    const Index n = x.rows();
    const Index cout = out[0], ho = out[1], wo = out[2];
    const Index q = in[0] * l.kh * l.kw;
    Eigen::Map<const MatrixR<Scalar>> wm(p.weights.data.data(), cout, q);
    Eigen::Map<MatrixR<Scalar>> gw(grad.weights.data.data(), cout, q);
    auto gb = grad.bias.vector();
    dx.setZero(n, x.cols());
    MatrixR<Scalar> patches, dpatches;
    for (Index i = 0; i < n; ++i) {
        Eigen::Map<const MatrixR<Scalar>> dyi(dy.data() + i * dy.cols(), cout, ho * wo);
        im2col(x.data() + i * x.cols(), in, l, out, patches);
        gw.noalias() += dyi * patches;
        gb.noalias() += dyi.rowwise().sum();
        dpatches.noalias() = dyi.transpose() * wm;
        col2im_add(dpatches, in, l, out, dx.data() + i * dx.cols());
    }
}

template <typename Scalar>
void maxpool_forward(const MatrixR<Scalar>& x, const LayerSpec& l, const Shape& in,
                     const Shape& out, MatrixR<Scalar>& y, std::vector<Index>* argmax) {
    const Index n = x.rows();
    const Index c = in[0], h = in[1], w = in[2];
    const Index ho = out[1], wo = out[2];
    y.resize(n, c * ho * wo);
    if (argmax) argmax->assign(static_cast<std::size_t>(n * y.cols()), 0);
    for (Index i = 0; i < n; ++i) {
        const Scalar* xi = x.data() + i * x.cols();
        Scalar* yi = y.data() + i * y.cols();
        for (Index ch = 0; ch < c; ++ch) {
            const Scalar* plane = xi + ch * h * w;
            for (Index oy = 0; oy < ho; ++oy) {
                for (Index ox = 0; ox < wo; ++ox) {
                    Index best = (oy * l.ph) * w + ox * l.pw;
                    Scalar best_v = plane[best];
                    for (Index ky = 0; ky < l.ph; ++ky) {
                        for (Index kx = 0; kx < l.pw; ++kx) {
                            const Index idx = (oy * l.ph + ky) * w + (ox * l.pw + kx);
                            if (plane[idx] > best_v) {
                                best_v = plane[idx];
                                best = idx;
                            }
                        }
                    }
                    const Index o = ch * ho * wo + oy * wo + ox;
                    yi[o] = best_v;
                    if (argmax) (*argmax)[static_cast<std::size_t>(i * y.cols() + o)] = ch * h * w + best;
                }
            }
        }
    }
}

template <typename Scalar>
void maxpool_backward(const MatrixR<Scalar>& dy, const std::vector<Index>& argmax,
                      Index in_cols, MatrixR<Scalar>& dx) {
    dx.setZero(dy.rows(), in_cols);
    for (Index i = 0; i < dy.rows(); ++i) {
        const Scalar* dyi = dy.data() + i * dy.cols();
        Scalar* dxi = dx.data() + i * in_cols;
        for (Index o = 0; o < dy.cols(); ++o)
            dxi[argmax[static_cast<std::size_t>(i * dy.cols() + o)]] += dyi[o];
    }
}

template <typename Scalar>
void softmax_rows(MatrixR<Scalar>& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        const Scalar mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

} // namespace detail

template <typename Scalar>
Network<Scalar> build_network(const NetworkSpec& spec, std::uint64_t seed) {
    Network<Scalar> net;
    net.spec = spec;
    net.shapes = infer_shapes(spec); // throws naming the offending layer
    net.seed = seed;
    net.params.resize(spec.layers.size());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        Rng rng(detail::layer_init_seed(seed, l));
        net.params[l] = detail::init_layer_params<Scalar>(spec.layers[l], net.shapes[l], rng);
    }
    return net;
}

// Per-layer state captured during a forward pass, consumed by the backward
// pass. acts[0] is the input batch; acts[l+1] the output of layer l.
template <typename Scalar>
struct ForwardTrace {
    std::vector<MatrixR<Scalar>> acts;
    std::vector<std::vector<Index>> pool_argmax;
    std::vector<MatrixR<Scalar>> dropout_mask; // entries already scaled by 1/(1-p)
};

namespace detail {

// One forward step. rng non-null => training mode (dropout samples a mask).
template <typename Scalar>
void layer_forward(const LayerSpec& l, const Shape& in, const Shape& out,
                   const LayerParams<Scalar>& p, const MatrixR<Scalar>& x,
                   MatrixR<Scalar>& y, Rng* rng, ForwardTrace<Scalar>* trace,
                   std::size_t layer_index) {
    switch (l.kind) {
        case LayerKind::Dense: {
            Eigen::Map<const MatrixR<Scalar>> wm(p.weights.data.data(), in[0], l.width);
            y.noalias() = x * wm;
            y.rowwise() += p.bias.vector().transpose();
            break;
        }
        case LayerKind::Conv2d:
            conv2d_forward(x, l, in, out, p, y);
            break;
        case LayerKind::MaxPool2d:
            maxpool_forward(x, l, in, out, y,
                            trace ? &trace->pool_argmax[layer_index] : nullptr);
            break;
        case LayerKind::Relu:
            y = x.cwiseMax(Scalar(0));
            break;
        case LayerKind::Dropout: {
            if (rng && l.drop_p > 0.0) {
                const Scalar keep_scale = Scalar(1.0 / (1.0 - l.drop_p));
                MatrixR<Scalar> mask(x.rows(), x.cols());
                for (Index i = 0; i < mask.size(); ++i)
                    mask.data()[i] = rng->bernoulli(l.drop_p) ? Scalar(0) : keep_scale;
                y = x.cwiseProduct(mask);
                if (trace) trace->dropout_mask[layer_index] = std::move(mask);
            } else {
                y = x; // inverted dropout: eval needs no rescale
            }
            break;
        }
        case LayerKind::Flatten:
            y = x;
            break;
        case LayerKind::Softmax:
            y = x;
            softmax_rows(y);
            break;
    }
}

} // namespace detail

// Forward pass with full trace retention (training path). rng non-null
// enables dropout sampling; null runs the deterministic eval path.
template <typename Scalar>
const MatrixR<Scalar>& forward_traced(const Network<Scalar>& net, MatrixR<Scalar> batch,
                                      Rng* rng, ForwardTrace<Scalar>& trace) {
    if (batch.cols() != net.input_size())
        throw ShapeError("batch feature size " + std::to_string(batch.cols()) +
                         " does not match network input " + shape_str(net.spec.input_shape));
    const std::size_t n_layers = net.spec.layers.size();
    trace.acts.assign(n_layers + 1, {});
    trace.pool_argmax.assign(n_layers, {});
    trace.dropout_mask.assign(n_layers, {});
    trace.acts[0] = std::move(batch);
    for (std::size_t l = 0; l < n_layers; ++l)
        detail::layer_forward(net.spec.layers[l], net.shapes[l], net.shapes[l + 1], net.params[l],
                              trace.acts[l], trace.acts[l + 1], rng, &trace, l);
    return trace.acts.back();
}

// Evaluation forward pass; keeps only a rolling pair of activation buffers.
template <typename Scalar>
MatrixR<Scalar> forward(const Network<Scalar>& net, const MatrixR<Scalar>& batch) {
    if (batch.cols() != net.input_size())
        throw ShapeError("batch feature size " + std::to_string(batch.cols()) +
                         " does not match network input " + shape_str(net.spec.input_shape));
    MatrixR<Scalar> cur = batch, next;
    for (std::size_t l = 0; l < net.spec.layers.size(); ++l) {
        detail::layer_forward<Scalar>(net.spec.layers[l], net.shapes[l], net.shapes[l + 1],
                                      net.params[l], cur, next, nullptr, nullptr, l);
        cur.swap(next);
    }
    return cur;
}

// Training-mode forward pass (dropout sampled from rng).
template <typename Scalar>
MatrixR<Scalar> forward(const Network<Scalar>& net, const MatrixR<Scalar>& batch, Rng& rng) {
    ForwardTrace<Scalar> trace;
    forward_traced(net, batch, &rng, trace);
    return std::move(trace.acts.back());
}

// Tensor-batch convenience overloads: batch shape is (n, input_shape...).
template <typename Scalar>
MatrixR<Scalar> forward(const Network<Scalar>& net, const Tensor<Scalar>& batch) {
    if (batch.shape.empty() || batch.dim(0) == 0)
        throw ValueError("forward: empty batch");
    const Index n = batch.dim(0);
    return forward(net, MatrixR<Scalar>(batch.matrix(n, batch.size() / n)));
}

// Eval-mode activations at every layer boundary (index 0 = input).
template <typename Scalar>
std::vector<MatrixR<Scalar>> forward_activations(const Network<Scalar>& net,
                                                 const MatrixR<Scalar>& batch) {
    ForwardTrace<Scalar> trace;
    forward_traced(net, batch, nullptr, trace);
    return std::move(trace.acts);
}

template <typename Scalar>
struct GradResult {
    double loss = 0.0;                      // mean cross-entropy
    std::vector<LayerParams<Scalar>> grads; // shapes mirror net.params
    MatrixR<Scalar> probs;                  // softmax outputs for the batch
};

namespace detail {

// Mean cross-entropy from the softmax-input logits, accumulated at 64-bit.
template <typename Scalar>
double mean_cross_entropy(const MatrixR<Scalar>& logits, const std::vector<int>& labels) {
    double total = 0.0;
    for (Index i = 0; i < logits.rows(); ++i) {
        const auto row = logits.row(i);
        const double mx = static_cast<double>(row.maxCoeff());
        double sum = 0.0;
        for (Index j = 0; j < row.size(); ++j)
            sum += std::exp(static_cast<double>(row(j)) - mx);
        total += std::log(sum) + mx - static_cast<double>(row(labels[static_cast<std::size_t>(i)]));
    }
    return total / static_cast<double>(logits.rows());
}

template <typename Scalar>
GradResult<Scalar> grad_impl(const Network<Scalar>& net, const MatrixR<Scalar>& batch,
                             const std::vector<int>& labels, Rng* rng) {
    const Index n = batch.rows();
    if (static_cast<Index>(labels.size()) != n)
        throw ValueError("labels size does not match batch size");
    const Index k = net.classes();
    for (int y : labels)
        if (y < 0 || y >= k)
            throw ValueError("label " + std::to_string(y) + " out of range [0," +
                             std::to_string(k) + ")");
    if (net.spec.layers.back().kind != LayerKind::Softmax)
        throw ShapeError("grad requires a softmax-terminated network");

    ForwardTrace<Scalar> trace;
    forward_traced(net, batch, rng, trace);
    const std::size_t n_layers = net.spec.layers.size();

    GradResult<Scalar> out;
    out.probs = trace.acts[n_layers];
    out.loss = mean_cross_entropy(trace.acts[n_layers - 1], labels);
    out.grads.resize(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (net.params[l].has_params()) {
            out.grads[l].weights = Tensor<Scalar>(net.params[l].weights.shape);
            out.grads[l].bias = Tensor<Scalar>(net.params[l].bias.shape);
        }
    }

    // Fused softmax + cross-entropy: gradient at the logits is (P - Y)/n.
    MatrixR<Scalar> g = out.probs;
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    for (Index i = 0; i < n; ++i)
        g(i, labels[static_cast<std::size_t>(i)]) -= Scalar(1);
    g *= inv_n;

    MatrixR<Scalar> g_prev;
    for (std::size_t l = n_layers - 1; l-- > 0;) {
        const LayerSpec& spec_l = net.spec.layers[l];
        const MatrixR<Scalar>& x = trace.acts[l];
        switch (spec_l.kind) {
            case LayerKind::Dense: {
                const Index in = net.shapes[l][0];
                Eigen::Map<const MatrixR<Scalar>> wm(net.params[l].weights.data.data(), in,
                                                     spec_l.width);
                Eigen::Map<MatrixR<Scalar>> gw(out.grads[l].weights.data.data(), in, spec_l.width);
                gw.noalias() = x.transpose() * g;
                out.grads[l].bias.vector() = g.colwise().sum().transpose();
                g_prev.noalias() = g * wm.transpose();
                g.swap(g_prev);
                break;
            }
            case LayerKind::Conv2d:
                conv2d_backward(x, g, spec_l, net.shapes[l], net.shapes[l + 1], net.params[l],
                                out.grads[l], g_prev);
                g.swap(g_prev);
                break;
            case LayerKind::MaxPool2d:
                maxpool_backward(g, trace.pool_argmax[l], x.cols(), g_prev);
                g.swap(g_prev);
                break;
            case LayerKind::Relu:
                g = g.cwiseProduct((x.array() > Scalar(0)).template cast<Scalar>().matrix());
                break;
            case LayerKind::Dropout:
                if (trace.dropout_mask[l].size() > 0) g = g.cwiseProduct(trace.dropout_mask[l]);
                break;
            case LayerKind::Flatten:
            case LayerKind::Softmax:
                break;
        }
    }
    return out;
}

} // namespace detail

// Gradient of mean cross-entropy w.r.t. every parameter tensor; dropout off.
template <typename Scalar>
GradResult<Scalar> grad(const Network<Scalar>& net, const MatrixR<Scalar>& batch,
                        const std::vector<int>& labels) {
    return detail::grad_impl(net, batch, labels, nullptr);
}

// Training-mode gradient: dropout masks sampled from rng.
template <typename Scalar>
GradResult<Scalar> grad(const Network<Scalar>& net, const MatrixR<Scalar>& batch,
                        const std::vector<int>& labels, Rng& rng) {
    return detail::grad_impl(net, batch, labels, &rng);
}

template <typename Scalar>
GradResult<Scalar> grad(const Network<Scalar>& net, const Tensor<Scalar>& batch,
                        const std::vector<int>& labels) {
    const Index n = batch.dim(0);
    return grad(net, MatrixR<Scalar>(batch.matrix(n, batch.size() / n)), labels);
}

// Mean cross-entropy alone (eval path unless an rng is supplied).
template <typename Scalar>
double loss_value(const Network<Scalar>& net, const MatrixR<Scalar>& batch,
                  const std::vector<int>& labels, Rng* rng = nullptr) {
    ForwardTrace<Scalar> trace;
    forward_traced(net, batch, rng, trace);
    return detail::mean_cross_entropy(trace.acts[net.spec.layers.size() - 1], labels);
}

template <typename Scalar>
bool bit_equal(const Network<Scalar>& a, const Network<Scalar>& b) {
    if (!(a.spec == b.spec)) return false;
    for (std::size_t l = 0; l < a.params.size(); ++l)
        if (!bit_equal(a.params[l].weights, b.params[l].weights) ||
            !bit_equal(a.params[l].bias, b.params[l].bias))
            return false;
    return true;
}

} // namespace dib
