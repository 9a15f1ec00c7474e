// clevercatch/mlp.hpp
// Fully connected network with hand-written reverse mode.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/rng.hpp"

namespace clevercatch {

enum class Activation { relu, identity, sigmoid };

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ParseError("unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::identity: return z;
        case Activation::sigmoid: return sigmoid(z);
    }
    return z;
}

inline double activate_derivative(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::identity: return 1.0;
        case Activation::sigmoid: {
            const double s = sigmoid(z);
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

struct DenseLayer {
    Matrix weight;  // fan_in x fan_out
    std::vector<double> bias;
    Activation activation = Activation::identity;

    std::size_t fan_in() const noexcept { return weight.rows(); }
    std::size_t fan_out() const noexcept { return weight.cols(); }

    bool operator==(const DenseLayer&) const = default;
};

struct Mlp {
    std::vector<DenseLayer> layers;
    // Bumped on every parameter update; caches taken at an older revision are stale.
    std::uint64_t revision = 0;

    std::size_t in_width() const { return layers.empty() ? 0 : layers.front().fan_in(); }
    std::size_t out_width() const { return layers.empty() ? 0 : layers.back().fan_out(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weight.size() + l.bias.size();
        return n;
    }

    // Parameters only; revision is bookkeeping.
    bool same_parameters(const Mlp& other) const { return layers == other.layers; }

    // widths = {in, hidden..., out}. Weights uniform in +-sqrt(6/fan_in), biases zero.
    static Mlp init(const std::vector<std::size_t>& widths, Activation hidden, Activation output,
                    Rng& rng) {
        if (widths.size() < 2) throw ShapeError("Mlp::init: need at least input and output widths");
        Mlp net;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
            if (fan_in == 0 || fan_out == 0) throw ShapeError("Mlp::init: zero layer width");
            DenseLayer layer;
            layer.weight = Matrix(fan_in, fan_out);
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (double& w : layer.weight.values()) w = rng.uniform(-bound, bound);
            layer.bias.assign(fan_out, 0.0);
            layer.activation = (l + 2 == widths.size()) ? output : hidden;
            net.layers.push_back(std::move(layer));
        }
        return net;
    }

    void validate() const {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            if (layer.bias.size() != layer.fan_out())
                throw ShapeError("Mlp: layer " + std::to_string(l) + " bias length mismatch");
            if (l > 0 && layers[l - 1].fan_out() != layer.fan_in())
                throw ShapeError("Mlp: layer " + std::to_string(l) + " does not chain");
            if (!layer.weight.all_finite())
                throw NumericError("Mlp: layer " + std::to_string(l) + " has non-finite weights");
        }
    }
};

struct MlpCache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
    std::uint64_t revision = 0;
};

struct MlpGrads {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;

    static MlpGrads zeros_like(const Mlp& net) {
        MlpGrads g;
        for (const auto& l : net.layers) {
            g.weight.emplace_back(l.fan_in(), l.fan_out());
            g.bias.emplace_back(l.fan_out(), 0.0);
        }
        return g;
    }

    void add(const MlpGrads& other) {
        for (std::size_t l = 0; l < weight.size(); ++l) {
            auto dst = weight[l].values();
            auto src = other.weight[l].values();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            for (std::size_t k = 0; k < bias[l].size(); ++k) bias[l][k] += other.bias[l][k];
        }
    }
};

struct MlpForward {
    Matrix output;
    MlpCache cache;
};

inline MlpForward mlp_forward(const Mlp& net, const Matrix& input) {
    if (net.layers.empty()) throw ShapeError("mlp_forward: empty network");
    if (input.cols() != net.in_width())
        throw ShapeError("mlp_forward: input width " + std::to_string(input.cols()) +
                         " != fan_in " + std::to_string(net.in_width()));
    if (!input.all_finite()) throw NumericError("mlp_forward: non-finite input");

    MlpForward fw;
    fw.cache.revision = net.revision;
    fw.cache.inputs.reserve(net.layers.size());
    fw.cache.pre.reserve(net.layers.size());
    Matrix x = input;
    for (const auto& layer : net.layers) {
        Matrix z = matmul(x, layer.weight);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto zr = z.row(r);
            for (std::size_t c = 0; c < zr.size(); ++c) zr[c] += layer.bias[c];
        }
        Matrix a(z.rows(), z.cols());
        {
            auto zv = z.values();
            auto av = a.values();
            for (std::size_t k = 0; k < zv.size(); ++k) av[k] = activate(layer.activation, zv[k]);
        }
        fw.cache.inputs.push_back(std::move(x));
        fw.cache.pre.push_back(std::move(z));
        x = std::move(a);
    }
    fw.output = std::move(x);
    return fw;
}

inline Matrix mlp_apply(const Mlp& net, const Matrix& input) {
    return mlp_forward(net, input).output;
}

struct MlpBackward {
    MlpGrads grads;
    Matrix input_grad;
};

inline MlpBackward mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& output_grad) {
    if (cache.revision != net.revision || cache.pre.size() != net.layers.size() ||
        cache.inputs.size() != net.layers.size())
        throw ContractError("mlp_backward: cache does not belong to the current parameters");
    const std::size_t batch = cache.inputs.front().rows();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (cache.pre[l].rows() != batch || cache.pre[l].cols() != net.layers[l].fan_out() ||
            cache.inputs[l].cols() != net.layers[l].fan_in())
            throw ContractError("mlp_backward: cache shapes do not match layer " + std::to_string(l));
    }
    if (output_grad.rows() != batch || output_grad.cols() != net.out_width())
        throw ShapeError("mlp_backward: output_grad " + shape_str(output_grad) + " expected " +
                         std::to_string(batch) + "x" + std::to_string(net.out_width()));

    MlpBackward bw;
    bw.grads.weight.resize(net.layers.size());
    bw.grads.bias.resize(net.layers.size());
    Matrix grad = output_grad;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        const auto pre = cache.pre[l].values();
        auto g = grad.values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] *= activate_derivative(layer.activation, pre[k]);

        bw.grads.weight[l] = matmul_tn(cache.inputs[l], grad);
        std::vector<double> db(layer.fan_out(), 0.0);
        for (std::size_t r = 0; r < grad.rows(); ++r) {
            const auto gr = grad.row(r);
            for (std::size_t c = 0; c < db.size(); ++c) db[c] += gr[c];
        }
        bw.grads.bias[l] = std::move(db);
        grad = matmul_nt(grad, layer.weight);
    }
    bw.input_grad = std::move(grad);
    return bw;
}

}  // namespace clevercatch
