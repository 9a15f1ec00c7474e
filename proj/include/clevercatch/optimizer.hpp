// clevercatch/optimizer.hpp
// SGD and Adam over named flat parameter slots.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/mlp.hpp"

namespace clevercatch {

// A named parameter tensor viewed as a flat span, paired with its gradient.
struct ParamSlot {
    std::string name;
    std::span<double> values;
    std::span<const double> grads;
};

enum class OptimizerKind { sgd, adam };

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Optimizer {
public:
    explicit Optimizer(OptimizerSettings settings = {}) : settings_(settings) {
        if (!(settings_.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be > 0");
        if (settings_.kind == OptimizerKind::adam) {
            if (!(settings_.beta1 > 0.0 && settings_.beta1 < 1.0) ||
                !(settings_.beta2 > 0.0 && settings_.beta2 < 1.0))
                throw ConfigError("optimizer: adam betas must lie in (0,1)");
            if (!(settings_.epsilon > 0.0)) throw ConfigError("optimizer: adam epsilon must be > 0");
        }
    }

    const OptimizerSettings& settings() const noexcept { return settings_; }
    std::uint64_t steps() const noexcept { return steps_; }

    void step(std::span<const ParamSlot> slots) {
        for (const auto& slot : slots) {
            if (slot.values.size() != slot.grads.size())
                throw ShapeError("optimizer: '" + slot.name + "' gradient length mismatch");
            for (double g : slot.grads)
                if (!std::isfinite(g)) throw NumericError("optimizer: non-finite gradient in '" + slot.name + "'");
        }
        if (settings_.kind == OptimizerKind::adam) {
            if (first_.empty()) {
                for (const auto& slot : slots) {
                    first_.emplace_back(slot.values.size(), 0.0);
                    second_.emplace_back(slot.values.size(), 0.0);
                }
            }
            if (first_.size() != slots.size())
                throw ShapeError("optimizer: slot count changed between steps");
            for (std::size_t s = 0; s < slots.size(); ++s)
                if (first_[s].size() != slots[s].values.size())
                    throw ShapeError("optimizer: '" + slots[s].name + "' changed shape between steps");
        }

        ++steps_;
        const double lr = settings_.learning_rate;
        if (settings_.kind == OptimizerKind::sgd) {
            for (const auto& slot : slots)
                for (std::size_t k = 0; k < slot.values.size(); ++k) slot.values[k] -= lr * slot.grads[k];
            return;
        }
        const double b1 = settings_.beta1, b2 = settings_.beta2, eps = settings_.epsilon;
        const double t = static_cast<double>(steps_);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t s = 0; s < slots.size(); ++s) {
            auto& m = first_[s];
            auto& v = second_[s];
            const auto& slot = slots[s];
            for (std::size_t k = 0; k < slot.values.size(); ++k) {
                const double g = slot.grads[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                const double mhat = m[k] / c1;
                const double vhat = v[k] / c2;
                slot.values[k] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

private:
    OptimizerSettings settings_;
    std::uint64_t steps_ = 0;
    std::vector<std::vector<double>> first_;
    std::vector<std::vector<double>> second_;
};

inline void append_mlp_slots(std::vector<ParamSlot>& slots, Mlp& net, const MlpGrads& grads,
                             const std::string& prefix) {
    if (grads.weight.size() != net.layers.size()) throw ShapeError("mlp slots: gradient layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const std::string tag = prefix + ".layer" + std::to_string(l);
        slots.push_back({tag + ".weight", net.layers[l].weight.values(), grads.weight[l].values()});
        slots.push_back({tag + ".bias", net.layers[l].bias, grads.bias[l]});
    }
}

}  // namespace clevercatch
