#pragma once

#include <qaf/fusion/layers.hpp>
#include <qaf/losses/state.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace qaf {

/// Heavy-ball momentum: v <- momentum v + (g + wd w); w <- w - lr v.
struct OptimizerState {
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t step = 0;
    std::map<std::string, Array> velocity;
};

/// Step schedule: lr0 until s0, then multiplied by `factor` at s0 and every
/// s1 steps after, never below lr_min.
struct Schedule {
    double lr0 = 0.01;
    double factor = 0.1;
    std::size_t s0 = 1400;
    std::size_t s1 = 1000;
    double lr_min = 1e-6;

    void validate() const
    {
        if (!(lr0 > 0.0) || !(factor > 0.0 && factor <= 1.0) || s1 == 0 || lr_min < 0.0 || lr_min > lr0)
            throw ConfigError("schedule: need lr0 > 0, 0 < factor <= 1, s1 > 0, 0 <= lr_min <= lr0");
    }
};

inline double lr_at(const Schedule& s, std::size_t step)
{
    if (step < s.s0) return s.lr0;
    const auto decays = 1 + (step - s.s0) / s.s1;
    return std::max(s.lr_min, s.lr0 * std::pow(s.factor, static_cast<double>(decays)));
}

/// One update of every gradient-carrying parameter. Gradients are checked
/// for finiteness before anything is modified. Unit-row parameters are
/// renormalized afterwards.
inline void sgd_step(const std::vector<NamedParam>& params, OptimizerState& state, double lr)
{
    for (const auto& p : params) {
        if (!p.var->requires_grad || !p.var->has_grad) continue;
        if (!p.var->grad.all_finite()) throw NonFiniteError("sgd_step: non-finite gradient for '" + p.name + "'");
    }
    for (const auto& p : params) {
        if (!p.var->requires_grad) continue;
        Array& w = p.var->value;
        auto [it, fresh] = state.velocity.try_emplace(p.name, Array::zeros_like(w));
        Array& v = it->second;
        if (v.shape() != w.shape()) throw ShapeError("sgd_step: velocity shape mismatch for '" + p.name + "'");
        const bool has = p.var->has_grad;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = (has ? p.var->grad[i] : 0.0) + state.weight_decay * w[i];
            v[i] = state.momentum * v[i] + g;
            w[i] -= lr * v[i];
        }
        if (p.unit_rows) renormalize_rows(w);
    }
    ++state.step;
}

inline void zero_grads(const std::vector<NamedParam>& params)
{
    for (const auto& p : params) p.var->zero_grad();
}

} // namespace qaf
