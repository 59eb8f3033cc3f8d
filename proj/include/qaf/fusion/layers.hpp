#pragma once

#include <qaf/diffcore/ops.hpp>
#include <qaf/rng.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace qaf {

/// A named trainable tensor. `unit_rows` marks parameters whose rows are
/// renormalized to unit length after each optimizer step.
struct NamedParam {
    std::string name;
    Var var;
    bool unit_rows = false;
};

/// Fully-connected layer. Weights hold one row per output neuron, which is
/// also the vector the hyperspherical energy acts on.
struct Dense {
    std::string name;
    Var weight; // out x in
    Var bias;   // out

    Dense() = default;

    Dense(std::string name_, std::size_t in, std::size_t out, Rng& rng) : name(std::move(name_))
    {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in));
        Array w(Shape{out, in});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = stddev * normal01(rng);
        weight = parameter(std::move(w));
        bias = parameter(Array(Shape{out}));
    }

    std::size_t in_features() const { return weight->value.cols(); }
    std::size_t out_features() const { return weight->value.rows(); }

    /// x is (n x in) or a single (in) vector.
    Var operator()(const Var& x) const
    {
        if (x->value.rank() == 1) return add(matmul(weight, x), bias);
        return add_bias(matmul_nt(x, weight), bias);
    }

    void collect(std::vector<NamedParam>& out) const
    {
        out.push_back({name + "/w", weight, false});
        out.push_back({name + "/b", bias, false});
    }
};

/// Inverted dropout on hidden activations; identity when rng is null or rate is 0.
inline Var fc_dropout(const Var& x, double rate, Rng* rng)
{
    if (rng == nullptr || rate <= 0.0) return x;
    const double keep = 1.0 - rate;
    Array mask(x->shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = uniform01(*rng) < keep ? 1.0 / keep : 0.0;
    return mul(x, constant(std::move(mask)));
}

} // namespace qaf
