#pragma once

#include <qaf/fusion/model.hpp>

#include <map>
#include <string>
#include <vector>

namespace qaf {

/// Angular margins (m1 multiplicative, m2 additive angle, m3 additive cosine).
struct Margins {
    double m1 = 1.0;
    double m2 = 0.0;
    double m3 = 0.0;

    bool operator==(const Margins&) const = default;
};

struct HyperParams {
    Margins multimodal{1.1, 0.4, 0.2};
    Margins unimodal{1.2, 0.4, 0.2};
    double lambda_u = 1.0;
    double lambda_r = 0.2;
    double lambda_c = 0.2;
    double lambda_ak = 0.3;
    double lambda_uk = 0.3;
    double lambda_h = 2.5;
    double lambda_h0 = 1.0;
    std::size_t projected_dim = 30;
    bool half_space = true;
    bool learn_projection = true;
    double center_rate = 0.5; // EMA rate alpha_c
    bool verification = true; // forces lambda_c = 0
    double fixed_scale = 0.0; // 0 uses the live feature norm as the logit scale

    double effective_lambda_c() const noexcept { return verification ? 0.0 : lambda_c; }

    void validate() const
    {
        for (const auto* m : {&multimodal, &unimodal})
            if (m->m1 < 1.0) throw ConfigError("hyperparams: m1 must be >= 1");
        for (double l : {lambda_u, lambda_r, lambda_c, lambda_ak, lambda_uk, lambda_h, lambda_h0})
            if (l < 0.0) throw ConfigError("hyperparams: negative loss weight");
        if (projected_dim == 0) throw ConfigError("hyperparams: projected_dim must be positive");
        if (center_rate < 0.0 || center_rate > 1.0) throw ConfigError("hyperparams: center_rate outside [0,1]");
        if (fixed_scale < 0.0) throw ConfigError("hyperparams: fixed_scale must be >= 0");
    }
};

inline Array random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng)
{
    Array a(Shape{rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        double n = 0.0;
        for (auto& v : a.row(r)) {
            v = normal01(rng);
            n += v * v;
        }
        n = std::sqrt(n);
        for (auto& v : a.row(r)) v /= n;
    }
    return a;
}

/// Rescales each row of a parameter to unit L2 norm in place.
inline void renormalize_rows(Array& a)
{
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double n = 0.0;
        for (double v : a.row(r)) n += v * v;
        n = std::sqrt(n);
        if (n == 0.0) throw NonFiniteError("renormalize_rows: zero row " + std::to_string(r));
        for (auto& v : a.row(r)) v /= n;
    }
}

/// M unit-norm class vectors v_j, no bias.
struct ClassifierHead {
    Var weights; // M x D

    std::size_t classes() const { return weights->value.rows(); }
};

/// Class centers for the multimodal space and for each unimodal space.
struct CenterBank {
    Var multimodal;              // M x D
    std::vector<Var> unimodal;   // K entries, M x D
    double rate = 0.5;
};

/// Shared compressive projections P* (r x d), one per input width d > r.
struct ProjectionBank {
    std::size_t target_dim = 30;
    bool learnable = true;
    std::map<std::size_t, Var> by_width;

    /// Null when the width is already <= target_dim (no compression).
    const Var* for_width(std::size_t width) const
    {
        auto it = by_width.find(width);
        return it == by_width.end() ? nullptr : &it->second;
    }
};

/// Everything the objectives own besides the fusion networks.
struct LossState {
    ClassifierHead head;
    std::vector<ClassifierHead> unimodal_heads;
    CenterBank centers;
    ProjectionBank projections;

    LossState() = default;

    LossState(const FusionModel& model, std::size_t classes, const HyperParams& hp, std::uint64_t seed)
    {
        if (classes < 2) throw ConfigError("loss state: at least two classes required");
        Rng rng = make_stream(seed, {tag(Stream::Init), 2});
        const auto D = model.shape().embed_dim;
        const auto K = model.modalities();
        head.weights = parameter(random_unit_rows(classes, D, rng));
        for (std::size_t k = 0; k < K; ++k) unimodal_heads.push_back({parameter(random_unit_rows(classes, D, rng))});

        auto centers_init = [&] {
            Array c(Shape{classes, D});
            for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.1 * normal01(rng);
            return parameter(std::move(c));
        };
        centers.rate = hp.center_rate;
        centers.multimodal = centers_init();
        for (std::size_t k = 0; k < K; ++k) centers.unimodal.push_back(centers_init());

        projections.target_dim = hp.projected_dim;
        projections.learnable = hp.learn_projection;
        for (const auto* layer : model.layers()) {
            const auto width = layer->in_features();
            if (width <= hp.projected_dim || projections.by_width.count(width)) continue;
            auto p = random_unit_rows(hp.projected_dim, width, rng);
            projections.by_width[width] = hp.learn_projection ? parameter(std::move(p)) : constant(std::move(p));
        }
    }

    std::size_t classes() const { return head.classes(); }

    std::vector<NamedParam> parameters() const
    {
        std::vector<NamedParam> out;
        out.push_back({"head/multimodal", head.weights, true});
        for (std::size_t k = 0; k < unimodal_heads.size(); ++k)
            out.push_back({"head/unimodal/" + std::to_string(k), unimodal_heads[k].weights, true});
        out.push_back({"centers/multimodal", centers.multimodal, false});
        for (std::size_t k = 0; k < centers.unimodal.size(); ++k)
            out.push_back({"centers/unimodal/" + std::to_string(k), centers.unimodal[k], false});
        for (const auto& [width, p] : projections.by_width)
            out.push_back({"projection/" + std::to_string(width), p, true});
        return out;
    }
};

} // namespace qaf
