#pragma once

#include <qaf/losses/state.hpp>

#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace qaf {

/// Floor applied to squared distances inside the hyperspherical energy.
inline constexpr double kEnergyEps = 1e-12;

namespace detail {

inline Var offdiag_mask(std::size_t n)
{
    Array m(Shape{n, n}, 1.0);
    for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 0.0;
    return constant(std::move(m));
}

inline Var add_all(const std::vector<Var>& terms)
{
    if (terms.empty()) return scalar_constant(0.0);
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

} // namespace detail

/// Angular-margin softmax loss averaged over the features. The target logit
/// is ||x|| (cos(m1 theta + m2) - m3) with m1 theta + m2 clamped to [0, pi];
/// every other class contributes ||x|| cos theta_j. `fixed_scale` > 0
/// replaces ||x|| as the scale.
inline Var angular_loss(const std::vector<Var>& features, const std::vector<std::uint32_t>& labels,
                        const ClassifierHead& head, const Margins& m, double fixed_scale = 0.0)
{
    if (features.empty()) throw Error("angular_loss: empty batch");
    if (features.size() != labels.size()) throw ShapeError("angular_loss: feature/label count mismatch");
    const auto M = head.classes();
    if (M < 2) throw Error("angular_loss: at least two classes required");

    std::vector<Var> per_sample;
    per_sample.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto& x = features[i];
        const auto y = labels[i];
        if (y >= M) throw Error("angular_loss: label " + std::to_string(y) + " out of range");
        Var n = norm(x);
        if (n->value[0] == 0.0) throw Error("angular_loss: zero-norm feature");
        Var scale_node = fixed_scale > 0.0 ? scalar_constant(fixed_scale) : n;

        Var cosines = matmul(head.weights, normalize(x));
        Var logits = scale_by(cosines, scale_node);
        Var theta = acos(pick(cosines, y));
        Var angle = clamp(add_scalar(scale(theta, m.m1), m.m2), 0.0, std::numbers::pi);
        Var target = mul(scale_node, add_scalar(cos(angle), -m.m3));

        Array onehot(Shape{M});
        onehot[y] = 1.0;
        Var z = add(logits, scale_by(constant(std::move(onehot)), sub(target, pick(logits, y))));
        per_sample.push_back(sub(logsumexp(z), target));
    }
    return scale(detail::add_all(per_sample), 1.0 / static_cast<double>(features.size()));
}

/// Mean of 1 / (||c_i - c_j|| + 1) over ordered pairs of distinct centers.
inline Var uniform_loss(const Var& centers)
{
    if (centers->value.rank() != 2) throw ShapeError("uniform_loss: centers must be a matrix");
    const auto M = centers->value.rows();
    if (M < 2) throw Error("uniform_loss: at least two centers required");
    Var dist = sqrt(floor_at(pairwise_sq_dist(centers), 1e-30));
    Var terms = mul(reciprocal(add_scalar(dist, 1.0)), detail::offdiag_mask(M));
    return scale(sum(terms), 1.0 / static_cast<double>(M * (M - 1)));
}

/// For each set: sum over ordered modality pairs of (||Z_a|| - ||Z_b||)^2
/// divided by the set's total norm; averaged with 1/(N K (K-1)).
inline Var representation_loss(const std::vector<std::vector<Var>>& batch)
{
    if (batch.empty()) throw Error("representation_loss: empty batch");
    const auto K = batch.front().size();
    if (K < 2) return scalar_constant(0.0);
    std::vector<Var> per_set;
    for (const auto& zs : batch) {
        if (zs.size() != K) throw ShapeError("representation_loss: inconsistent modality count");
        std::vector<Var> norms;
        for (const auto& z : zs) norms.push_back(reshape(norm(z), Shape{1}));
        Var nv = concat(norms);
        Var den = sum(nv);
        if (den->value[0] == 0.0) throw Error("representation_loss: all modality representations are zero");
        Var num = sum(pairwise_sq_dist(reshape(nv, Shape{K, 1})));
        per_set.push_back(div(num, den));
    }
    const double norm_factor = static_cast<double>(batch.size() * K * (K - 1));
    return scale(detail::add_all(per_set), 1.0 / norm_factor);
}

/// Mean squared distance between the direction of each multimodal center and
/// the direction of the matching unimodal center, over modalities and classes.
inline Var center_alignment_loss(const CenterBank& bank)
{
    if (bank.unimodal.empty()) throw Error("center_alignment_loss: no unimodal centers");
    const auto M = bank.multimodal->value.rows();
    Var multi = normalize_rows(bank.multimodal);
    std::vector<Var> terms;
    for (const auto& uni : bank.unimodal) {
        if (uni->shape() != bank.multimodal->shape()) throw ShapeError("center_alignment_loss: center shape mismatch");
        terms.push_back(sum(square(sub(multi, normalize_rows(uni)))));
    }
    return scale(detail::add_all(terms), 1.0 / static_cast<double>(bank.unimodal.size() * M));
}

/// Sum over ordered pairs of inverse squared distances between the
/// normalized (and optionally projected) rows of W. Half-space mode adds the
/// negated copy of every row to the set.
inline Var hyperspherical_energy(const Var& weights, const Var* projection = nullptr, bool half_space = false)
{
    if (weights->value.rank() != 2) throw ShapeError("hyperspherical_energy: weights must be a matrix");
    if (weights->value.rows() < 2) throw Error("hyperspherical_energy: at least two rows required");
    Var u = normalize_rows(weights);
    if (projection != nullptr) {
        if ((*projection)->value.cols() != weights->value.cols())
            throw ShapeError("hyperspherical_energy: projection " + shape_str((*projection)->shape()) +
                             " does not match rows of width " + std::to_string(weights->value.cols()));
        u = normalize_rows(matmul_nt(u, *projection));
    }
    if (half_space) u = concat_rows({u, neg(u)});
    const auto n = u->value.rows();
    Var inv = reciprocal(floor_at(pairwise_sq_dist(u), kEnergyEps));
    return sum(mul(inv, detail::offdiag_mask(n)));
}

/// Named, already-weighted loss terms whose values add up to `total`.
struct LossBreakdown {
    Var total;
    std::vector<std::pair<std::string, double>> terms;

    double sum_of_terms() const
    {
        double s = 0.0;
        for (const auto& [name, v] : terms) s += v;
        return s;
    }

    double term(const std::string& name) const
    {
        for (const auto& [n, v] : terms)
            if (n == name) return v;
        throw Error("loss breakdown: no term '" + name + "'");
    }
};

namespace detail {

struct TermBuilder {
    std::vector<Var> nodes;
    LossBreakdown out;

    void add(std::string name, const Var& weighted)
    {
        out.terms.emplace_back(std::move(name), weighted->value.item());
        nodes.push_back(weighted);
    }

    LossBreakdown finish()
    {
        out.total = add_all(nodes);
        return std::move(out);
    }
};

} // namespace detail

/// Network-compactness loss over explicit layer weights: lambda_h times the
/// normalized energy of each hidden layer (projected when its width exceeds
/// the bank's target) plus lambda_h0 times the normalized energy of the
/// output class vectors.
inline LossBreakdown compactness_loss(const std::vector<Var>& layer_weights, const Var& output_weights,
                                      const ProjectionBank& bank, const HyperParams& hp)
{
    detail::TermBuilder b;
    std::vector<Var> hidden;
    if (hp.lambda_h > 0.0) {
        for (const auto& w : layer_weights) {
            const auto N = w->value.rows();
            if (N < 2) continue;
            Var e = hyperspherical_energy(w, bank.for_width(w->value.cols()), hp.half_space);
            hidden.push_back(scale(e, 1.0 / static_cast<double>(N * (N - 1))));
        }
    }
    b.add("compact_hidden", scale(detail::add_all(hidden), hp.lambda_h));
    if (hp.lambda_h0 > 0.0) {
        const auto M = output_weights->value.rows();
        Var e = hyperspherical_energy(output_weights, nullptr, hp.half_space);
        b.add("compact_output", scale(e, hp.lambda_h0 / static_cast<double>(M * (M - 1))));
    } else {
        b.add("compact_output", scalar_constant(0.0));
    }
    return b.finish();
}

inline LossBreakdown compactness_loss(const FusionModel& model, const LossState& state, const HyperParams& hp)
{
    std::vector<Var> weights;
    for (const auto* l : model.layers()) weights.push_back(l->weight);
    return compactness_loss(weights, state.head.weights, state.projections, hp);
}

/// Multimodal separability loss over a batch of forward passes:
/// L_a + lambda_u L_u + lambda_c L_c + lambda_r L_r
///     + (1/K) sum_k (lambda_ak L_ak + lambda_uk L_uk).
inline LossBreakdown separability_loss(const std::vector<ForwardOutput>& batch, const std::vector<std::uint32_t>& labels,
                                       const LossState& state, const HyperParams& hp)
{
    if (batch.empty()) throw Error("separability_loss: empty batch");
    const auto K = batch.front().Y.size();
    detail::TermBuilder b;

    std::vector<Var> z;
    for (const auto& f : batch) z.push_back(f.Z);
    b.add("angular", angular_loss(z, labels, state.head, hp.multimodal, hp.fixed_scale));
    b.add("uniform", scale(uniform_loss(state.centers.multimodal), hp.lambda_u));

    const double lc = hp.effective_lambda_c();
    b.add("alignment", lc > 0.0 ? scale(center_alignment_loss(state.centers), lc) : scalar_constant(0.0));

    std::vector<std::vector<Var>> zk;
    for (const auto& f : batch) zk.push_back(f.Zk);
    b.add("representation", scale(representation_loss(zk), hp.lambda_r));

    const double per_modality = 1.0 / static_cast<double>(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<Var> y;
        for (const auto& f : batch) y.push_back(f.Y[k]);
        const auto ks = std::to_string(k);
        b.add("uni_angular/" + ks,
              scale(angular_loss(y, labels, state.unimodal_heads.at(k), hp.unimodal, hp.fixed_scale),
                    per_modality * hp.lambda_ak));
        b.add("uni_uniform/" + ks,
              scale(uniform_loss(state.centers.unimodal.at(k)), per_modality * hp.lambda_uk));
    }
    return b.finish();
}

/// L = L_ms + L_mc.
inline LossBreakdown total_loss(const std::vector<ForwardOutput>& batch, const std::vector<std::uint32_t>& labels,
                                const FusionModel& model, const LossState& state, const HyperParams& hp)
{
    auto ms = separability_loss(batch, labels, state, hp);
    auto mc = compactness_loss(model, state, hp);
    LossBreakdown out;
    out.terms = ms.terms;
    out.terms.insert(out.terms.end(), mc.terms.begin(), mc.terms.end());
    out.total = add(ms.total, mc.total);
    return out;
}

/// EMA pull of each class center present in the batch toward the batch mean
/// of its embeddings; absent classes are untouched. No gradient is involved.
inline void update_center_rows(Array& centers, const std::vector<Array>& embeddings,
                               const std::vector<std::uint32_t>& labels, double rate)
{
    if (embeddings.size() != labels.size()) throw ShapeError("update_centers: embedding/label count mismatch");
    const auto D = centers.cols();
    std::map<std::uint32_t, std::pair<std::vector<double>, std::size_t>> acc;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].size() != D) throw ShapeError("update_centers: embedding dimension mismatch");
        if (labels[i] >= centers.rows()) throw Error("update_centers: label out of range");
        auto& [s, n] = acc[labels[i]];
        if (s.empty()) s.assign(D, 0.0);
        for (std::size_t j = 0; j < D; ++j) s[j] += embeddings[i][j];
        ++n;
    }
    for (const auto& [label, entry] : acc) {
        const auto& [s, n] = entry;
        auto row = centers.row(label);
        for (std::size_t j = 0; j < D; ++j) row[j] = (1.0 - rate) * row[j] + rate * (s[j] / static_cast<double>(n));
    }
}

inline void update_centers(CenterBank& bank, const std::vector<ForwardOutput>& batch,
                           const std::vector<std::uint32_t>& labels)
{
    std::vector<Array> z;
    for (const auto& f : batch) z.push_back(f.Z->value);
    update_center_rows(bank.multimodal->value, z, labels, bank.rate);
    for (std::size_t k = 0; k < bank.unimodal.size(); ++k) {
        std::vector<Array> y;
        for (const auto& f : batch) y.push_back(f.Y.at(k)->value);
        update_center_rows(bank.unimodal[k]->value, y, labels, bank.rate);
    }
}

} // namespace qaf
