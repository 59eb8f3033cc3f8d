#pragma once

#include <qaf/fusion/networks.hpp>
#include <qaf/fusion/sample_set.hpp>

#include <optional>
#include <string>
#include <vector>

namespace qaf {

/// Architecture of the two fusion blocks.
struct ModelShape {
    std::vector<std::size_t> input_dims{64, 64, 64}; // one per modality
    std::vector<std::size_t> encoder_hidden{64, 64};
    std::size_t embed_dim = 32;      // D
    std::size_t quality_hidden = 32; // qNet^a quality branch width
    std::size_t quality_tap = 1;     // 1-based encoder hidden layer feeding the quality branch
    std::size_t quality_dim = 16;    // v, size of Q_k^b
    std::vector<std::size_t> fnet_hidden{16, 16};

    std::size_t modalities() const noexcept { return input_dims.size(); }

    bool operator==(const ModelShape&) const = default;
};

/// Quality-score dropout (mu_k, mu) plus unit dropout on hidden FC layers.
/// At evaluation (training == false) every mask bit is 1.
struct DropoutSpec {
    std::vector<double> intra{0.1, 0.1, 0.1}; // mu_k per modality
    double inter = 0.2;                       // mu
    double fc = 0.0;                          // hidden-unit dropout rate
    bool training = false;
    std::uint64_t seed = 0;

    void validate(std::size_t modalities) const
    {
        if (intra.size() != modalities)
            throw ConfigError("dropout: " + std::to_string(intra.size()) + " intra rates for " +
                              std::to_string(modalities) + " modalities");
        auto ok = [](double p) { return p >= 0.0 && p < 1.0; };
        for (double p : intra)
            if (!ok(p)) throw ConfigError("dropout: intra rate outside [0,1)");
        if (!ok(inter) || !ok(fc)) throw ConfigError("dropout: rate outside [0,1)");
    }
};

/// Draws binary score-dropout bits: 0 with probability `rate`.
inline std::vector<double> draw_mask(std::size_t n, double rate, Rng* rng)
{
    std::vector<double> d(n, 1.0);
    if (rng == nullptr || rate <= 0.0) return d;
    for (auto& bit : d) bit = uniform01(*rng) < rate ? 0.0 : 1.0;
    return d;
}

// ---------------------------------------------------------------------------
// Fusion operations

/// softmax(q * d): the normalization shared by both fusion blocks.
inline Var normalize_scores(const Var& scores, const std::vector<double>& mask)
{
    if (scores->value.rank() != 1 || mask.size() != scores->value.size())
        throw ShapeError("normalize_scores: " + std::to_string(mask.size()) + " mask bits for scores " +
                         shape_str(scores->shape()));
    return softmax(mul(scores, constant(Array::vector(mask))));
}

struct IntraFusion {
    Var representation; // Y_k, D
    Var weights;        // normalized q~_ki^a, p_k
};

/// Softmax of mask-multiplied scores, then the weighted sum of the sample
/// features. A dropped bit sets that exponent to 0; the sample keeps a
/// neutral weight rather than being removed.
inline IntraFusion intra_fuse(const Var& features, const Var& scores, const std::vector<double>& mask)
{
    if (scores->value.rank() != 1 || scores->value.size() == 0) throw Error("intra_fuse: empty score list");
    const auto p = scores->value.size();
    if (features->value.rank() != 2 || features->value.rows() != p)
        throw ShapeError("intra_fuse: features " + shape_str(features->shape()) + " vs " + std::to_string(p) +
                         " scores");
    if (mask.size() != p) throw ShapeError("intra_fuse: mask length " + std::to_string(mask.size()));
    Var w = normalize_scores(scores, mask);
    return {matmul(transpose(features), w), w};
}

/// List form: one (Y_ki, q_ki) pair per sample.
inline IntraFusion intra_fuse(const std::vector<std::pair<Var, Var>>& outputs, const std::vector<double>& mask)
{
    if (outputs.empty()) throw Error("intra_fuse: empty sample list");
    std::vector<Var> feats, scores;
    for (const auto& [y, q] : outputs) {
        feats.push_back(y);
        scores.push_back(reshape(q, Shape{1}));
    }
    return intra_fuse(stack_rows(feats), concat(scores), mask);
}

struct InterQuality {
    Var raw;        // q_k^b in (0,1)
    Var normalized; // q~_k^b
};

inline InterQuality inter_quality(const FNetB& net, const std::vector<Var>& quality_vectors,
                                  const std::vector<double>& mask, double fc_rate = 0.0, Rng* rng = nullptr)
{
    if (quality_vectors.empty()) throw Error("inter_quality: no modalities");
    if (mask.size() != quality_vectors.size())
        throw ShapeError("inter_quality: mask length " + std::to_string(mask.size()));
    Var raw = net.forward(concat(quality_vectors), fc_rate, rng);
    if (raw->value.size() != quality_vectors.size())
        throw ShapeError("inter_quality: network emits " + std::to_string(raw->value.size()) + " scores for " +
                         std::to_string(quality_vectors.size()) + " modalities");
    return {raw, normalize_scores(raw, mask)};
}

/// Z = sum_k q~_k^b Z_k (aggregation by addition).
inline Var inter_fuse(const std::vector<Var>& embeddings, const Var& weights)
{
    if (embeddings.empty()) throw Error("inter_fuse: no modalities");
    if (weights->value.size() != embeddings.size())
        throw ShapeError("inter_fuse: " + std::to_string(embeddings.size()) + " embeddings, " +
                         std::to_string(weights->value.size()) + " weights");
    return matmul(transpose(stack_rows(embeddings)), weights);
}

// ---------------------------------------------------------------------------
// Model

/// K qNet^a encoders, K qNet^b blocks and FNet^b.
class FusionModel {
public:
    FusionModel() = default;

    FusionModel(ModelShape shape, std::uint64_t seed) : shape_(std::move(shape))
    {
        const auto K = shape_.modalities();
        if (K == 0) throw ConfigError("model: at least one modality required");
        Rng rng = make_stream(seed, {tag(Stream::Init)});
        for (std::size_t k = 0; k < K; ++k)
            qnet_a_.emplace_back("qnet_a/" + std::to_string(k), shape_.input_dims[k], shape_.encoder_hidden,
                                 shape_.embed_dim, shape_.quality_hidden, shape_.quality_tap, rng);
        for (std::size_t k = 0; k < K; ++k)
            qnet_b_.emplace_back("qnet_b/" + std::to_string(k), shape_.embed_dim, shape_.quality_dim, rng);
        fnet_b_ = FNetB("fnet_b", shape_.quality_dim * K, shape_.fnet_hidden, K, rng);
    }

    const ModelShape& shape() const noexcept { return shape_; }
    std::size_t modalities() const noexcept { return shape_.modalities(); }

    const QNetA& qnet_a(std::size_t k) const { return qnet_a_.at(k); }
    QNetA& qnet_a(std::size_t k) { return qnet_a_.at(k); }
    const QNetB& qnet_b(std::size_t k) const { return qnet_b_.at(k); }
    QNetB& qnet_b(std::size_t k) { return qnet_b_.at(k); }
    const FNetB& fnet_b() const { return fnet_b_; }

    /// Every dense layer of the fusion networks, in a fixed order.
    std::vector<const Dense*> layers() const
    {
        std::vector<const Dense*> out;
        for (const auto& n : qnet_a_)
            for (auto* l : n.layers()) out.push_back(l);
        for (const auto& n : qnet_b_)
            for (auto* l : n.layers()) out.push_back(l);
        for (auto* l : fnet_b_.layers()) out.push_back(l);
        return out;
    }

    std::vector<NamedParam> parameters() const
    {
        std::vector<NamedParam> out;
        for (auto* l : layers()) l->collect(out);
        return out;
    }

private:
    ModelShape shape_;
    std::vector<QNetA> qnet_a_;
    std::vector<QNetB> qnet_b_;
    FNetB fnet_b_;
};

/// Single-sample forward of qNet^a: (Y_ki, q_ki).
inline std::pair<Var, Var> qnet_a_forward(const QNetA& net, const Array& sample)
{
    if (sample.rank() != 1 || sample.size() != net.input_dim())
        throw ShapeError("qnet_a_forward: sample shape " + shape_str(sample.shape()) + ", expected [" +
                         std::to_string(net.input_dim()) + "]");
    auto out = net.forward(constant(Array::matrix(1, sample.size(), sample.storage())));
    return {reshape(out.features, Shape{net.embed_dim()}), pick(out.scores, 0)};
}

inline std::pair<Var, Var> qnet_b_forward(const QNetB& net, const Var& y)
{
    auto out = net.forward(y);
    return {out.embedding, out.quality};
}

/// Forces uniform weights in either block (the averaging baseline).
struct FusionOverrides {
    bool uniform_intra = false;
    bool uniform_inter = false;
};

struct ForwardOutput {
    Var Z;                           // multimodal representation
    std::vector<Var> Y;              // unimodal representations Y_k
    std::vector<Var> Zk;             // qNet^b embeddings Z_k
    std::vector<Var> intra_scores;   // raw q_ki, one vector per modality
    std::vector<Var> intra_weights;  // q~_ki^a
    Var inter_scores;                // raw q_k^b
    Var inter_weights;               // q~_k^b
};

/// Both fusion blocks end to end. Dropout applies only when
/// `dropout.training`; masks come from `rng` (or a stream seeded from
/// dropout.seed when rng is null).
inline ForwardOutput model_forward(const FusionModel& model, const MultimodalSampleSet& set,
                                   const DropoutSpec& dropout, Rng* rng = nullptr, FusionOverrides overrides = {})
{
    validate(set, model.shape().input_dims);
    const auto K = model.modalities();
    std::optional<Rng> local;
    Rng* r = nullptr;
    if (dropout.training) {
        dropout.validate(K);
        if (rng == nullptr) local.emplace(make_stream(dropout.seed, {tag(Stream::Dropout)}));
        r = rng ? rng : &*local;
    }
    const double fc = dropout.training ? dropout.fc : 0.0;

    ForwardOutput out;
    std::vector<Var> quality_vectors;
    for (std::size_t k = 0; k < K; ++k) {
        auto a = model.qnet_a(k).forward(constant(stack_samples(set, k)), fc, r);
        const auto p = set.num_samples(k);
        Var scores = overrides.uniform_intra ? constant(Array(Shape{p})) : a.scores;
        auto mask = draw_mask(p, r ? dropout.intra[k] : 0.0, r);
        auto fused = intra_fuse(a.features, scores, mask);
        auto b = model.qnet_b(k).forward(fused.representation, fc, r);
        out.intra_scores.push_back(a.scores);
        out.intra_weights.push_back(fused.weights);
        out.Y.push_back(fused.representation);
        out.Zk.push_back(b.embedding);
        quality_vectors.push_back(b.quality);
    }
    auto inter_mask = draw_mask(K, r ? dropout.inter : 0.0, r);
    auto iq = inter_quality(model.fnet_b(), quality_vectors, inter_mask, fc, r);
    out.inter_scores = iq.raw;
    out.inter_weights = overrides.uniform_inter ? constant(Array(Shape{K}, 1.0 / static_cast<double>(K))) : iq.normalized;
    out.Z = inter_fuse(out.Zk, out.inter_weights);
    return out;
}

} // namespace qaf
