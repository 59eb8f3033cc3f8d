#pragma once

#include <qaf/eval/metrics.hpp>
#include <qaf/fusion/model.hpp>
#include <qaf/synthdata/splits.hpp>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>

namespace qaf {

enum class FusionMode { Quality, Avg, Sum, Major };

inline std::string to_string(FusionMode m)
{
    switch (m) {
    case FusionMode::Quality: return "quality";
    case FusionMode::Avg: return "avg";
    case FusionMode::Sum: return "sum";
    case FusionMode::Major: return "major";
    }
    return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s)
{
    for (auto m : {FusionMode::Quality, FusionMode::Avg, FusionMode::Sum, FusionMode::Major})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown fusion mode '" + s + "' (expected quality|avg|sum|major)");
}

enum class GalleryMode { Mean, BestMatch };

inline GalleryMode parse_gallery_mode(const std::string& s)
{
    if (s == "mean") return GalleryMode::Mean;
    if (s == "best-match") return GalleryMode::BestMatch;
    throw ConfigError("unknown gallery mode '" + s + "' (expected mean|best-match)");
}

inline std::string to_string(GalleryMode m) { return m == GalleryMode::Mean ? "mean" : "best-match"; }

/// Eval-mode outputs of one sample set, values only.
struct SetEmbedding {
    std::vector<double> Z;
    std::vector<std::vector<double>> Y;
    std::vector<std::vector<double>> intra_scores; // raw q_ki
    std::vector<std::vector<double>> intra_weights;
    std::vector<double> inter_scores;
    std::vector<double> inter_weights;
    std::uint32_t label = 0;
};

inline SetEmbedding embed_set(const FusionModel& model, const MultimodalSampleSet& set, FusionOverrides overrides = {})
{
    DropoutSpec eval;
    eval.intra.assign(model.modalities(), 0.0);
    auto out = model_forward(model, set, eval, nullptr, overrides);
    SetEmbedding e;
    e.label = set.label;
    e.Z = out.Z->value.storage();
    for (std::size_t k = 0; k < out.Y.size(); ++k) {
        e.Y.push_back(out.Y[k]->value.storage());
        e.intra_scores.push_back(out.intra_scores[k]->value.storage());
        e.intra_weights.push_back(out.intra_weights[k]->value.storage());
    }
    e.inter_scores = out.inter_scores->value.storage();
    e.inter_weights = out.inter_weights->value.storage();
    return e;
}

inline std::vector<SetEmbedding> embed(const FusionModel& model, const Dataset& ds, FusionOverrides overrides = {})
{
    std::vector<SetEmbedding> out;
    out.reserve(ds.sets.size());
    for (const auto& s : ds.sets) out.push_back(embed_set(model, s, overrides));
    return out;
}

inline FusionOverrides overrides_for(FusionMode m)
{
    return m == FusionMode::Avg ? FusionOverrides{true, true} : FusionOverrides{};
}

/// softmax of the raw scores, all bits kept: what the model would weight
/// with, whatever fusion is used for matching.
inline std::vector<double> softmax_values(const std::vector<double>& raw)
{
    double mx = *std::max_element(raw.begin(), raw.end()), s = 0.0;
    std::vector<double> w(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) s += (w[i] = std::exp(raw[i] - mx));
    for (auto& v : w) v /= s;
    return w;
}

inline std::vector<std::vector<double>> modality_pair_scores(const std::vector<SetEmbedding>& emb,
                                                             const std::vector<VerificationPair>& pairs)
{
    const auto K = emb.at(0).Y.size();
    std::vector<std::vector<double>> out(K);
    for (const auto& p : pairs)
        for (std::size_t k = 0; k < K; ++k) out[k].push_back(similarity(emb.at(p.a).Y[k], emb.at(p.b).Y[k]));
    return out;
}

inline ScoreSet label_scores(const std::vector<double>& values, const std::vector<VerificationPair>& pairs)
{
    ScoreSet s;
    for (std::size_t i = 0; i < pairs.size(); ++i) s.push_back({values[i], pairs[i].genuine});
    return s;
}

/// Pair scores under a fusion mode. `emb` must come from embed() with the
/// matching overrides (Avg needs the uniform-weight forward).
inline ScoreSet verification_scores(const std::vector<SetEmbedding>& emb, const std::vector<VerificationPair>& pairs,
                                    FusionMode mode)
{
    if (pairs.empty()) throw Error("verification: no pairs");
    switch (mode) {
    case FusionMode::Quality:
    case FusionMode::Avg: {
        std::vector<double> v;
        for (const auto& p : pairs) v.push_back(similarity(emb.at(p.a).Z, emb.at(p.b).Z));
        return label_scores(v, pairs);
    }
    case FusionMode::Sum: return label_scores(sum_fusion(modality_pair_scores(emb, pairs)), pairs);
    case FusionMode::Major: {
        auto per = modality_pair_scores(emb, pairs);
        std::vector<double> thresholds;
        for (const auto& s : per) thresholds.push_back(roc_metrics(label_scores(s, pairs)).eer_threshold);
        return label_scores(vote_fraction(per, thresholds), pairs);
    }
    }
    throw Error("verification: bad fusion mode");
}

struct IdentificationScores {
    std::vector<std::uint32_t> classes;      // column labels
    std::vector<std::vector<double>> scores; // probes x classes
    std::vector<std::size_t> truth;          // column index of each probe's class
};

namespace detail {

// Probe-to-class similarity for one embedding space.
inline std::vector<std::vector<double>> class_scores(const std::vector<std::vector<double>>& probes,
                                                     const std::vector<std::vector<std::vector<double>>>& gallery,
                                                     GalleryMode mode)
{
    std::vector<std::vector<double>> templates;
    if (mode == GalleryMode::Mean)
        for (const auto& members : gallery) {
            std::vector<double> m(members.front().size(), 0.0);
            for (const auto& g : members)
                for (std::size_t i = 0; i < m.size(); ++i) m[i] += g[i] / static_cast<double>(members.size());
            templates.push_back(std::move(m));
        }
    std::vector<std::vector<double>> out;
    for (const auto& p : probes) {
        std::vector<double> row;
        for (std::size_t c = 0; c < gallery.size(); ++c) {
            if (mode == GalleryMode::Mean) {
                row.push_back(similarity(p, templates[c]));
            } else {
                double best = -2.0;
                for (const auto& g : gallery[c]) best = std::max(best, similarity(p, g));
                row.push_back(best);
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace detail

inline IdentificationScores identification_scores(const std::vector<SetEmbedding>& emb, const IdentificationSplit& split,
                                                  FusionMode mode, GalleryMode gallery_mode = GalleryMode::Mean)
{
    IdentificationScores r;
    std::map<std::uint32_t, std::size_t> column;
    for (auto g : split.gallery) column.emplace(emb.at(g).label, 0);
    for (auto& [label, col] : column) {
        col = r.classes.size();
        r.classes.push_back(label);
    }
    for (auto p : split.probes) {
        auto it = column.find(emb.at(p).label);
        if (it == column.end()) throw Error("identification: probe class " + std::to_string(emb.at(p).label) + " has no gallery");
        r.truth.push_back(it->second);
    }

    auto space = [&](auto get) {
        std::vector<std::vector<std::vector<double>>> gallery(r.classes.size());
        for (auto g : split.gallery) gallery[column.at(emb[g].label)].push_back(get(emb[g]));
        std::vector<std::vector<double>> probes;
        for (auto p : split.probes) probes.push_back(get(emb[p]));
        return detail::class_scores(probes, gallery, gallery_mode);
    };

    if (mode == FusionMode::Quality || mode == FusionMode::Avg) {
        r.scores = space([](const SetEmbedding& e) { return e.Z; });
        return r;
    }
    const auto K = emb.at(0).Y.size();
    std::vector<std::vector<std::vector<double>>> per;
    for (std::size_t k = 0; k < K; ++k) per.push_back(space([k](const SetEmbedding& e) { return e.Y[k]; }));
    r.scores.assign(split.probes.size(), std::vector<double>(r.classes.size(), 0.0));
    for (std::size_t p = 0; p < split.probes.size(); ++p)
        for (std::size_t k = 0; k < K; ++k) {
            if (mode == FusionMode::Sum) {
                for (std::size_t c = 0; c < r.classes.size(); ++c)
                    r.scores[p][c] += per[k][p][c] / static_cast<double>(K);
            } else {
                const auto& row = per[k][p];
                std::size_t top = 0;
                for (std::size_t c = 1; c < row.size(); ++c)
                    if (row[c] > row[top]) top = c;
                r.scores[p][top] += 1.0; // vote counts; rank_of breaks ties to the lower index
            }
        }
    return r;
}

struct EvalSettings {
    std::string protocol = "verification"; // verification | identification
    FusionMode fusion = FusionMode::Quality;
    std::size_t pairs = 2000;
    double positive_fraction = 0.5;
    std::size_t gallery_per_class = 4;
    std::size_t max_rank = 10;
    GalleryMode gallery = GalleryMode::Mean;
    std::uint64_t seed = 0;
};

struct EvalReport {
    std::string protocol;
    std::string fusion;
    std::optional<double> auc;
    std::optional<double> eer;
    std::map<double, double> tar_at;
    std::vector<RocPoint> roc;
    std::vector<double> unimodal_auc;
    std::vector<double> cmc;
    std::vector<double> p_b;
    std::optional<double> spearman_quality;
    std::size_t trials = 0;
};

/// Per-sample (q~, 1 - gamma) pairs with q~ the eval-mode softmax of the raw
/// intra-modality scores.
struct QualityRow {
    std::size_t set = 0;
    std::size_t modality = 0;
    std::size_t sample = 0;
    std::uint32_t label = 0;
    double gamma = 0.0;
    double raw = 0.0;
    double weight = 0.0;
    std::size_t set_size = 0;
};

inline std::vector<QualityRow> quality_rows(const std::vector<SetEmbedding>& emb, const Dataset& ds)
{
    std::vector<QualityRow> rows;
    for (std::size_t s = 0; s < ds.sets.size(); ++s)
        for (std::size_t k = 0; k < ds.sets[s].modalities.size(); ++k) {
            const auto w = softmax_values(emb.at(s).intra_scores[k]);
            const auto& samples = ds.sets[s].modalities[k];
            for (std::size_t i = 0; i < samples.size(); ++i)
                rows.push_back({s, k, i, ds.sets[s].label, samples[i].gamma, emb[s].intra_scores[k][i], w[i], samples.size()});
        }
    return rows;
}

/// Spearman between q~ and 1 - gamma over the rows (optionally one modality);
/// empty when undefined (constant input or fewer than three rows).
inline std::optional<double> quality_correlation(const std::vector<QualityRow>& rows,
                                                 std::optional<std::size_t> modality = std::nullopt)
{
    std::vector<double> q, truth;
    for (const auto& r : rows)
        if (!modality || r.modality == *modality) {
            q.push_back(r.weight);
            truth.push_back(1.0 - r.gamma);
        }
    try {
        return spearman(q, truth);
    } catch (const Error&) {
        return std::nullopt;
    }
}

inline std::vector<double> model_quality_expectation(const std::vector<SetEmbedding>& emb)
{
    std::vector<std::vector<double>> w;
    for (const auto& e : emb) w.push_back(softmax_values(e.inter_scores));
    return quality_expectation(w);
}

inline EvalReport evaluate(const FusionModel& model, const Dataset& ds, const EvalSettings& cfg)
{
    if (ds.sets.empty()) throw Error("evaluate: empty dataset");
    EvalReport rep;
    rep.protocol = cfg.protocol;
    rep.fusion = to_string(cfg.fusion);
    const auto emb = embed(model, ds, overrides_for(cfg.fusion));

    if (cfg.protocol == "verification") {
        const auto pairs = verification_pairs(ds, cfg.pairs, cfg.positive_fraction, cfg.seed);
        const auto roc = roc_metrics(verification_scores(emb, pairs, cfg.fusion));
        rep.auc = roc.auc;
        rep.eer = roc.eer;
        rep.tar_at = roc.tar_at;
        rep.roc = roc.points;
        for (const auto& s : modality_pair_scores(emb, pairs)) rep.unimodal_auc.push_back(roc_metrics(label_scores(s, pairs)).auc);
        rep.trials = pairs.size();
    } else if (cfg.protocol == "identification") {
        const auto split = identification_split(ds, cfg.gallery_per_class, cfg.seed);
        const auto ids = identification_scores(emb, split, cfg.fusion, cfg.gallery);
        rep.cmc = cmc(ids.scores, ids.truth, std::min(cfg.max_rank, ids.classes.size()));
        rep.trials = split.probes.size();
    } else {
        throw ConfigError("unknown protocol '" + cfg.protocol + "' (expected verification|identification)");
    }

    // Quality diagnostics describe the model, so they use its own weights
    // whatever the matcher.
    const auto quality_emb = cfg.fusion == FusionMode::Avg ? embed(model, ds) : emb;
    rep.p_b = model_quality_expectation(quality_emb);
    rep.spearman_quality = quality_correlation(quality_rows(quality_emb, ds));
    return rep;
}

inline std::string far_key(double far)
{
    return "1e" + std::to_string(static_cast<int>(std::lround(std::log10(far))));
}

inline nlohmann::ordered_json to_json(const EvalReport& r)
{
    nlohmann::ordered_json j;
    j["protocol"] = r.protocol;
    j["fusion"] = r.fusion;
    j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
    j["eer"] = r.eer ? nlohmann::ordered_json(*r.eer) : nlohmann::ordered_json(nullptr);
    j["tar_at"] = nlohmann::ordered_json::object();
    for (const auto& [far, tar] : r.tar_at) j["tar_at"][far_key(far)] = tar;
    j["cmc"] = r.cmc;
    j["p_b"] = r.p_b;
    j["spearman_quality"] = r.spearman_quality ? nlohmann::ordered_json(*r.spearman_quality) : nlohmann::ordered_json(nullptr);
    j["unimodal_auc"] = r.unimodal_auc;
    j["trials"] = r.trials;
    return j;
}

inline std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string roc_csv(const EvalReport& r)
{
    std::string s = "threshold,far,tar\n";
    for (const auto& p : r.roc) s += fmt_double(p.threshold) + "," + fmt_double(p.far) + "," + fmt_double(p.tar) + "\n";
    return s;
}

inline std::string cmc_csv(const EvalReport& r)
{
    std::string s = "rank,recall\n";
    for (std::size_t k = 0; k < r.cmc.size(); ++k) s += std::to_string(k + 1) + "," + fmt_double(r.cmc[k]) + "\n";
    return s;
}

} // namespace qaf
