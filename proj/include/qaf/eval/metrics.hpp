#pragma once

#include <qaf/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

namespace qaf {

inline double similarity(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw ShapeError("similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("similarity: zero vector");
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

struct Score {
    double value = 0.0;
    bool genuine = false;
};

using ScoreSet = std::vector<Score>;

struct RocPoint {
    double threshold = 0.0; // accept when score >= threshold
    double far = 0.0;
    double tar = 0.0;
};

inline const std::vector<double> kReportedFars{1e-1, 1e-2, 1e-3, 1e-4};

struct RocResult {
    std::vector<RocPoint> points; // FAR and TAR non-decreasing, from (0,0) to (1,1)
    double auc = 0.0;
    double eer = 0.0;
    double eer_threshold = 0.0;
    std::map<double, double> tar_at;

    /// TAR at an arbitrary FAR by linear interpolation along the ROC.
    double tar_at_far(double far) const
    {
        double best = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            if (p.far <= far) best = std::max(best, p.tar);
            if (i + 1 < points.size()) {
                const auto& q = points[i + 1];
                if (p.far < far && far < q.far)
                    best = std::max(best, p.tar + (q.tar - p.tar) * (far - p.far) / (q.far - p.far));
            }
        }
        return best;
    }
};

/// Threshold sweep over every distinct score; FAR(t) = P(impostor >= t),
/// TAR(t) = P(genuine >= t). EER and TAR@FAR interpolate linearly in ROC
/// space; AUC is the trapezoid area.
inline RocResult roc_metrics(const ScoreSet& scores, const std::vector<double>& fars = kReportedFars)
{
    std::size_t G = 0, I = 0;
    for (const auto& s : scores) {
        if (!std::isfinite(s.value)) throw NonFiniteError("roc_metrics: non-finite score");
        (s.genuine ? G : I)++;
    }
    if (G == 0 || I == 0) throw Error("roc_metrics: both genuine and impostor scores are required");

    std::vector<Score> sorted(scores);
    std::sort(sorted.begin(), sorted.end(), [](const Score& a, const Score& b) { return a.value > b.value; });

    RocResult r;
    r.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t g = 0, i = 0;
    for (std::size_t n = 0; n < sorted.size();) {
        const double t = sorted[n].value;
        for (; n < sorted.size() && sorted[n].value == t; ++n) (sorted[n].genuine ? g : i)++;
        r.points.push_back({t, static_cast<double>(i) / static_cast<double>(I),
                            static_cast<double>(g) / static_cast<double>(G)});
    }

    for (std::size_t n = 1; n < r.points.size(); ++n) {
        const auto& a = r.points[n - 1];
        const auto& b = r.points[n];
        r.auc += (b.far - a.far) * (a.tar + b.tar) / 2.0;
    }

    // FAR - FRR goes from -1 at the first point to +1 at the last.
    for (std::size_t n = 1; n < r.points.size(); ++n) {
        const auto& a = r.points[n - 1];
        const auto& b = r.points[n];
        const double da = a.far - (1.0 - a.tar), db = b.far - (1.0 - b.tar);
        if (da <= 0.0 && db >= 0.0) {
            const double lambda = db == da ? 0.0 : -da / (db - da);
            r.eer = a.far + lambda * (b.far - a.far);
            r.eer_threshold = da == 0.0 ? a.threshold : b.threshold;
            break;
        }
    }
    for (double f : fars) r.tar_at[f] = r.tar_at_far(f);
    return r;
}

/// Rank (1-based) of `truth` among candidate scores; ties go to the lower
/// class index.
inline std::size_t rank_of(std::span<const double> scores, std::size_t truth)
{
    if (truth >= scores.size()) throw Error("cmc: true class " + std::to_string(truth) + " not among candidates");
    std::size_t rank = 1;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (c == truth) continue;
        if (scores[c] > scores[truth] || (scores[c] == scores[truth] && c < truth)) ++rank;
    }
    return rank;
}

/// CMC(k) for k = 1..max_rank, from a probes x classes score matrix.
inline std::vector<double> cmc(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& truth,
                               std::size_t max_rank)
{
    if (scores.empty()) throw Error("cmc: no probes");
    if (scores.size() != truth.size()) throw ShapeError("cmc: probe/label count mismatch");
    std::vector<double> hits(max_rank, 0.0);
    for (std::size_t p = 0; p < scores.size(); ++p) {
        const auto r = rank_of(scores[p], truth[p]);
        for (std::size_t k = r; k <= max_rank; ++k) hits[k - 1] += 1.0;
    }
    for (auto& h : hits) h /= static_cast<double>(scores.size());
    return hits;
}

/// Ranks 1..n with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y)
{
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("correlation undefined: constant input");
    return sxy / std::sqrt(sxx * syy);
}

/// Spearman's rho with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
    if (x.size() < 3) throw Error("spearman: at least three pairs required");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    return pearson(rx, ry);
}

/// P^b: mean of the per-set inter-modality weights.
inline std::vector<double> quality_expectation(const std::vector<std::vector<double>>& inter_weights)
{
    if (inter_weights.empty()) throw Error("quality_expectation: no sample sets");
    std::vector<double> p(inter_weights.front().size(), 0.0);
    for (const auto& w : inter_weights) {
        if (w.size() != p.size()) throw ShapeError("quality_expectation: inconsistent modality count");
        for (std::size_t k = 0; k < p.size(); ++k) p[k] += w[k];
    }
    for (auto& v : p) v /= static_cast<double>(inter_weights.size());
    return p;
}

/// Mean of aligned per-modality scores.
inline std::vector<double> sum_fusion(const std::vector<std::vector<double>>& per_modality)
{
    if (per_modality.empty()) throw Error("sum_fusion: no modalities");
    std::vector<double> out(per_modality.front().size(), 0.0);
    for (const auto& s : per_modality) {
        if (s.size() != out.size()) throw ShapeError("sum_fusion: misaligned trials");
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += s[i];
    }
    for (auto& v : out) v /= static_cast<double>(per_modality.size());
    return out;
}

/// Most frequent decision; ties go to the lowest class index.
inline std::uint32_t majority_vote(const std::vector<std::uint32_t>& decisions)
{
    if (decisions.empty()) throw Error("majority_vote: no decisions");
    std::map<std::uint32_t, std::size_t> counts;
    for (auto d : decisions) ++counts[d];
    std::uint32_t best = counts.begin()->first;
    std::size_t most = 0;
    for (const auto& [c, n] : counts)
        if (n > most) {
            most = n;
            best = c;
        }
    return best;
}

/// Verification majority: per-modality accept decisions (score >=
/// threshold_k) turned into the accept fraction. A pair is accepted when the
/// fraction exceeds 1/2, so a tie rejects.
inline std::vector<double> vote_fraction(const std::vector<std::vector<double>>& per_modality,
                                         const std::vector<double>& thresholds)
{
    if (per_modality.size() != thresholds.size()) throw ShapeError("vote_fraction: threshold count mismatch");
    std::vector<std::vector<double>> votes;
    for (std::size_t k = 0; k < per_modality.size(); ++k) {
        std::vector<double> v;
        for (double s : per_modality[k]) v.push_back(s >= thresholds[k] ? 1.0 : 0.0);
        votes.push_back(std::move(v));
    }
    return sum_fusion(votes);
}

} // namespace qaf
