#pragma once

#include <qaf/synthdata/generator.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace qaf {

namespace detail {

inline std::map<std::uint32_t, std::vector<std::size_t>> sets_by_class(const Dataset& ds)
{
    std::map<std::uint32_t, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < ds.sets.size(); ++i) out[ds.sets[i].label].push_back(i);
    return out;
}

} // namespace detail

/// Virtual subjects: subject s takes class assign[k][s] from pool k. Each of
/// its sample sets combines the i-th set of every assigned class, so a
/// subject has as many sets as its smallest assigned class.
struct ChimericDataset {
    Dataset data;
    std::vector<std::vector<std::uint32_t>> assignment; // [k][subject]
};

inline ChimericDataset chimeric_pair(const std::vector<Dataset>& pools, std::size_t n_subjects, std::uint64_t seed)
{
    if (pools.empty()) throw Error("chimeric_pair: no pools");
    ChimericDataset out;
    std::vector<std::map<std::uint32_t, std::vector<std::size_t>>> index;
    for (std::size_t k = 0; k < pools.size(); ++k) {
        if (pools[k].modalities() != 1)
            throw Error("chimeric_pair: pool " + std::to_string(k) + " must be unimodal");
        index.push_back(detail::sets_by_class(pools[k]));
        if (index.back().size() < n_subjects)
            throw Error("chimeric_pair: pool " + std::to_string(k) + " has " + std::to_string(index.back().size()) +
                        " classes, need " + std::to_string(n_subjects));
        std::vector<std::uint32_t> classes;
        for (const auto& [c, _] : index.back()) classes.push_back(c);
        if (pools.size() > 1) {
            Rng rng = make_stream(seed, {tag(Stream::Chimeric), k});
            std::shuffle(classes.begin(), classes.end(), rng);
        }
        classes.resize(n_subjects);
        out.assignment.push_back(std::move(classes));
    }
    for (std::size_t s = 0; s < n_subjects; ++s) {
        std::size_t count = SIZE_MAX;
        for (std::size_t k = 0; k < pools.size(); ++k)
            count = std::min(count, index[k].at(out.assignment[k][s]).size());
        for (std::size_t i = 0; i < count; ++i) {
            MultimodalSampleSet set;
            set.label = static_cast<std::uint32_t>(s);
            for (std::size_t k = 0; k < pools.size(); ++k)
                set.modalities.push_back(pools[k].sets[index[k].at(out.assignment[k][s])[i]].modalities[0]);
            out.data.sets.push_back(std::move(set));
        }
    }
    return out;
}

/// Keeps only modality k of every set.
inline Dataset select_modality(const Dataset& ds, std::size_t k)
{
    Dataset out;
    out.provenance = ds.provenance;
    for (const auto& s : ds.sets) out.sets.push_back({s.label, {s.modalities.at(k)}});
    return out;
}

struct IdentificationSplit {
    std::vector<std::size_t> gallery; // set indices
    std::vector<std::size_t> probes;
};

/// g random gallery sets per class; the rest are probes.
inline IdentificationSplit identification_split(const Dataset& ds, std::size_t gallery_per_class, std::uint64_t seed)
{
    if (gallery_per_class == 0) throw Error("identification_split: gallery_per_class must be positive");
    IdentificationSplit out;
    for (auto& [cls, idx] : detail::sets_by_class(ds)) {
        if (idx.size() <= gallery_per_class)
            throw Error("identification_split: class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                        " sets, need more than " + std::to_string(gallery_per_class));
        Rng rng = make_stream(seed, {tag(Stream::Split), cls});
        std::shuffle(idx.begin(), idx.end(), rng);
        out.gallery.insert(out.gallery.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(gallery_per_class));
        out.probes.insert(out.probes.end(), idx.begin() + static_cast<std::ptrdiff_t>(gallery_per_class), idx.end());
    }
    std::sort(out.gallery.begin(), out.gallery.end());
    std::sort(out.probes.begin(), out.probes.end());
    return out;
}

struct VerificationPair {
    std::size_t a = 0;
    std::size_t b = 0;
    bool genuine = false;

    bool operator==(const VerificationPair&) const = default;
};

/// round(n * positive_fraction) genuine pairs of distinct same-class sets,
/// the rest impostor pairs of different classes.
inline std::vector<VerificationPair> verification_pairs(const Dataset& ds, std::size_t n, double positive_fraction,
                                                        std::uint64_t seed)
{
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
        throw Error("verification_pairs: positive_fraction outside [0,1]");
    const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_fraction));
    const auto by_class = detail::sets_by_class(ds);
    std::vector<const std::vector<std::size_t>*> multi;
    for (const auto& [c, idx] : by_class)
        if (idx.size() >= 2) multi.push_back(&idx);
    if (n_pos > 0 && multi.empty()) throw Error("verification_pairs: no class has two sets for genuine pairs");
    if (n_pos < n && by_class.size() < 2) throw Error("verification_pairs: impostor pairs need two classes");

    Rng rng = make_stream(seed, {tag(Stream::Split), 0xFFFFFFFFu});
    auto pick = [&](std::size_t bound) { return static_cast<std::size_t>(rng() % bound); };
    std::vector<VerificationPair> out;
    for (std::size_t i = 0; i < n_pos; ++i) {
        const auto& idx = *multi[pick(multi.size())];
        const auto x = pick(idx.size());
        auto y = pick(idx.size() - 1);
        if (y >= x) ++y;
        out.push_back({idx[x], idx[y], true});
    }
    while (out.size() < n) {
        const auto a = pick(ds.sets.size()), b = pick(ds.sets.size());
        if (ds.sets[a].label == ds.sets[b].label) continue;
        out.push_back({a, b, false});
    }
    return out;
}

/// Subset of the sets at the given indices, order preserved.
inline Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices)
{
    Dataset out;
    out.provenance = ds.provenance;
    for (auto i : indices) out.sets.push_back(ds.sets.at(i));
    return out;
}

} // namespace qaf
