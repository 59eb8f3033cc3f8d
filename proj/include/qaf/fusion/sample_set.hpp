#pragma once

#include <qaf/diffcore/array.hpp>
#include <qaf/error.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace qaf {

/// One raw observation. `gamma` is the generator's corruption level in
/// [0, 1]; it is metadata for analysis and never reaches the model.
struct Sample {
    std::vector<double> values;
    double gamma = 0.0;

    bool operator==(const Sample&) const = default;
};

/// X = {X_k}: a class label plus a variable number of samples per modality.
struct MultimodalSampleSet {
    std::uint32_t label = 0;
    std::vector<std::vector<Sample>> modalities;

    std::size_t num_modalities() const noexcept { return modalities.size(); }
    std::size_t num_samples(std::size_t k) const { return modalities.at(k).size(); }

    bool operator==(const MultimodalSampleSet&) const = default;
};

/// Checks K >= 1, p_k >= 1 and per-modality sample dimensions.
inline void validate(const MultimodalSampleSet& set, const std::vector<std::size_t>& input_dims)
{
    if (set.modalities.empty()) throw Error("sample set: no modalities");
    if (set.modalities.size() != input_dims.size())
        throw ShapeError("sample set: " + std::to_string(set.modalities.size()) + " modalities, model expects " +
                         std::to_string(input_dims.size()));
    for (std::size_t k = 0; k < set.modalities.size(); ++k) {
        if (set.modalities[k].empty()) throw Error("sample set: modality " + std::to_string(k) + " has no samples");
        for (const auto& s : set.modalities[k])
            if (s.values.size() != input_dims[k])
                throw ShapeError("sample set: modality " + std::to_string(k) + " sample has dimension " +
                                 std::to_string(s.values.size()) + ", expected " + std::to_string(input_dims[k]));
    }
}

/// Stacks the samples of modality k into a (p_k x dim) matrix.
inline Array stack_samples(const MultimodalSampleSet& set, std::size_t k)
{
    const auto& samples = set.modalities.at(k);
    const auto dim = samples.at(0).values.size();
    std::vector<double> data;
    data.reserve(samples.size() * dim);
    for (const auto& s : samples) data.insert(data.end(), s.values.begin(), s.values.end());
    return Array::matrix(samples.size(), dim, std::move(data));
}

} // namespace qaf
