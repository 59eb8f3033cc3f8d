#pragma once

#include <qaf/diffcore/array.hpp>
#include <qaf/error.hpp>
#include <qaf/fusion/sample_set.hpp>
#include <qaf/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace qaf {

struct ModalitySpec {
    std::size_t obs_dim = 64;
    double base_noise = 0.1; // b_k

    bool operator==(const ModalitySpec&) const = default;
};

struct GeneratorConfig {
    std::uint64_t seed = 1;        // identities and generator maps
    std::uint64_t sample_seed = 0; // noise draws; vary for fresh sets of the same identities
    std::size_t classes = 100;
    std::size_t first_class = 0;   // identities [first_class, first_class + classes)
    std::size_t identity_dim = 16;
    double signal_gain = 1.0;
    double sigma_max = 3.0;
    std::vector<ModalitySpec> modalities{{64, 0.1}, {64, 0.3}, {64, 0.5}};
    std::size_t sets_per_class = 25;
    std::size_t samples_min = 1;
    std::size_t samples_max = 4;
    double gamma_min = 0.0;
    double gamma_max = 1.0;

    void validate() const
    {
        if (classes == 0) throw ConfigError("generator: classes must be positive");
        if (identity_dim == 0) throw ConfigError("generator: identity_dim must be positive");
        if (modalities.empty()) throw ConfigError("generator: at least one modality required");
        if (modalities.size() > 255) throw ConfigError("generator: at most 255 modalities");
        for (const auto& m : modalities) {
            if (m.obs_dim == 0) throw ConfigError("generator: obs_dim must be positive");
            if (m.base_noise < 0.0) throw ConfigError("generator: base_noise must be >= 0");
        }
        if (sets_per_class == 0 || sets_per_class > 25)
            throw ConfigError("generator: sets_per_class must lie in [1, 25]");
        if (samples_min < 1 || samples_max < samples_min || samples_max > 65535)
            throw ConfigError("generator: need 1 <= samples_min <= samples_max <= 65535");
        if (!(gamma_min >= 0.0 && gamma_max <= 1.0 && gamma_min <= gamma_max))
            throw ConfigError("generator: need 0 <= gamma_min <= gamma_max <= 1");
        if (sigma_max < 0.0 || signal_gain <= 0.0) throw ConfigError("generator: invalid noise or gain");
    }

    std::vector<std::size_t> input_dims() const
    {
        std::vector<std::size_t> d;
        for (const auto& m : modalities) d.push_back(m.obs_dim);
        return d;
    }
};

struct Dataset {
    std::vector<MultimodalSampleSet> sets;
    std::string provenance; // canonical config text

    std::size_t modalities() const { return sets.empty() ? 0 : sets.front().num_modalities(); }

    bool operator==(const Dataset&) const = default;
};

/// Columns of a dim x rank Gaussian matrix, orthonormalized (modified
/// Gram-Schmidt). For dim < rank the rows are orthonormalized instead.
inline Array orthonormal_map(std::size_t dim, std::size_t rank, Rng& rng)
{
    Array a(Shape{dim, rank});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = normal01(rng);
    const bool by_columns = dim >= rank;
    const std::size_t n = by_columns ? rank : dim, len = by_columns ? dim : rank;
    auto at = [&](std::size_t v, std::size_t i) -> double& { return by_columns ? a[i * rank + v] : a[v * rank + i]; };
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t u = 0; u < v; ++u) {
            double d = 0.0;
            for (std::size_t i = 0; i < len; ++i) d += at(u, i) * at(v, i);
            for (std::size_t i = 0; i < len; ++i) at(v, i) -= d * at(u, i);
        }
        double nn = 0.0;
        for (std::size_t i = 0; i < len; ++i) nn += at(v, i) * at(v, i);
        nn = std::sqrt(nn);
        for (std::size_t i = 0; i < len; ++i) at(v, i) /= nn;
    }
    return a;
}

/// The fixed part of the generator: identities and maps. Everything is a
/// pure function of the config seed, so two configs differing only in the
/// noise settings share identities.
class IdentityModel {
public:
    explicit IdentityModel(const GeneratorConfig& cfg) : cfg_(cfg)
    {
        cfg_.validate();
        for (std::size_t k = 0; k < cfg_.modalities.size(); ++k) {
            Rng rng = make_stream(cfg_.seed, {tag(Stream::GeneratorMaps), k});
            maps_.push_back(orthonormal_map(cfg_.modalities[k].obs_dim, cfg_.identity_dim, rng));
        }
    }

    std::vector<double> identity(std::size_t cls) const
    {
        Rng rng = make_stream(cfg_.seed, {tag(Stream::Identity), cls});
        std::vector<double> z(cfg_.identity_dim);
        for (auto& v : z) v = normal01(rng);
        return z;
    }

    /// tanh(gain * Q_k z), with Q_k z rescaled to unit variance per entry.
    std::vector<double> clean(std::size_t k, const std::vector<double>& z) const
    {
        const Array& q = maps_.at(k);
        const double rows = static_cast<double>(q.rows()), cols = static_cast<double>(q.cols());
        const double scale = cfg_.signal_gain * (rows >= cols ? std::sqrt(rows / cols) : 1.0);
        std::vector<double> x(q.rows());
        for (std::size_t i = 0; i < q.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < q.cols(); ++j) s += q.at(i, j) * z[j];
            x[i] = std::tanh(scale * s);
        }
        return x;
    }

    const Array& map(std::size_t k) const { return maps_.at(k); }
    const GeneratorConfig& config() const { return cfg_; }

private:
    GeneratorConfig cfg_;
    std::vector<Array> maps_;
};

/// Class `cls`'s sample sets. Draws come from a stream keyed by
/// (seed, sample_seed, class), so classes can be generated in any order.
inline std::vector<MultimodalSampleSet> generate_class(const IdentityModel& im, std::size_t cls)
{
    const auto& cfg = im.config();
    const auto z = im.identity(cls);
    std::vector<std::vector<double>> clean;
    for (std::size_t k = 0; k < cfg.modalities.size(); ++k) clean.push_back(im.clean(k, z));

    Rng rng = make_stream(cfg.seed, {tag(Stream::Samples), cfg.sample_seed, cls});
    std::vector<MultimodalSampleSet> out;
    for (std::size_t s = 0; s < cfg.sets_per_class; ++s) {
        MultimodalSampleSet set;
        set.label = static_cast<std::uint32_t>(cls);
        for (std::size_t k = 0; k < cfg.modalities.size(); ++k) {
            const auto span = cfg.samples_max - cfg.samples_min + 1;
            const auto p = cfg.samples_min + static_cast<std::size_t>(rng() % span);
            std::vector<Sample> samples;
            for (std::size_t i = 0; i < p; ++i) {
                Sample smp;
                smp.gamma = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * uniform01(rng);
                const double sigma = cfg.modalities[k].base_noise + smp.gamma * cfg.sigma_max;
                smp.values = clean[k];
                for (auto& v : smp.values) v += sigma * normal01(rng);
                samples.push_back(std::move(smp));
            }
            set.modalities.push_back(std::move(samples));
        }
        out.push_back(std::move(set));
    }
    return out;
}

inline Dataset generate(const GeneratorConfig& cfg, std::string provenance = {})
{
    IdentityModel im(cfg);
    Dataset ds;
    ds.provenance = std::move(provenance);
    for (std::size_t c = cfg.first_class; c < cfg.first_class + cfg.classes; ++c)
        for (auto& s : generate_class(im, c)) ds.sets.push_back(std::move(s));
    return ds;
}

} // namespace qaf
