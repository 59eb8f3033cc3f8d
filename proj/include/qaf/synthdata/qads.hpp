#pragma once

// QADS dataset files: "QADS", version u32, u32 length + config text, then
// sample sets until end of file. All scalars little-endian.

#include <qaf/io/binary.hpp>
#include <qaf/synthdata/generator.hpp>

namespace qaf {

inline constexpr std::uint32_t kQadsVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds)
{
    ByteWriter w;
    w.raw("QADS");
    w.u32(kQadsVersion);
    w.u32(static_cast<std::uint32_t>(ds.provenance.size()));
    w.raw(ds.provenance);
    for (const auto& set : ds.sets) {
        if (set.modalities.size() > 255) throw FormatError("QADS: more than 255 modalities");
        w.u32(set.label);
        w.u8(static_cast<std::uint8_t>(set.modalities.size()));
        for (const auto& samples : set.modalities) {
            if (samples.size() > 65535) throw FormatError("QADS: more than 65535 samples in a modality");
            w.u16(static_cast<std::uint16_t>(samples.size()));
            for (const auto& s : samples) {
                w.f64(s.gamma);
                w.u32(static_cast<std::uint32_t>(s.values.size()));
                for (double v : s.values) w.f64(v);
            }
        }
    }
    return w.bytes();
}

inline Dataset decode_dataset(const std::vector<std::uint8_t>& bytes)
{
    ByteReader r(bytes.data(), bytes.size(), "QADS");
    if (r.raw(4) != "QADS") throw FormatError("QADS: bad magic");
    if (const auto v = r.u32(); v != kQadsVersion)
        throw FormatError("QADS: unsupported version " + std::to_string(v));
    Dataset ds;
    ds.provenance = r.raw(r.u32());
    while (r.remaining() > 0) {
        MultimodalSampleSet set;
        set.label = r.u32();
        const auto K = r.u8();
        if (K == 0) throw FormatError("QADS: sample set with zero modalities");
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<Sample> samples(r.u16());
            for (auto& s : samples) {
                s.gamma = r.f64();
                s.values.resize(r.u32());
                for (auto& v : s.values) v = r.f64();
            }
            set.modalities.push_back(std::move(samples));
        }
        ds.sets.push_back(std::move(set));
    }
    return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) { write_file(path, encode_dataset(ds)); }

inline Dataset read_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

} // namespace qaf
