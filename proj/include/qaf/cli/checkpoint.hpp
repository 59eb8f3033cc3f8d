#pragma once

// QFCK checkpoint: "QFCK", u32 version, u32 length + JSON header (model
// shape, class count, projection settings), u32 tensor count, tensors
// (u16 name length, name, u8 rank, u32 dims, f64 payload), u32 CRC32 of
// everything before it. All integers little-endian.

#include <qaf/io/binary.hpp>
#include <qaf/trainer/trainer.hpp>

#include <json.hpp>
#include <zlib.h>

#include <limits>
#include <set>
#include <map>

namespace qaf {

inline constexpr std::uint32_t kQfckVersion = 1;

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size)
{
    uLong crc = crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, std::numeric_limits<uInt>::max()));
        crc = crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline nlohmann::json shape_to_json(const ModelShape& s)
{
    return {{"input_dims", s.input_dims},         {"encoder_hidden", s.encoder_hidden},
            {"embed_dim", s.embed_dim},           {"quality_hidden", s.quality_hidden},
            {"quality_tap", s.quality_tap},       {"quality_dim", s.quality_dim},
            {"fnet_hidden", s.fnet_hidden}};
}

inline ModelShape shape_from_json(const nlohmann::json& j)
{
    ModelShape s;
    j.at("input_dims").get_to(s.input_dims);
    j.at("encoder_hidden").get_to(s.encoder_hidden);
    j.at("embed_dim").get_to(s.embed_dim);
    j.at("quality_hidden").get_to(s.quality_hidden);
    j.at("quality_tap").get_to(s.quality_tap);
    j.at("quality_dim").get_to(s.quality_dim);
    j.at("fnet_hidden").get_to(s.fnet_hidden);
    return s;
}

namespace detail {

inline void write_tensor(ByteWriter& w, const std::string& name, const Array& a)
{
    if (name.size() > 65535) throw FormatError("QFCK: tensor name too long");
    if (a.rank() > 255) throw FormatError("QFCK: tensor rank too large");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(a.rank()));
    for (auto d : a.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < a.size(); ++i) w.f64(a[i]);
}

} // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const TrainerState& st)
{
    const nlohmann::json header{{"model", shape_to_json(st.model.shape())},
                                {"classes", st.losses.classes()},
                                {"projected_dim", st.losses.projections.target_dim},
                                {"learn_projection", st.losses.projections.learnable}};
    const auto text = header.dump();

    ByteWriter w;
    w.raw("QFCK");
    w.u32(kQfckVersion);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.raw(text);

    const auto params = st.parameters();
    w.u32(static_cast<std::uint32_t>(params.size() + st.optimizer.velocity.size() + 1));
    for (const auto& p : params) detail::write_tensor(w, p.name, p.var->value);
    for (const auto& [name, v] : st.optimizer.velocity) detail::write_tensor(w, "velocity/" + name, v);
    detail::write_tensor(w, "optimizer/step", Array(Shape{1}, static_cast<double>(st.optimizer.step)));
    w.u32(crc32_of(w.bytes().data(), w.bytes().size()));
    return w.bytes();
}

/// Rebuilds the full trainer state. `hp` supplies the settings a checkpoint
/// does not fix (center EMA rate); the projection settings come from the file.
inline TrainerState decode_checkpoint(const std::vector<std::uint8_t>& bytes, HyperParams hp = {})
{
    if (bytes.size() < 16) throw FormatError("QFCK: file too short");
    ByteReader head(bytes.data(), bytes.size(), "QFCK");
    if (head.raw(4) != "QFCK") throw FormatError("QFCK: bad magic");
    if (const auto v = head.u32(); v != kQfckVersion) throw FormatError("QFCK: unsupported version " + std::to_string(v));
    const auto body = bytes.size() - 4;
    ByteReader tail(bytes.data() + body, 4, "QFCK");
    if (tail.u32() != crc32_of(bytes.data(), body)) throw FormatError("QFCK: CRC mismatch, checkpoint is corrupt");

    ByteReader r(bytes.data() + 8, body - 8, "QFCK");
    nlohmann::json header;
    ModelShape shape;
    std::size_t classes = 0;
    try {
        header = nlohmann::json::parse(r.raw(r.u32()));
        shape = shape_from_json(header.at("model"));
        classes = header.at("classes").get<std::size_t>();
        hp.projected_dim = header.at("projected_dim").get<std::size_t>();
        hp.learn_projection = header.at("learn_projection").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("QFCK: bad header: ") + e.what());
    }

    TrainerState st{FusionModel(shape, 0), {}, {}};
    st.losses = LossState(st.model, classes, hp, 0);
    std::map<std::string, Var> by_name;
    for (const auto& p : st.parameters()) by_name.emplace(p.name, p.var);

    std::set<std::string> seen;
    bool have_step = false;
    for (std::uint32_t n = r.u32(); n > 0; --n) {
        const auto name = r.raw(r.u16());
        Shape dims(r.u8());
        for (auto& d : dims) d = r.u32();
        std::vector<double> data(shape_size(dims));
        if (r.remaining() < data.size() * 8) throw FormatError("QFCK: truncated tensor '" + name + "'");
        for (auto& x : data) x = r.f64();
        Array a(std::move(dims), std::move(data));
        if (!seen.insert(name).second) throw FormatError("QFCK: duplicate tensor '" + name + "'");

        if (name == "optimizer/step") {
            st.optimizer.step = static_cast<std::size_t>(a[0]);
            have_step = true;
        } else if (name.rfind("velocity/", 0) == 0) {
            st.optimizer.velocity.emplace(name.substr(9), std::move(a));
        } else {
            auto it = by_name.find(name);
            if (it == by_name.end()) throw FormatError("QFCK: unexpected tensor '" + name + "'");
            if (it->second->value.shape() != a.shape())
                throw FormatError("QFCK: tensor '" + name + "' has shape " + shape_str(a.shape()) + ", expected " +
                                  shape_str(it->second->value.shape()));
            it->second->value = std::move(a);
        }
    }
    if (r.remaining() != 0) throw FormatError("QFCK: trailing bytes after tensors");
    for (const auto& [name, _] : by_name)
        if (!seen.count(name)) throw FormatError("QFCK: missing tensor '" + name + "'");
    if (!have_step) throw FormatError("QFCK: missing optimizer step");
    return st;
}

inline void write_checkpoint(const std::string& path, const TrainerState& st) { write_file(path, encode_checkpoint(st)); }

inline TrainerState read_checkpoint(const std::string& path, const HyperParams& hp = {})
{
    return decode_checkpoint(read_file(path), hp);
}

} // namespace qaf
