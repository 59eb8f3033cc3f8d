#pragma once

#include <qaf/eval/evaluate.hpp>
#include <qaf/trainer/trainer.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace qaf {

/// Everything a run needs, in one document. Missing keys keep their
/// defaults; unknown keys are errors.
struct Config {
    GeneratorConfig generator;
    ModelShape model;
    HyperParams loss;
    TrainConfig trainer; // includes schedule and dropout
    EvalSettings eval;
};

namespace detail {

using json = nlohmann::json;

/// Reads fields of one JSON object and remembers which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        used_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: '" + path_ + "." + key + "' has the wrong type");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    Section sub(const char* key)
    {
        used_.insert(key);
        static const json empty = json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
    }

    const json& raw(const char* key)
    {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const
    {
        for (const auto& [key, _] : j_.items())
            if (!used_.count(key))
                throw ConfigError("config: unknown key '" + (path_.empty() ? key : path_ + "." + key) + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline void read_margins(Section& s, const char* key, Margins& m)
{
    std::vector<double> v{m.m1, m.m2, m.m3};
    s.get(key, v);
    if (v.size() != 3) throw ConfigError(std::string("config: '") + key + "' must hold three numbers [m1, m2, m3]");
    m = {v[0], v[1], v[2]};
}

} // namespace detail

/// Canonical form: every field, keys sorted.
inline nlohmann::json to_json(const Config& c)
{
    nlohmann::json j;
    const auto& g = c.generator;
    auto& jg = j["generator"];
    jg["seed"] = g.seed;
    jg["sample_seed"] = g.sample_seed;
    jg["classes"] = g.classes;
    jg["first_class"] = g.first_class;
    jg["identity_dim"] = g.identity_dim;
    jg["signal_gain"] = g.signal_gain;
    jg["sigma_max"] = g.sigma_max;
    jg["modalities"] = nlohmann::json::array();
    for (const auto& m : g.modalities) jg["modalities"].push_back({{"obs_dim", m.obs_dim}, {"base_noise", m.base_noise}});
    jg["sets_per_class"] = g.sets_per_class;
    jg["samples_min"] = g.samples_min;
    jg["samples_max"] = g.samples_max;
    jg["gamma_min"] = g.gamma_min;
    jg["gamma_max"] = g.gamma_max;

    const auto& m = c.model;
    j["model"] = {{"encoder_hidden", m.encoder_hidden}, {"embed_dim", m.embed_dim},
                  {"quality_hidden", m.quality_hidden}, {"quality_tap", m.quality_tap},
                  {"quality_dim", m.quality_dim},       {"fnet_hidden", m.fnet_hidden}};

    const auto& h = c.loss;
    auto margins = [](const Margins& x) { return std::vector<double>{x.m1, x.m2, x.m3}; };
    j["loss"] = {{"multimodal_margins", margins(h.multimodal)},
                 {"unimodal_margins", margins(h.unimodal)},
                 {"lambda_u", h.lambda_u},
                 {"lambda_r", h.lambda_r},
                 {"lambda_c", h.lambda_c},
                 {"lambda_ak", h.lambda_ak},
                 {"lambda_uk", h.lambda_uk},
                 {"lambda_h", h.lambda_h},
                 {"lambda_h0", h.lambda_h0},
                 {"projected_dim", h.projected_dim},
                 {"half_space", h.half_space},
                 {"learn_projection", h.learn_projection},
                 {"center_rate", h.center_rate},
                 {"verification", h.verification},
                 {"fixed_scale", h.fixed_scale}};

    const auto& t = c.trainer;
    j["trainer"] = {{"seed", t.seed},
                    {"epochs", t.epochs},
                    {"max_steps", t.max_steps},
                    {"batch_size", t.batch_size},
                    {"checkpoint_every", t.checkpoint_every},
                    {"margin_warmup", t.margin_warmup},
                    {"momentum", t.momentum},
                    {"weight_decay", t.weight_decay}};
    j["schedule"] = {{"lr0", t.schedule.lr0},
                     {"factor", t.schedule.factor},
                     {"s0", t.schedule.s0},
                     {"s1", t.schedule.s1},
                     {"lr_min", t.schedule.lr_min}};
    j["dropout"] = {{"intra", t.dropout.intra}, {"inter", t.dropout.inter}, {"fc", t.dropout.fc}};

    const auto& e = c.eval;
    j["eval"] = {{"protocol", e.protocol},
                 {"fusion", to_string(e.fusion)},
                 {"pairs", e.pairs},
                 {"positive_fraction", e.positive_fraction},
                 {"gallery_per_class", e.gallery_per_class},
                 {"max_rank", e.max_rank},
                 {"gallery", to_string(e.gallery)},
                 {"seed", e.seed}};
    return j;
}

/// Overlays a document onto the defaults. Lists of per-modality values
/// (dropout.intra) follow the generator's modality count when omitted.
inline Config config_from_json(const nlohmann::json& doc)
{
    using detail::Section;
    Config c;
    Section root(doc, "");

    {
        auto s = root.sub("generator");
        auto& g = c.generator;
        s.get("seed", g.seed);
        s.get("sample_seed", g.sample_seed);
        s.get("classes", g.classes);
        s.get("first_class", g.first_class);
        s.get("identity_dim", g.identity_dim);
        s.get("signal_gain", g.signal_gain);
        s.get("sigma_max", g.sigma_max);
        s.get("sets_per_class", g.sets_per_class);
        s.get("samples_min", g.samples_min);
        s.get("samples_max", g.samples_max);
        s.get("gamma_min", g.gamma_min);
        s.get("gamma_max", g.gamma_max);
        if (s.has("modalities")) {
            const auto& list = s.raw("modalities");
            if (!list.is_array()) throw ConfigError("config: 'generator.modalities' must be an array");
            g.modalities.clear();
            for (std::size_t k = 0; k < list.size(); ++k) {
                Section m(list[k], "generator.modalities[" + std::to_string(k) + "]");
                ModalitySpec spec;
                m.get("obs_dim", spec.obs_dim);
                m.get("base_noise", spec.base_noise);
                m.finish();
                g.modalities.push_back(spec);
            }
        }
        s.finish();
    }
    {
        auto s = root.sub("model");
        auto& m = c.model;
        s.get("encoder_hidden", m.encoder_hidden);
        s.get("embed_dim", m.embed_dim);
        s.get("quality_hidden", m.quality_hidden);
        s.get("quality_tap", m.quality_tap);
        s.get("quality_dim", m.quality_dim);
        s.get("fnet_hidden", m.fnet_hidden);
        s.finish();
    }
    {
        auto s = root.sub("loss");
        auto& h = c.loss;
        detail::read_margins(s, "multimodal_margins", h.multimodal);
        detail::read_margins(s, "unimodal_margins", h.unimodal);
        s.get("lambda_u", h.lambda_u);
        s.get("lambda_r", h.lambda_r);
        s.get("lambda_c", h.lambda_c);
        s.get("lambda_ak", h.lambda_ak);
        s.get("lambda_uk", h.lambda_uk);
        s.get("lambda_h", h.lambda_h);
        s.get("lambda_h0", h.lambda_h0);
        s.get("projected_dim", h.projected_dim);
        s.get("half_space", h.half_space);
        s.get("learn_projection", h.learn_projection);
        s.get("center_rate", h.center_rate);
        s.get("verification", h.verification);
        s.get("fixed_scale", h.fixed_scale);
        s.finish();
    }
    {
        auto s = root.sub("trainer");
        auto& t = c.trainer;
        s.get("seed", t.seed);
        s.get("epochs", t.epochs);
        s.get("max_steps", t.max_steps);
        s.get("batch_size", t.batch_size);
        s.get("checkpoint_every", t.checkpoint_every);
        s.get("margin_warmup", t.margin_warmup);
        s.get("momentum", t.momentum);
        s.get("weight_decay", t.weight_decay);
        s.finish();
    }
    {
        auto s = root.sub("schedule");
        auto& sc = c.trainer.schedule;
        s.get("lr0", sc.lr0);
        s.get("factor", sc.factor);
        s.get("s0", sc.s0);
        s.get("s1", sc.s1);
        s.get("lr_min", sc.lr_min);
        s.finish();
    }
    {
        auto s = root.sub("dropout");
        auto& d = c.trainer.dropout;
        d.intra.assign(c.generator.modalities.size(), d.intra.empty() ? 0.1 : d.intra.front());
        s.get("intra", d.intra);
        s.get("inter", d.inter);
        s.get("fc", d.fc);
        s.finish();
    }
    {
        auto s = root.sub("eval");
        auto& e = c.eval;
        std::string fusion = to_string(e.fusion), gallery = to_string(e.gallery);
        s.get("protocol", e.protocol);
        s.get("fusion", fusion);
        s.get("pairs", e.pairs);
        s.get("positive_fraction", e.positive_fraction);
        s.get("gallery_per_class", e.gallery_per_class);
        s.get("max_rank", e.max_rank);
        s.get("gallery", gallery);
        s.get("seed", e.seed);
        s.finish();
        e.fusion = parse_fusion_mode(fusion);
        e.gallery = parse_gallery_mode(gallery);
        if (e.protocol != "verification" && e.protocol != "identification")
            throw ConfigError("config: eval.protocol must be verification or identification");
    }
    root.finish();

    c.model.input_dims = c.generator.input_dims();
    c.generator.validate();
    c.loss.validate();
    c.trainer.validate(c.generator.modalities.size());
    if (c.model.quality_tap == 0 || c.model.quality_tap > c.model.encoder_hidden.size())
        throw ConfigError("config: model.quality_tap must name an encoder hidden layer (1-based)");
    return c;
}

inline Config parse_config(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json(doc);
}

inline Config load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

inline std::string dump_config(const Config& c) { return to_json(c).dump(2) + "\n"; }

} // namespace qaf
