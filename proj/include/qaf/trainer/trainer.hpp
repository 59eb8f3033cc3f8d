#pragma once

#include <qaf/losses/losses.hpp>
#include <qaf/synthdata/generator.hpp>
#include <qaf/trainer/optimizer.hpp>

#include <functional>
#include <numeric>
#include <string>

namespace qaf {

struct TrainConfig {
    std::size_t epochs = 13;
    std::size_t max_steps = 0; // 0 = no cap beyond epochs
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0; // 0 = only at the end
    std::size_t margin_warmup = 1000; // steps over which margins ramp in from (1, 0, 0)
    double momentum = 0.9;
    double weight_decay = 5e-4;
    Schedule schedule;
    DropoutSpec dropout; // training flag is forced on inside train()

    void validate(std::size_t modalities) const
    {
        if (batch_size == 0) throw ConfigError("trainer: batch_size must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("trainer: momentum must lie in [0,1)");
        if (weight_decay < 0.0) throw ConfigError("trainer: weight_decay must be >= 0");
        schedule.validate();
        dropout.validate(modalities);
    }
};

/// Everything a checkpoint must hold to continue training exactly.
struct TrainerState {
    FusionModel model;
    LossState losses;
    OptimizerState optimizer;

    std::vector<NamedParam> parameters() const
    {
        auto p = model.parameters();
        for (auto& q : losses.parameters()) p.push_back(std::move(q));
        return p;
    }
};

struct LogRow {
    std::size_t step = 0; // 1-based
    std::size_t epoch = 0;
    double lr = 0.0;
    double total = 0.0;
    std::vector<std::pair<std::string, double>> terms;
    std::vector<double> p_b; // batch mean of the inter-modality weights
};

struct TrainLog {
    std::vector<LogRow> rows;

    std::string csv() const
    {
        if (rows.empty()) return "step,epoch,lr,total\n";
        std::string s = "step,epoch,lr,total";
        for (const auto& [name, v] : rows.front().terms) s += "," + name;
        for (std::size_t k = 0; k < rows.front().p_b.size(); ++k) s += ",p_b/" + std::to_string(k);
        s += "\n";
        for (const auto& r : rows) {
            char buf[40];
            auto num = [&](double v) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                return std::string(buf);
            };
            s += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + num(r.lr) + "," + num(r.total);
            for (const auto& [name, v] : r.terms) s += "," + num(v);
            for (double v : r.p_b) s += "," + num(v);
            s += "\n";
        }
        return s;
    }
};

/// Margins at `step`: plain softmax margins (1, 0, 0) for the first half of
/// the warm-up, then a linear ramp to the configured values.
inline HyperParams margins_at(const HyperParams& hp, std::size_t step, std::size_t warmup)
{
    if (warmup == 0 || step >= warmup) return hp;
    const double a = std::max(0.0, 2.0 * static_cast<double>(step) / static_cast<double>(warmup) - 1.0);
    HyperParams out = hp;
    for (auto* m : {&out.multimodal, &out.unimodal}) {
        m->m1 = 1.0 + a * (m->m1 - 1.0);
        m->m2 *= a;
        m->m3 *= a;
    }
    return out;
}

inline std::size_t steps_per_epoch(std::size_t sets, std::size_t batch_size)
{
    return (sets + batch_size - 1) / batch_size;
}

inline std::size_t total_steps(const TrainConfig& cfg, std::size_t sets)
{
    const auto n = cfg.epochs * steps_per_epoch(sets, cfg.batch_size);
    return cfg.max_steps > 0 ? std::min(n, cfg.max_steps) : n;
}

/// Set indices of batch `b` in epoch `epoch`. The order is a function of
/// (seed, epoch) only, so a resumed run sees the same batches.
inline std::vector<std::size_t> batch_indices(std::size_t sets, const TrainConfig& cfg, std::size_t epoch, std::size_t b)
{
    std::vector<std::size_t> order(sets);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_stream(cfg.seed, {tag(Stream::Batches), epoch});
    std::shuffle(order.begin(), order.end(), rng);
    const auto lo = b * cfg.batch_size, hi = std::min(sets, lo + cfg.batch_size);
    return {order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi)};
}

/// One optimizer step on the given sets: forward with training dropout,
/// total loss, backward, SGD, center EMA.
inline LogRow train_step(TrainerState& st, const std::vector<const MultimodalSampleSet*>& batch, const TrainConfig& cfg,
                         const HyperParams& hp)
{
    const auto step = st.optimizer.step;
    DropoutSpec dropout = cfg.dropout;
    dropout.training = true;
    Rng rng = make_stream(cfg.seed, {tag(Stream::Dropout), step});

    std::vector<ForwardOutput> outs;
    std::vector<std::uint32_t> labels;
    for (const auto* s : batch) {
        outs.push_back(model_forward(st.model, *s, dropout, &rng));
        labels.push_back(s->label);
    }
    auto loss = total_loss(outs, labels, st.model, st.losses, margins_at(hp, step, cfg.margin_warmup));
    if (!std::isfinite(loss.total->value.item()))
        throw NonFiniteError("training diverged at step " + std::to_string(step + 1));

    const auto params = st.parameters();
    zero_grads(params);
    backward(loss.total);
    const double lr = lr_at(cfg.schedule, step);
    sgd_step(params, st.optimizer, lr);
    update_centers(st.losses.centers, outs, labels);

    LogRow row;
    row.step = step + 1;
    row.lr = lr;
    row.total = loss.total->value.item();
    row.terms = loss.terms;
    row.p_b.assign(st.model.modalities(), 0.0);
    for (const auto& o : outs)
        for (std::size_t k = 0; k < row.p_b.size(); ++k)
            row.p_b[k] += o.inter_weights->value[k] / static_cast<double>(outs.size());
    return row;
}

/// Trains from st.optimizer.step up to total_steps(cfg, |data|). `checkpoint`
/// is called every cfg.checkpoint_every steps and after the last step.
inline TrainLog train(TrainerState& st, const Dataset& data, const TrainConfig& cfg, const HyperParams& hp,
                      const std::function<void(const TrainerState&)>& checkpoint = {},
                      const std::function<void(const LogRow&)>& on_step = {})
{
    cfg.validate(st.model.modalities());
    hp.validate();
    TrainLog log;
    if (data.sets.empty()) throw Error("train: empty dataset");
    for (const auto& s : data.sets) validate(s, st.model.shape().input_dims);
    st.optimizer.momentum = cfg.momentum;
    st.optimizer.weight_decay = cfg.weight_decay;

    const auto spe = steps_per_epoch(data.sets.size(), cfg.batch_size);
    const auto end = total_steps(cfg, data.sets.size());
    while (st.optimizer.step < end) {
        const auto step = st.optimizer.step;
        const auto epoch = step / spe;
        std::vector<const MultimodalSampleSet*> batch;
        for (auto i : batch_indices(data.sets.size(), cfg, epoch, step % spe)) batch.push_back(&data.sets[i]);
        auto row = train_step(st, batch, cfg, hp);
        row.epoch = epoch;
        if (on_step) on_step(row);
        log.rows.push_back(std::move(row));
        const bool last = st.optimizer.step == end;
        if (checkpoint && (last || (cfg.checkpoint_every > 0 && st.optimizer.step % cfg.checkpoint_every == 0)))
            checkpoint(st);
    }
    return log;
}

} // namespace qaf
