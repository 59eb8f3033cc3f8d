#include <qaf/cli/checkpoint.hpp>
#include <qaf/cli/config.hpp>
#include <qaf/synthdata/qads.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace qaf;

namespace {

struct Options {
    std::string config, out, data, model, resume, report, protocol, fusion;
    std::optional<std::uint64_t> seed, sample_seed;
};

Config resolve(const Options& o) { return o.config.empty() ? config_from_json(nlohmann::json::object()) : load_config(o.config); }

void write_text(const fs::path& path, const std::string& text)
{
    write_file(path.string(), std::vector<std::uint8_t>(text.begin(), text.end()));
}

fs::path ensure_dir(const fs::path& dir)
{
    const auto d = dir.empty() ? fs::path(".") : dir;
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw Error("cannot create directory '" + d.string() + "': " + ec.message());
    return d;
}

void emit_config(const fs::path& dir, const Config& c) { write_text(dir / "resolved_config.json", dump_config(c)); }

std::size_t class_count(const Dataset& ds)
{
    std::uint32_t top = 0;
    for (const auto& s : ds.sets) top = std::max(top, s.label);
    return static_cast<std::size_t>(top) + 1;
}

std::vector<std::size_t> data_dims(const Dataset& ds)
{
    if (ds.sets.empty()) throw Error("dataset is empty");
    std::vector<std::size_t> dims;
    for (const auto& m : ds.sets.front().modalities) dims.push_back(m.at(0).values.size());
    return dims;
}

void cmd_gen(const Options& o)
{
    auto c = resolve(o);
    if (o.seed) c.generator.seed = *o.seed;
    if (o.sample_seed) c.generator.sample_seed = *o.sample_seed;
    const fs::path out(o.out);
    const auto dir = ensure_dir(out.parent_path());
    const auto ds = generate(c.generator, dump_config(c));
    write_dataset(out.string(), ds);
    emit_config(dir, c);
    std::printf("wrote %zu sample sets to %s\n", ds.sets.size(), out.string().c_str());
}

void cmd_train(const Options& o)
{
    auto c = resolve(o);
    if (o.seed) c.trainer.seed = *o.seed;
    const auto data = read_dataset(o.data);
    c.model.input_dims = data_dims(data);
    if (c.trainer.dropout.intra.size() != c.model.input_dims.size())
        throw ConfigError("dropout.intra has " + std::to_string(c.trainer.dropout.intra.size()) +
                          " entries but the data has " + std::to_string(c.model.input_dims.size()) + " modalities");
    const auto dir = ensure_dir(o.out);
    emit_config(dir, c);

    const auto classes = class_count(data);
    TrainerState st;
    if (!o.resume.empty()) {
        st = read_checkpoint(o.resume, c.loss);
        if (!(st.model.shape() == c.model)) throw ConfigError("--resume: checkpoint model shape differs from the config");
        if (st.losses.classes() != classes) throw ConfigError("--resume: checkpoint class count differs from the data");
    } else {
        st.model = FusionModel(c.model, c.trainer.seed);
        st.losses = LossState(st.model, classes, c.loss, c.trainer.seed);
    }

    TrainLog log;
    auto save_log = [&] { write_text(dir / "train_log.csv", log.csv()); };
    auto checkpoint = [&](const TrainerState& s) {
        const bool last = s.optimizer.step == total_steps(c.trainer, data.sets.size());
        write_checkpoint((dir / (last ? std::string("model.qfck") : "checkpoint-" + std::to_string(s.optimizer.step) + ".qfck")).string(), s);
    };
    try {
        train(st, data, c.trainer, c.loss, checkpoint, [&](const LogRow& r) { log.rows.push_back(r); });
    } catch (...) {
        save_log();
        throw;
    }
    if (log.rows.empty()) write_checkpoint((dir / "model.qfck").string(), st);
    save_log();
    std::printf("trained to step %zu; model at %s\n", st.optimizer.step, (dir / "model.qfck").string().c_str());
}

EvalSettings eval_settings(const Options& o, Config& c)
{
    if (!o.protocol.empty()) c.eval.protocol = o.protocol;
    if (c.eval.protocol != "verification" && c.eval.protocol != "identification")
        throw ConfigError("unknown protocol '" + c.eval.protocol + "' (expected verification|identification)");
    if (!o.fusion.empty()) c.eval.fusion = parse_fusion_mode(o.fusion);
    if (o.seed) c.eval.seed = *o.seed;
    return c.eval;
}

void cmd_eval(const Options& o)
{
    auto c = resolve(o);
    const auto settings = eval_settings(o, c);
    const auto st = read_checkpoint(o.model, c.loss);
    const auto data = read_dataset(o.data);
    const auto rep = evaluate(st.model, data, settings);

    const fs::path report(o.report);
    const auto dir = ensure_dir(report.parent_path());
    write_text(report, to_json(rep).dump(2) + "\n");
    const auto stem = (dir / report.stem()).string();
    if (rep.protocol == "verification")
        write_text(stem + "_roc.csv", roc_csv(rep));
    else
        write_text(stem + "_cmc.csv", cmc_csv(rep));
    emit_config(dir, c);
    if (rep.auc)
        std::printf("%s/%s: AUC %.6f, EER %.6f\n", rep.protocol.c_str(), rep.fusion.c_str(), *rep.auc, *rep.eer);
    else
        std::printf("%s/%s: rank-1 %.6f\n", rep.protocol.c_str(), rep.fusion.c_str(), rep.cmc.empty() ? 0.0 : rep.cmc[0]);
}

void cmd_quality_report(const Options& o)
{
    auto c = resolve(o);
    const auto st = read_checkpoint(o.model, c.loss);
    const auto data = read_dataset(o.data);
    const auto dir = ensure_dir(o.out);
    const auto emb = embed(st.model, data);
    const auto rows = quality_rows(emb, data);

    std::string table = "set,modality,sample,label,set_size,gamma,quality,raw_score,weight\n";
    for (const auto& r : rows)
        table += std::to_string(r.set) + "," + std::to_string(r.modality) + "," + std::to_string(r.sample) + "," +
                 std::to_string(r.label) + "," + std::to_string(r.set_size) + "," + fmt_double(r.gamma) + "," +
                 fmt_double(1.0 - r.gamma) + "," + fmt_double(r.raw) + "," + fmt_double(r.weight) + "\n";
    write_text(dir / "quality_table.csv", table);

    // Weight distributions per ground-truth quality quartile.
    constexpr std::size_t bins = 20, buckets = 4;
    std::vector<std::vector<std::size_t>> counts(buckets, std::vector<std::size_t>(bins, 0));
    for (const auto& r : rows) {
        const auto b = std::min(buckets - 1, static_cast<std::size_t>((1.0 - r.gamma) * buckets));
        counts[b][std::min(bins - 1, static_cast<std::size_t>(r.weight * bins))]++;
    }
    std::string hist = "weight_lo,weight_hi";
    for (std::size_t b = 0; b < buckets; ++b)
        hist += ",quality_" + fmt_double(static_cast<double>(b) / buckets) + "_" + fmt_double(static_cast<double>(b + 1) / buckets);
    hist += "\n";
    for (std::size_t i = 0; i < bins; ++i) {
        hist += fmt_double(static_cast<double>(i) / bins) + "," + fmt_double(static_cast<double>(i + 1) / bins);
        for (std::size_t b = 0; b < buckets; ++b) hist += "," + std::to_string(counts[b][i]);
        hist += "\n";
    }
    write_text(dir / "quality_histogram.csv", hist);

    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json summary;
    const auto rho = quality_correlation(rows);
    summary["samples"] = rows.size();
    summary["spearman_quality"] = opt(rho);
    summary["spearman_by_modality"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < st.model.modalities(); ++k) summary["spearman_by_modality"].push_back(opt(quality_correlation(rows, k)));
    summary["p_b"] = model_quality_expectation(emb);
    if (!rho) summary["note"] = "correlation undefined: quality or weights are constant";
    write_text(dir / "quality_summary.json", summary.dump(2) + "\n");
    emit_config(dir, c);
    if (rho)
        std::printf("Spearman rho %.6f over %zu samples\n", *rho, rows.size());
    else
        std::printf("Spearman rho undefined over %zu samples\n", rows.size());
}

int fail(const std::string& code, const std::string& message, int status)
{
    nlohmann::ordered_json j{{"code", code}, {"message", message}};
    std::fprintf(stderr, "error: %s\n", j.dump().c_str());
    return status;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"qafuse: quality-aware multimodal fusion on synthetic data"};
    app.require_subcommand(1);
    app.footer("Configuration is a JSON document; every key is optional and unknown keys are rejected.\n"
               "Defaults:\n" +
               dump_config(config_from_json(nlohmann::json::object())));
    Options o;
    std::uint64_t seed = 0, sample_seed = 0;

    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset (QADS)");
    gen->add_option("--config", o.config, "JSON config file");
    gen->add_option("--out", o.out, "output .qads path")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "overrides generator.seed");
    auto* gen_sample = gen->add_option("--sample-seed", sample_seed, "overrides generator.sample_seed");

    auto* tr = app.add_subcommand("train", "train a fusion model (QFCK checkpoints + train_log.csv)");
    tr->add_option("--config", o.config, "JSON config file");
    tr->add_option("--data", o.data, "training .qads file")->required();
    tr->add_option("--out", o.out, "output directory")->required();
    auto* tr_seed = tr->add_option("--seed", seed, "overrides trainer.seed");
    tr->add_option("--resume", o.resume, "continue from this checkpoint");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (report JSON + ROC/CMC CSV)");
    ev->add_option("--config", o.config, "JSON config file");
    ev->add_option("--model", o.model, "checkpoint .qfck")->required();
    ev->add_option("--data", o.data, "evaluation .qads file")->required();
    ev->add_option("--report", o.report, "report JSON path")->required();
    ev->add_option("--protocol", o.protocol, "verification | identification");
    ev->add_option("--fusion", o.fusion, "quality | avg | sum | major");
    auto* ev_seed = ev->add_option("--seed", seed, "overrides eval.seed");

    auto* qr = app.add_subcommand("quality-report", "per-sample learned weights vs ground-truth quality");
    qr->add_option("--config", o.config, "JSON config file");
    qr->add_option("--model", o.model, "checkpoint .qfck")->required();
    qr->add_option("--data", o.data, ".qads file with ground-truth gamma")->required();
    qr->add_option("--out", o.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }
    for (auto* opt : {gen_seed, tr_seed, ev_seed})
        if (opt->count() > 0) o.seed = seed;
    if (gen_sample->count() > 0) o.sample_seed = sample_seed;

    try {
        if (gen->parsed()) cmd_gen(o);
        if (tr->parsed()) cmd_train(o);
        if (ev->parsed()) cmd_eval(o);
        if (qr->parsed()) cmd_quality_report(o);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const FormatError& e) {
        return fail("format", e.what(), 3);
    } catch (const NonFiniteError& e) {
        return fail("non_finite", e.what(), 4);
    } catch (const ShapeError& e) {
        return fail("shape", e.what(), 5);
    } catch (const Error& e) {
        return fail("error", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}
