// evmae: command-line pipeline for event-stream ingestion, windowing, patch
// generation, masked-autoencoder training, and plot-ready exports.
//
// Exit codes: 0 ok, 2 usage/config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evmae/checkpoint.hpp"
#include "evmae/dataset.hpp"
#include "evmae/event_io.hpp"
#include "evmae/model.hpp"
#include "evmae/patch.hpp"
#include "evmae/point_io.hpp"
#include "evmae/sampler.hpp"
#include "evmae/synth.hpp"
#include "evmae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evmae;

namespace {

// --- run configuration ---------------------------------------------------

/// Union of the pipeline stage configs. The JSON file mirrors this layout in
/// four sections; command-line flags override file values, which override
/// defaults. model.patch_k is always derived from patch.k.
struct RunConfig {
    SamplerConfig sampler;
    PatchConfig patch;
    PatchMethod method = PatchMethod::inlier;
    ModelConfig model;
    TrainConfig train;
};

json run_config_json(const RunConfig& rc) {
    json j;
    j["sampler"] = {{"window_s", rc.sampler.window_s},
                    {"step_s", rc.sampler.step_s},
                    {"n_points", rc.sampler.n_points},
                    {"seed", rc.sampler.seed}};
    j["patch"] = {{"m", rc.patch.m},
                  {"k", rc.patch.k},
                  {"threshold_h", rc.patch.threshold_h},
                  {"max_attempts", rc.patch.max_attempts},
                  {"method", to_string(rc.method)},
                  {"seed", rc.patch.seed}};
    j["model"] = {{"embed_dim", rc.model.embed_dim},
                  {"encoder_depth", rc.model.encoder_depth},
                  {"decoder_depth", rc.model.decoder_depth},
                  {"heads", rc.model.heads},
                  {"mlp_ratio", rc.model.mlp_ratio},
                  {"mask_ratio", rc.model.mask_ratio},
                  {"n_classes", rc.model.n_classes},
                  {"seed", rc.model.seed}};
    j["train"] = {{"lr", rc.train.lr},
                  {"steps", rc.train.steps},
                  {"batch_size", rc.train.batch_size},
                  {"beta1", rc.train.beta1},
                  {"beta2", rc.train.beta2},
                  {"adam_eps", rc.train.adam_eps},
                  {"freeze_encoder", rc.train.freeze_encoder},
                  {"checkpoint_every", rc.train.checkpoint_every},
                  {"seed", rc.train.seed}};
    return j;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || item.key() == a;
        require(known, errc::invalid_config, "unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_config_file(RunConfig& rc, const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        raise(errc::invalid_config, std::string("config file: ") + e.what());
    }
    try {
        require(j.is_object(), errc::invalid_config, "config root must be a JSON object");
        check_keys(j, {"sampler", "patch", "model", "train"}, "config");
        if (j.contains("sampler")) {
            const json& s = j["sampler"];
            check_keys(s, {"window_s", "step_s", "n_points", "seed"}, "sampler");
            maybe(s, "window_s", rc.sampler.window_s);
            maybe(s, "step_s", rc.sampler.step_s);
            maybe(s, "n_points", rc.sampler.n_points);
            maybe(s, "seed", rc.sampler.seed);
        }
        if (j.contains("patch")) {
            const json& s = j["patch"];
            check_keys(s, {"m", "k", "threshold_h", "max_attempts", "method", "seed"}, "patch");
            maybe(s, "m", rc.patch.m);
            maybe(s, "k", rc.patch.k);
            maybe(s, "threshold_h", rc.patch.threshold_h);
            maybe(s, "max_attempts", rc.patch.max_attempts);
            maybe(s, "seed", rc.patch.seed);
            if (s.contains("method")) rc.method = patch_method_from_string(s["method"]);
        }
        if (j.contains("model")) {
            const json& s = j["model"];
            check_keys(s,
                       {"embed_dim", "encoder_depth", "decoder_depth", "heads", "mlp_ratio",
                        "mask_ratio", "n_classes", "seed"},
                       "model");
            maybe(s, "embed_dim", rc.model.embed_dim);
            maybe(s, "encoder_depth", rc.model.encoder_depth);
            maybe(s, "decoder_depth", rc.model.decoder_depth);
            maybe(s, "heads", rc.model.heads);
            maybe(s, "mlp_ratio", rc.model.mlp_ratio);
            maybe(s, "mask_ratio", rc.model.mask_ratio);
            maybe(s, "n_classes", rc.model.n_classes);
            maybe(s, "seed", rc.model.seed);
        }
        if (j.contains("train")) {
            const json& s = j["train"];
            check_keys(s,
                       {"lr", "steps", "batch_size", "beta1", "beta2", "adam_eps",
                        "freeze_encoder", "checkpoint_every", "seed"},
                       "train");
            maybe(s, "lr", rc.train.lr);
            maybe(s, "steps", rc.train.steps);
            maybe(s, "batch_size", rc.train.batch_size);
            maybe(s, "beta1", rc.train.beta1);
            maybe(s, "beta2", rc.train.beta2);
            maybe(s, "adam_eps", rc.train.adam_eps);
            maybe(s, "freeze_encoder", rc.train.freeze_encoder);
            maybe(s, "checkpoint_every", rc.train.checkpoint_every);
            maybe(s, "seed", rc.train.seed);
        }
    } catch (const json::exception& e) {
        raise(errc::invalid_config, std::string("config file: ") + e.what());
    }
}

/// RunConfig flags shared by the training-side subcommands.
struct ConfigCli {
    CLI::App* cmd = nullptr;
    std::string config_path;
    double window = 0.5, step = 0.25;
    std::size_t n = 1024;
    std::size_t m = 64, k = 32;
    double threshold = 0.85e-3;
    std::string method = "inlier";
    double alpha = 0.8;
    std::size_t embed_dim = 64, enc_depth = 3, dec_depth = 2, heads = 4, mlp_ratio = 2;
    double lr = 1e-3;
    std::size_t steps = 200, batch = 4, checkpoint_every = 0;
    bool freeze = false;
    std::uint64_t seed = 0;

    void attach(CLI::App* c) {
        cmd = c;
        c->add_option("--config", config_path, "JSON run config (sampler/patch/model/train)");
        c->add_option("--window", window, "window length in seconds");
        c->add_option("--step", step, "window step in seconds");
        c->add_option("--n", n, "points per window after resampling");
        c->add_option("--m", m, "patches per window");
        c->add_option("--k", k, "points per patch");
        c->add_option("--H", threshold, "inlier residual threshold");
        c->add_option("--method", method, "patch method: inlier|fps|random");
        c->add_option("--alpha", alpha, "mask ratio");
        c->add_option("--embed-dim", embed_dim, "token width");
        c->add_option("--enc-depth", enc_depth, "encoder blocks");
        c->add_option("--dec-depth", dec_depth, "decoder blocks");
        c->add_option("--heads", heads, "attention heads");
        c->add_option("--mlp-ratio", mlp_ratio, "MLP widening factor");
        c->add_option("--lr", lr, "peak learning rate");
        c->add_option("--steps", steps, "optimizer steps");
        c->add_option("--batch", batch, "batch size");
        c->add_option("--checkpoint-every", checkpoint_every,
                      "extra checkpoint cadence (steps), 0 = final only");
        c->add_flag("--freeze", freeze, "update only the classifier head");
        c->add_option("--seed", seed, "seed applied to every pipeline stage");
    }

    RunConfig resolve() const {
        RunConfig rc;
        if (!config_path.empty()) apply_config_file(rc, config_path);
        const auto set = [this](const char* flag) { return cmd->count(flag) > 0; };
        if (set("--window")) rc.sampler.window_s = window;
        if (set("--step")) rc.sampler.step_s = step;
        if (set("--n")) rc.sampler.n_points = n;
        if (set("--m")) rc.patch.m = m;
        if (set("--k")) rc.patch.k = k;
        if (set("--H")) rc.patch.threshold_h = threshold;
        if (set("--method")) rc.method = patch_method_from_string(method);
        if (set("--alpha")) rc.model.mask_ratio = alpha;
        if (set("--embed-dim")) rc.model.embed_dim = embed_dim;
        if (set("--enc-depth")) rc.model.encoder_depth = enc_depth;
        if (set("--dec-depth")) rc.model.decoder_depth = dec_depth;
        if (set("--heads")) rc.model.heads = heads;
        if (set("--mlp-ratio")) rc.model.mlp_ratio = mlp_ratio;
        if (set("--lr")) rc.train.lr = lr;
        if (set("--steps")) rc.train.steps = steps;
        if (set("--batch")) rc.train.batch_size = batch;
        if (set("--checkpoint-every")) rc.train.checkpoint_every = checkpoint_every;
        if (set("--freeze")) rc.train.freeze_encoder = freeze;
        if (set("--seed"))
            rc.sampler.seed = rc.patch.seed = rc.model.seed = rc.train.seed = seed;
        rc.model.patch_k = rc.patch.k;
        return rc;
    }
};

void log_config(const json& j) { std::cerr << "config: " << j.dump() << "\n"; }

// --- stream and dataset loading --------------------------------------------

enum class FileFormat { auto_detect, evb1, csv, aedat };

FileFormat format_from_string(const std::string& s) {
    if (s == "auto") return FileFormat::auto_detect;
    if (s == "evb1") return FileFormat::evb1;
    if (s == "csv") return FileFormat::csv;
    if (s == "aedat") return FileFormat::aedat;
    raise(errc::invalid_config, "unknown format '" + s + "'");
}

EventStream load_stream(const std::string& path, FileFormat fmt, std::uint32_t width,
                        std::uint32_t height) {
    const std::string bytes = read_file(path);
    if (fmt == FileFormat::auto_detect) {
        if (bytes.rfind("EVB1", 0) == 0) fmt = FileFormat::evb1;
        else if (bytes.rfind("x,y,t,p", 0) == 0) fmt = FileFormat::csv;
        else fmt = FileFormat::aedat;
    }
    switch (fmt) {
        case FileFormat::evb1: return parse_binary_events(bytes);
        case FileFormat::csv:
            require(width > 0 && height > 0, errc::invalid_config,
                    "CSV input needs --width and --height");
            return parse_csv_events(bytes, width, height);
        case FileFormat::aedat: return parse_aedat31(bytes, width, height);
        default: raise(errc::invalid_config, "unresolved input format");
    }
}

std::vector<std::string> list_evb1_files(const std::string& dir) {
    require(fs::is_directory(dir), errc::empty_input, dir + " is not a directory");
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".evb1")
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    require(!names.empty(), errc::empty_input, "no .evb1 files in " + dir);
    return names;
}

struct Dataset {
    std::vector<Sample> samples;
    std::size_t n_classes = 0;  // 0 when unlabeled
};

Dataset load_dataset(const std::string& dir, const RunConfig& rc, bool need_labels) {
    const std::vector<std::string> files = list_evb1_files(dir);
    std::map<std::string, std::size_t> labels;
    const std::string labels_path = (fs::path(dir) / "labels.csv").string();
    const bool have_labels = fs::exists(labels_path);
    require(have_labels || !need_labels, errc::empty_input, "missing " + labels_path);
    std::size_t n_classes = 0;
    if (have_labels) {
        for (const auto& [file, label] : parse_labels_csv(read_file(labels_path))) {
            labels[file] = label;
            n_classes = std::max(n_classes, label + 1);
        }
    }
    Dataset out;
    out.n_classes = have_labels ? n_classes : 0;
    for (const std::string& file : files) {
        std::size_t label = 0;
        if (have_labels) {
            const auto it = labels.find(file);
            require(it != labels.end(), errc::malformed_line, "no label row for " + file);
            label = it->second;
        }
        const EventStream stream =
            parse_binary_events(read_file((fs::path(dir) / file).string()));
        const std::string stem = fs::path(file).stem().string();
        auto samples =
            samples_from_stream(stem, stream, rc.sampler, rc.patch, rc.method, label);
        for (Sample& s : samples) out.samples.push_back(std::move(s));
    }
    require(!out.samples.empty(), errc::empty_input, "no usable windows in " + dir);
    return out;
}

std::vector<Sample> filter_split(const std::vector<Sample>& all, const std::string& split) {
    if (split == "all") return all;
    std::vector<Sample> out;
    for (const Sample& s : all)
        if (is_holdout(s.id) == (split == "holdout")) out.push_back(s);
    require(!out.empty(), errc::empty_eval_set, "split '" + split + "' selected no samples");
    return out;
}

std::string zero_pad(std::size_t v, const char* fmt) {
    char buf[32];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

void write_training_outputs(const std::string& out_dir, const std::string& name,
                            const Model& model, const std::vector<MetricsRow>& hist,
                            const json& cfg) {
    fs::create_directories(out_dir);
    save_checkpoint(model, (fs::path(out_dir) / (name + ".evmc")).string());
    write_file((fs::path(out_dir) / (name + "_metrics.csv")).string(), write_metrics_csv(hist));
    write_file((fs::path(out_dir) / (name + "_config.json")).string(), cfg.dump(2) + "\n");
}

StepHook checkpoint_hook(const RunConfig& rc, const std::string& out_dir,
                         const std::string& name) {
    if (rc.train.checkpoint_every == 0) return {};
    const std::size_t every = rc.train.checkpoint_every;
    return [out_dir, name, every](std::size_t step, const Model& m) {
        if (step % every == 0) {
            fs::create_directories(out_dir);
            save_checkpoint(
                m, (fs::path(out_dir) / (name + "_step" + std::to_string(step) + ".evmc"))
                       .string());
        }
    };
}

// --- subcommands -----------------------------------------------------------

struct IngestOpts {
    std::string input, out, format = "auto";
    std::uint32_t width = 0, height = 0;
};

void cmd_ingest(const IngestOpts& o) {
    const EventStream s = load_stream(o.input, format_from_string(o.format), o.width, o.height);
    write_file(o.out, write_binary_events(s));
    log_config(json{{"input", o.input}, {"out", o.out}, {"format", o.format},
                    {"width", s.width}, {"height", s.height}});
    std::cout << "events " << s.size() << " width " << s.width << " height " << s.height << "\n";
}

struct WindowsOpts {
    std::string input, out;
    double window = 0.5, step = 0.25;
    std::size_t n = 1024;
    std::uint64_t seed = 0;
    std::uint32_t width = 0, height = 0;
};

void cmd_windows(const WindowsOpts& o) {
    SamplerConfig sc;
    sc.window_s = o.window;
    sc.step_s = o.step;
    sc.n_points = o.n;
    sc.seed = o.seed;
    log_config(json{{"input", o.input}, {"out", o.out}, {"window_s", sc.window_s},
                    {"step_s", sc.step_s}, {"n_points", sc.n_points}, {"seed", sc.seed}});
    const EventStream s = load_stream(o.input, FileFormat::auto_detect, o.width, o.height);
    const std::vector<PointSet> windows = sample_stream(s, sc);
    fs::create_directories(o.out);
    for (std::size_t i = 0; i < windows.size(); ++i)
        write_file((fs::path(o.out) / ("window_" + zero_pad(i, "%04zu") + ".csv")).string(),
                   write_point_csv(windows[i]));
    std::cout << "windows " << windows.size() << "\n";
}

struct PatchesOpts {
    std::string in, out, method = "inlier";
    std::size_t m = 64, k = 32;
    double threshold = 0.85e-3;
    std::uint64_t seed = 0;
};

void cmd_patches(const PatchesOpts& o) {
    PatchConfig pc;
    pc.m = o.m;
    pc.k = o.k;
    pc.threshold_h = o.threshold;
    pc.seed = o.seed;
    const PatchMethod method = patch_method_from_string(o.method);
    log_config(json{{"in", o.in}, {"out", o.out}, {"m", pc.m}, {"k", pc.k},
                    {"threshold_h", pc.threshold_h}, {"method", o.method}, {"seed", pc.seed}});
    const PointSet ps = parse_point_csv(read_file(o.in));
    const PatchSet set = generate_patches(ps, pc, method);
    write_file(o.out, write_patch_csv(set, ps));
    std::cout << "patches " << set.size() << " fallback " << set.fallback_count << "\n";
}

struct SynthOpts {
    std::string out;
    std::size_t classes = 3, samples = 300;
    std::uint64_t seed = 7;
    std::uint32_t width = 1024, height = 1024;
    double duration = 0.5, speed = 2048.0, inlier_rate = 4000.0, noise_rate = 600.0;
};

void cmd_synth(const SynthOpts& o) {
    SynthConfig base;
    base.width = o.width;
    base.height = o.height;
    base.duration_s = o.duration;
    base.speed_px_s = o.speed;
    base.inlier_rate = o.inlier_rate;
    base.noise_rate = o.noise_rate;
    base.validate();
    log_config(json{{"out", o.out}, {"classes", o.classes}, {"samples", o.samples},
                    {"seed", o.seed}, {"width", o.width}, {"height", o.height},
                    {"duration_s", o.duration}, {"speed_px_s", o.speed},
                    {"inlier_rate", o.inlier_rate}, {"noise_rate", o.noise_rate}});
    const auto set = gen_classification_set(o.samples, o.classes, base, o.seed);
    fs::create_directories(o.out);
    std::vector<std::pair<std::string, std::size_t>> rows;
    for (const LabeledStream& ls : set) {
        const std::string file = ls.id + ".evb1";
        write_file((fs::path(o.out) / file).string(), write_binary_events(ls.stream));
        rows.emplace_back(file, ls.label);
    }
    write_file((fs::path(o.out) / "labels.csv").string(), write_labels_csv(rows));
    std::cout << "streams " << set.size() << " classes " << o.classes << "\n";
}

struct TrainOpts {
    std::string data, out, name, ckpt;
    ConfigCli cfg;
};

void cmd_pretrain(const TrainOpts& o) {
    RunConfig rc = o.cfg.resolve();
    rc.model.n_classes = 0;
    const json resolved = run_config_json(rc);
    log_config(resolved);
    const Dataset ds = load_dataset(o.data, rc, false);
    Model model(rc.model);
    const auto hist = pretrain(model, ds.samples, rc.train, checkpoint_hook(rc, o.out, o.name));
    write_training_outputs(o.out, o.name, model, hist, resolved);
    std::cout << "steps " << hist.size() << " final_loss "
              << detail::fmt_double(hist.back().loss) << "\n";
}

void cmd_finetune(const TrainOpts& o) {
    RunConfig rc = o.cfg.resolve();
    const json resolved = run_config_json(rc);
    log_config(resolved);
    const Dataset ds = load_dataset(o.data, rc, true);
    require(ds.n_classes >= 2, errc::malformed_line, "labels.csv holds fewer than 2 classes");
    const Checkpoint ck = load_checkpoint(o.ckpt);
    Model model = model_from_checkpoint(ck, true, ds.n_classes, rc.model.seed);
    const std::vector<Sample> train = filter_split(ds.samples, "train");
    const auto hist = finetune(model, train, rc.train, checkpoint_hook(rc, o.out, o.name));
    write_training_outputs(o.out, o.name, model, hist, resolved);
    std::cout << "steps " << hist.size() << " final_loss "
              << detail::fmt_double(hist.back().loss) << " final_acc "
              << detail::fmt_double(hist.back().acc.value()) << "\n";
    bool any_holdout = false;
    for (const Sample& s : ds.samples) any_holdout = any_holdout || is_holdout(s.id);
    if (any_holdout) {
        const MetricsRow ev = evaluate(model, filter_split(ds.samples, "holdout"));
        std::cout << "holdout_loss " << detail::fmt_double(ev.loss) << " holdout_acc "
                  << detail::fmt_double(ev.acc.value()) << "\n";
    }
}

struct EvalOpts {
    std::string data, ckpt, split = "holdout";
    ConfigCli cfg;
};

void cmd_eval(const EvalOpts& o) {
    RunConfig rc = o.cfg.resolve();
    log_config(run_config_json(rc));
    const Checkpoint ck = load_checkpoint(o.ckpt);
    const Model model = model_from_checkpoint(ck);
    const Dataset ds = load_dataset(o.data, rc, true);
    const MetricsRow ev = evaluate(model, filter_split(ds.samples, o.split));
    std::cout << "loss,acc\n"
              << detail::fmt_double(ev.loss) << "," << detail::fmt_double(ev.acc.value())
              << "\n";
}

struct ReconstructOpts {
    std::string ckpt, window, out, method = "inlier";
    double alpha = 0.8, threshold = 0.85e-3;
    std::size_t m = 64;
    std::uint64_t seed = 0;
};

void cmd_reconstruct(const ReconstructOpts& o) {
    const Checkpoint ck = load_checkpoint(o.ckpt);
    const Model model = model_from_checkpoint(ck);
    PatchConfig pc;
    pc.m = o.m;
    pc.k = model.cfg.patch_k;
    pc.threshold_h = o.threshold;
    pc.seed = o.seed;
    log_config(json{{"ckpt", o.ckpt}, {"window", o.window}, {"out", o.out},
                    {"alpha", o.alpha}, {"m", pc.m}, {"k", pc.k},
                    {"threshold_h", pc.threshold_h}, {"method", o.method}, {"seed", o.seed}});
    const PointSet ps = parse_point_csv(read_file(o.window));
    const PatchSet set = generate_patches(ps, pc, patch_method_from_string(o.method));
    Rng mask_rng(mix64(o.seed, 0x6d61736bull));
    const MaskedBatch mb = make_masked_batch(set, o.alpha, mask_rng);

    // the three aligned exports: every patch point, the visible remainder
    // after masking, and the model's predictions for the masked slots
    PointSet input, masked, recon;
    const auto push = [](PointSet& dst, double x, double y, double t, std::uint8_t p) {
        dst.xyz.push_back(x);
        dst.xyz.push_back(y);
        dst.xyz.push_back(t);
        dst.polarity.push_back(p);
        dst.source_index.push_back(dst.polarity.size() - 1);
    };
    for (const Patch& p : set.patches)
        for (std::size_t j = 0; j < p.k(); ++j)
            push(input, p.center[0] - p.local_xyz[3 * j], p.center[1] - p.local_xyz[3 * j + 1],
                 p.center[2] - p.local_xyz[3 * j + 2], p.polarity);
    for (std::size_t vi : mb.split.visible) {
        const Patch& p = set.patches[vi];
        for (std::size_t j = 0; j < p.k(); ++j)
            push(masked, p.center[0] - p.local_xyz[3 * j], p.center[1] - p.local_xyz[3 * j + 1],
                 p.center[2] - p.local_xyz[3 * j + 2], p.polarity);
    }
    if (!mb.split.masked.empty()) {
        Graph g;
        BoundModel bm = bind(g, model, false);
        Var tokens = embed_patches(bm, g.constant(mb.visible_pts), mb.split.visible.size());
        Var latents = encoder_forward(bm, tokens, pos_embed(bm, g.constant(mb.visible_centers)));
        Var decoded = decoder_forward(bm, latents, mb.split,
                                      pos_embed(bm, g.constant(mb.all_centers)), mb.m);
        const Tensor pred = g.value(reconstruct_head(bm, decoded));
        for (std::size_t r = 0; r < mb.split.masked.size(); ++r) {
            const Patch& p = set.patches[mb.split.masked[r]];
            for (std::size_t j = 0; j < set.k; ++j)
                push(recon, p.center[0] - pred.at(r, 3 * j), p.center[1] - pred.at(r, 3 * j + 1),
                     p.center[2] - pred.at(r, 3 * j + 2), p.polarity);
        }
    }

    fs::create_directories(o.out);
    const auto emit = [&](const char* name, const PointSet& pts) {
        write_file((fs::path(o.out) / (std::string(name) + ".csv")).string(),
                   write_point_csv(pts));
        write_file((fs::path(o.out) / (std::string(name) + ".ply")).string(),
                   write_ply(pts.xyz));
    };
    emit("input", input);
    emit("masked", masked);
    emit("reconstruction", recon);
    std::cout << "input " << input.size() << " masked " << masked.size() << " reconstructed "
              << recon.size() << "\n";
}

struct AblateOpts {
    std::string data, ckpt_dir, out;
    std::vector<std::string> methods{"inlier", "fps", "random"};
    std::vector<std::string> thresholds;
    ConfigCli cfg;
};

void cmd_ablate(const AblateOpts& o) {
    RunConfig rc = o.cfg.resolve();
    log_config(run_config_json(rc));

    struct Row {
        std::string name, ckpt;
        RunConfig rc;
    };
    std::vector<Row> rows;
    for (const std::string& method : o.methods) {
        Row r{method, (fs::path(o.ckpt_dir) / ("pre_" + method + ".evmc")).string(), rc};
        r.rc.method = patch_method_from_string(method);
        rows.push_back(std::move(r));
    }
    for (const std::string& tok : o.thresholds) {
        Row r{"H_" + tok, (fs::path(o.ckpt_dir) / ("pre_H_" + tok + ".evmc")).string(), rc};
        r.rc.method = PatchMethod::inlier;
        try {
            r.rc.patch.threshold_h = std::stod(tok);
        } catch (const std::exception&) {
            raise(errc::invalid_config, "bad threshold '" + tok + "'");
        }
        rows.push_back(std::move(r));
    }
    require(!rows.empty(), errc::invalid_config, "nothing to ablate");

    std::string csv = "name,loss_x1000,acc\n";
    for (const Row& row : rows) {
        require(fs::exists(row.ckpt), errc::missing_checkpoint, "expected " + row.ckpt);
        const Model model = model_from_checkpoint(load_checkpoint(row.ckpt));
        const Dataset ds = load_dataset(o.data, row.rc, false);
        double loss = 0;
        for (const Sample& s : ds.samples) {
            Rng mask_rng(mix64(row.rc.train.seed, fnv1a(s.id)));
            loss += masked_loss(model, s.patches, mask_rng);
        }
        loss /= static_cast<double>(ds.samples.size());

        std::string acc;  // filled only when a fine-tuned counterpart exists
        const std::string ft =
            (fs::path(o.ckpt_dir) / ("ft_" + row.name + ".evmc")).string();
        if (fs::exists(ft) && ds.n_classes >= 2) {
            const Model ft_model = model_from_checkpoint(load_checkpoint(ft));
            const MetricsRow ev = evaluate(ft_model, filter_split(ds.samples, "holdout"));
            acc = detail::fmt_double(ev.acc.value());
        }
        csv += row.name + "," + detail::fmt_double(loss * 1000.0) + "," + acc + "\n";
    }
    if (!o.out.empty()) write_file(o.out, csv);
    std::cout << csv;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-stream masked-autoencoder pipeline"};
    app.require_subcommand(1);

    auto ingest = std::make_shared<IngestOpts>();
    CLI::App* c = app.add_subcommand("ingest", "convert an event file to EVB1");
    c->add_option("--input", ingest->input, "source file")->required();
    c->add_option("--out", ingest->out, "EVB1 output path")->required();
    c->add_option("--format", ingest->format, "auto|evb1|csv|aedat");
    c->add_option("--width", ingest->width, "sensor width (CSV, AEDAT override)");
    c->add_option("--height", ingest->height, "sensor height (CSV, AEDAT override)");
    c->callback([ingest] { cmd_ingest(*ingest); });

    auto windows = std::make_shared<WindowsOpts>();
    c = app.add_subcommand("windows", "slice a stream into normalized point-set windows");
    c->add_option("--input", windows->input, "event file")->required();
    c->add_option("--out", windows->out, "output directory")->required();
    c->add_option("--window", windows->window, "window length in seconds");
    c->add_option("--step", windows->step, "window step in seconds");
    c->add_option("--n", windows->n, "points per window");
    c->add_option("--seed", windows->seed, "resampling seed");
    c->add_option("--width", windows->width, "sensor width (CSV input)");
    c->add_option("--height", windows->height, "sensor height (CSV input)");
    c->callback([windows] { cmd_windows(*windows); });

    auto patches = std::make_shared<PatchesOpts>();
    c = app.add_subcommand("patches", "group a window file into local patches");
    c->add_option("--in", patches->in, "window CSV")->required();
    c->add_option("--out", patches->out, "patch CSV output")->required();
    c->add_option("--m", patches->m, "patches per window");
    c->add_option("--k", patches->k, "points per patch");
    c->add_option("--H", patches->threshold, "inlier residual threshold");
    c->add_option("--method", patches->method, "inlier|fps|random");
    c->add_option("--seed", patches->seed, "centre sampling seed");
    c->callback([patches] { cmd_patches(*patches); });

    auto synth = std::make_shared<SynthOpts>();
    c = app.add_subcommand("synth", "generate labeled synthetic event streams");
    c->add_option("--out", synth->out, "output directory")->required();
    c->add_option("--classes", synth->classes, "motion direction classes (2..8)");
    c->add_option("--samples", synth->samples, "streams to generate");
    c->add_option("--seed", synth->seed, "generator seed");
    c->add_option("--width", synth->width, "sensor width");
    c->add_option("--height", synth->height, "sensor height");
    c->add_option("--duration", synth->duration, "stream length in seconds");
    c->add_option("--speed", synth->speed, "edge speed in pixels per second");
    c->add_option("--inlier-rate", synth->inlier_rate, "edge events per second");
    c->add_option("--noise-rate", synth->noise_rate, "background events per second");
    c->callback([synth] { cmd_synth(*synth); });

    auto pre = std::make_shared<TrainOpts>();
    pre->name = "pre";
    c = app.add_subcommand("pretrain", "masked-reconstruction pre-training");
    c->add_option("--data", pre->data, "directory of .evb1 streams")->required();
    c->add_option("--out", pre->out, "checkpoint/metrics output directory")->required();
    c->add_option("--name", pre->name, "output basename");
    pre->cfg.attach(c);
    c->callback([pre] { cmd_pretrain(*pre); });

    auto ft = std::make_shared<TrainOpts>();
    ft->name = "ft";
    c = app.add_subcommand("finetune", "classification fine-tuning from a checkpoint");
    c->add_option("--ckpt", ft->ckpt, "pre-trained checkpoint")->required();
    c->add_option("--data", ft->data, "directory of .evb1 streams with labels.csv")->required();
    c->add_option("--out", ft->out, "checkpoint/metrics output directory")->required();
    c->add_option("--name", ft->name, "output basename");
    ft->cfg.attach(c);
    c->callback([ft] { cmd_finetune(*ft); });

    auto ev = std::make_shared<EvalOpts>();
    c = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
    c->add_option("--ckpt", ev->ckpt, "fine-tuned checkpoint")->required();
    c->add_option("--data", ev->data, "directory of .evb1 streams with labels.csv")->required();
    c->add_option("--split", ev->split, "holdout|train|all");
    ev->cfg.attach(c);
    c->callback([ev] { cmd_eval(*ev); });

    auto rec = std::make_shared<ReconstructOpts>();
    c = app.add_subcommand("reconstruct", "export input/masked/reconstruction point files");
    c->add_option("--ckpt", rec->ckpt, "pre-trained checkpoint")->required();
    c->add_option("--window", rec->window, "window CSV to reconstruct")->required();
    c->add_option("--out", rec->out, "output directory")->required();
    c->add_option("--alpha", rec->alpha, "mask ratio");
    c->add_option("--m", rec->m, "patches per window");
    c->add_option("--H", rec->threshold, "inlier residual threshold");
    c->add_option("--method", rec->method, "inlier|fps|random");
    c->add_option("--seed", rec->seed, "patch and mask seed");
    c->callback([rec] { cmd_reconstruct(*rec); });

    auto ab = std::make_shared<AblateOpts>();
    c = app.add_subcommand("ablate", "loss/accuracy table across methods and thresholds");
    c->add_option("--data", ab->data, "directory of .evb1 streams")->required();
    c->add_option("--ckpt-dir", ab->ckpt_dir, "directory holding pre_<name>.evmc checkpoints")
        ->required();
    c->add_option("--methods", ab->methods, "patch methods to compare")->delimiter(',');
    c->add_option("--thresholds", ab->thresholds, "inlier thresholds to compare")
        ->delimiter(',');
    c->add_option("--out", ab->out, "report CSV path");
    ab->cfg.attach(c);
    c->callback([ab] { cmd_ablate(*ab); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (e.numeric()) return 4;
        return e.code() == errc::invalid_config ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
