#include "patchstyle/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "patchstyle/error.hpp"
#include "patchstyle/guidance.hpp"
#include "patchstyle/hyperopt.hpp"
#include "patchstyle/inference.hpp"
#include "patchstyle/registration.hpp"
#include "patchstyle/service.hpp"
#include "patchstyle/temporal_filter.hpp"
#include "patchstyle/thread_pool.hpp"
#include "patchstyle/trainer.hpp"

namespace patchstyle {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

const std::set<std::string> kPathOptions{"frames", "masks", "guidance", "out", "checkpoint",
                                         "spec", "keyframes", "static", "checkpoint-dir", "summary-dir"};

/// JSON config plus the directory its relative paths are resolved against.
struct ConfigFile {
    json data = json::object();
    fs::path base_dir;
};

ConfigFile load_config(const std::string& path) {
    ConfigFile cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::config, "cannot open config " + path);
    try {
        in >> cfg.data;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, "invalid JSON in " + path + ": " + e.what());
    }
    if (!cfg.data.is_object()) throw Error(ErrorCode::config, "config " + path + " must hold a JSON object");
    cfg.base_dir = fs::path(path).parent_path();
    return cfg;
}

std::string scalar_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number() || v.is_null()) return v.dump();
    throw Error(ErrorCode::config, "config value " + v.dump() + " is not a scalar");
}

/// Fills options not given on the command line from same-named config keys
/// ('-' and '_' are interchangeable).
void apply_config(CLI::App& cmd, const ConfigFile& cfg) {
    for (CLI::Option* opt : cmd.get_options()) {
        if (opt->count() > 0) continue;
        const std::string name = opt->get_single_name();
        if (name == "config" || name == "help") continue;
        std::string alt = name;
        std::replace(alt.begin(), alt.end(), '-', '_');
        const json* value = nullptr;
        if (cfg.data.contains(name)) value = &cfg.data.at(name);
        else if (cfg.data.contains(alt)) value = &cfg.data.at(alt);
        if (!value) continue;
        // Structured values (keyframe lists, nested configs) are read by the commands themselves.
        if (value->is_object()) continue;
        if (value->is_array() && std::any_of(value->begin(), value->end(), [](const json& v) { return v.is_structured(); })) {
            continue;
        }
        auto add = [&](const json& v) {
            std::string text = scalar_text(v);
            if (kPathOptions.count(name) && !text.empty() && fs::path(text).is_relative()) {
                text = (cfg.base_dir / text).string();
            }
            opt->add_result(text);
        };
        if (value->is_array()) {
            for (const auto& v : *value) add(v);
        } else {
            add(*value);
        }
        try {
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw Error(ErrorCode::config, "config key '" + name + "': " + e.what());
        }
    }
}

fs::path resolve(const ConfigFile& cfg, const std::string& p) {
    fs::path q(p);
    return q.is_relative() && !cfg.base_dir.empty() ? cfg.base_dir / q : q;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
}

std::string frame_name(const Sequence& seq, size_t i) {
    if (i < seq.names.size()) return seq.names[i];
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu.png", i);
    return buf;
}

// --------------------------------------------------------------------------- train

struct TrainArgs {
    std::string config;
    std::string frames;
    std::string masks;
    std::string guidance;
    std::string keyframes;
    std::string out = ".";
    std::optional<int64_t> steps;
    std::optional<double> seconds;
    std::optional<uint64_t> seed;
    std::string mode;
};

int cmd_train(CLI::App& cmd, const TrainArgs& a, std::ostream& out) {
    ConfigFile cfg = load_config(a.config);
    apply_config(cmd, cfg);

    TrainConfig config = cfg.data.contains("train") ? TrainConfig::from_json(cfg.data.at("train")) : TrainConfig{};
    if (a.steps) config.budget = Budget::of_steps(*a.steps);
    if (a.seconds) config.budget = Budget::of_seconds(*a.seconds);
    if (a.seed) config.seed = *a.seed;
    if (!a.mode.empty()) config.mode = parse_train_mode(a.mode);
    config.validate();

    if (a.frames.empty()) throw Error(ErrorCode::config, "train needs --frames (or \"frames\" in the config)");
    std::optional<fs::path> masks;
    if (!a.masks.empty()) masks = a.masks;
    Sequence seq = load_sequence(a.frames, masks);
    if (!a.guidance.empty()) load_guidance(seq, a.guidance);

    std::vector<KeyframeSpec> specs;
    if (!a.keyframes.empty()) {
        specs = read_keyframe_specs(a.keyframes);
    } else if (cfg.data.contains("keyframes") && cfg.data.at("keyframes").is_array()) {
        specs = keyframe_specs_from_json(cfg.data.at("keyframes"), cfg.base_dir);
    } else {
        throw Error(ErrorCode::config, "train needs keyframes (--keyframes FILE or a \"keyframes\" list)");
    }
    std::vector<Keyframe> keys = load_keyframes(seq, specs);

    const fs::path out_dir = a.out;
    ensure_dir(out_dir);
    const fs::path ckpt_path = out_dir / "checkpoint.ckpt";
    TrainCallbacks callbacks;
    callbacks.on_checkpoint = [&](const Checkpoint& c) { save_checkpoint(ckpt_path, c); };
    callbacks.should_stop = [] { return g_interrupted.load(); };
    Checkpoint final = train(std::move(keys), config, callbacks);
    write_loss_history_csv(out_dir / "loss.csv", final.history);

    json report{{"checkpoint", ckpt_path.string()},
                {"loss_csv", (out_dir / "loss.csv").string()},
                {"steps", final.step},
                {"elapsed_seconds", final.elapsed_seconds}};
    report["loss"] = final.history.empty() ? json(nullptr) : final.history.back().loss.to_json();
    out << report.dump() << '\n';
    return 0;
}

// --------------------------------------------------------------------------- stylize

struct StylizeArgs {
    std::string config;
    std::string checkpoint;
    std::string frames;
    std::string out;
    std::string guidance;
    std::string masks;
    bool composite = false;
    int workers = 0;
    std::string order = "forward";
    uint64_t seed = 0;
};

int cmd_stylize(CLI::App& cmd, const StylizeArgs& a, std::ostream& out) {
    apply_config(cmd, load_config(a.config));
    if (a.checkpoint.empty() || a.frames.empty() || a.out.empty()) {
        throw Error(ErrorCode::config, "stylize needs --checkpoint, --frames and --out");
    }
    std::optional<fs::path> masks;
    if (!a.masks.empty()) masks = a.masks;
    Sequence seq = load_sequence(a.frames, masks);
    if (!a.guidance.empty()) load_guidance(seq, a.guidance);
    Stylizer stylizer(load_checkpoint(a.checkpoint));

    std::vector<size_t> order(seq.size());
    std::iota(order.begin(), order.end(), size_t{0});
    if (a.order == "reverse") {
        std::reverse(order.begin(), order.end());
    } else if (a.order == "shuffle") {
        std::mt19937_64 rng(a.seed);
        std::shuffle(order.begin(), order.end(), rng);
    } else if (a.order != "forward") {
        throw Error(ErrorCode::config, "order must be forward, reverse or shuffle");
    }
    int workers = a.workers > 0 ? a.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    Sequence result = stylize_sequence(stylizer, seq, workers, order, a.composite);

    ensure_dir(a.out);
    for (size_t i = 0; i < result.size(); ++i) write_png(fs::path(a.out) / frame_name(seq, i), result.frames[i].pixels);
    out << json{{"frames", result.size()}, {"out", a.out}}.dump() << '\n';
    return 0;
}

// --------------------------------------------------------------------------- filter

struct FilterArgs {
    std::string config;
    std::string frames;
    std::string out;
    int radius = 3;
    double sigma_t = 1.5;
    double sigma_r = 0.1;
    bool no_motion = false;
    MotionCompensation motion;
    int workers = 1;
};

int cmd_filter(CLI::App& cmd, const FilterArgs& a, std::ostream& out) {
    apply_config(cmd, load_config(a.config));
    if (a.frames.empty() || a.out.empty()) throw Error(ErrorCode::config, "filter needs --frames and --out");
    Sequence seq = load_sequence(a.frames);
    TemporalFilterParams params{a.radius, a.sigma_t, a.sigma_r, std::nullopt};
    if (!a.no_motion) params.motion = a.motion;
    Sequence filtered = bilateral_temporal_filter(seq, params, a.workers);
    ensure_dir(a.out);
    for (size_t i = 0; i < filtered.size(); ++i) {
        write_png(fs::path(a.out) / frame_name(seq, i), filtered.frames[i].pixels);
    }
    out << json{{"frames", filtered.size()}, {"out", a.out}}.dump() << '\n';
    return 0;
}

// --------------------------------------------------------------------------- guidance / register

struct GuidanceArgs {
    std::string config;
    std::string frames;
    std::vector<int> keyframes;
    std::string out;
    uint64_t seed = 1;
    int count = -1;
    double sigma_min = 6.0;
    double sigma_max = 12.0;
    int spacing = 16;
    int iterations = 10;
    double rigidity = 1.0;
    int block_radius = 7;
    int search_radius = 11;
    int workers = 1;
};

GuidanceParams guidance_params(const GuidanceArgs& a) {
    GuidanceParams p;
    p.grid_spacing = a.spacing;
    p.rigidity_weight = a.rigidity;
    p.arap.iterations = a.iterations;
    p.arap.block_radius = a.block_radius;
    p.arap.search_radius = a.search_radius;
    return p;
}

int cmd_guidance(CLI::App& cmd, const GuidanceArgs& a, std::ostream& out) {
    apply_config(cmd, load_config(a.config));
    if (a.frames.empty() || a.out.empty() || a.keyframes.empty()) {
        throw Error(ErrorCode::config, "guidance needs --frames, --keyframe and --out");
    }
    Sequence seq = load_sequence(a.frames);
    const GuidanceParams params = guidance_params(a);
    const int count = a.count >= 0 ? a.count : default_gaussian_count(seq.width(), seq.height());

    // One Gaussian set and grid per keyframe; each frame takes the nearest keyframe's layer.
    std::vector<int> keys = a.keyframes;
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::map<int, GaussianSet> sets;
    for (size_t k = 0; k < keys.size(); ++k) {
        if (keys[k] < 0 || static_cast<size_t>(keys[k]) >= seq.size()) {
            throw Error(ErrorCode::index_out_of_range, "keyframe " + std::to_string(keys[k]) + " out of range");
        }
        sets[keys[k]] = generate_gaussians(seq.width(), seq.height(), count, a.sigma_min, a.sigma_max, a.seed + k);
    }
    ensure_dir(a.out);
    parallel_for(seq.size(), a.workers, [&](size_t i) {
        int key = select_keyframe(static_cast<int>(i), keys);
        Keyframe kf{key, seq.frames[key].pixels, seq.frames[key].pixels, Mask::full(seq.width(), seq.height()), {}};
        GuidanceLayer layer = guidance_for_frame(seq, kf, static_cast<int>(i), sets.at(key), params);
        write_png(fs::path(a.out) / frame_name(seq, i), layer.pixels);
    });
    out << json{{"frames", seq.size()}, {"gaussians", count}, {"out", a.out}}.dump() << '\n';
    return 0;
}

int cmd_register(CLI::App& cmd, const GuidanceArgs& a, std::ostream& out) {
    apply_config(cmd, load_config(a.config));
    if (a.frames.empty() || a.out.empty() || a.keyframes.size() != 1) {
        throw Error(ErrorCode::config, "register needs --frames, one --keyframe and --out");
    }
    Sequence seq = load_sequence(a.frames);
    const int key = a.keyframes.front();
    if (key < 0 || static_cast<size_t>(key) >= seq.size()) {
        throw Error(ErrorCode::index_out_of_range, "keyframe " + std::to_string(key) + " out of range");
    }
    const GuidanceParams params = guidance_params(a);
    ensure_dir(a.out);
    json grids = json::array();
    std::vector<json> per_frame(seq.size());
    parallel_for(seq.size(), a.workers, [&](size_t i) {
        const Image& ref = seq.frames[key].pixels;
        DeformableGrid grid = DeformableGrid::regular(ref.width, ref.height, params.grid_spacing, params.rigidity_weight);
        if (static_cast<int>(i) != key) grid = arap_register(grid, ref, seq.frames[i].pixels, params.arap);
        Image overlay = seq.frames[i].pixels;
        draw_grid_overlay(overlay, grid);
        write_png(fs::path(a.out) / frame_name(seq, i), overlay);
        per_frame[i] = {{"frame", i}, {"mean_edge_change", mean_edge_length_change(grid)}};
    });
    for (auto& j : per_frame) grids.push_back(std::move(j));
    out << json{{"frames", grids}}.dump() << '\n';
    return 0;
}

// --------------------------------------------------------------------------- hyperopt

struct HyperoptArgs {
    std::string config;
    std::string spec;
    std::string out;
    std::string summary_dir;
    bool surrogate = false;
    bool allow_large = false;
    int workers = 0;
};

int cmd_hyperopt(CLI::App& cmd, const HyperoptArgs& a, std::ostream& out, std::ostream& err) {
    apply_config(cmd, load_config(a.config));
    if (a.spec.empty()) throw Error(ErrorCode::config, "hyperopt needs --spec");
    SearchSpec spec = read_search_spec(a.spec);
    if (!a.out.empty()) spec.results_path = a.out;
    if (a.workers > 0) spec.workers = a.workers;
    spec.validate();
    if (!spec.desk_scale()) {
        err << "grid has " << spec.axes.size() << " settings, beyond desk scale (" << SearchSpec::desk_scale_limit
            << ")\n";
        if (!a.allow_large) throw Error(ErrorCode::config, "refusing an out-of-desk-scale grid without --allow-large");
    }
    std::vector<SearchResult> results;
    if (a.surrogate) {
        results = run_grid_search(spec, SurrogateEvaluator{});
    } else {
        results = run_grid_search(spec, TrainingEvaluator{});
    }
    if (!a.summary_dir.empty()) {
        ensure_dir(a.summary_dir);
        for (const char* axis : {"W_p", "N_b", "alpha", "N_r"}) {
            std::ofstream csv(fs::path(a.summary_dir) / (std::string("summary_") + axis + ".csv"));
            if (!csv) throw Error(ErrorCode::io, "cannot write summary in " + a.summary_dir);
            csv << curve_csv(summarize(results, axis));
        }
    }
    json report{{"results", results.size()}, {"results_path", spec.results_path.string()}};
    report["best"] = results.empty() ? json(nullptr) : results.front().to_json();
    out << report.dump() << '\n';
    return 0;
}

// --------------------------------------------------------------------------- serve / bench

struct ServeArgs {
    std::string config;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    std::string checkpoint_dir;
};

int cmd_serve(CLI::App& cmd, const ServeArgs& a, std::ostream& out) {
    apply_config(cmd, load_config(a.config));
    ServiceOptions options;
    options.host = a.host;
    options.port = a.port;
    if (!a.static_dir.empty()) options.static_dir = a.static_dir;
    if (!a.checkpoint_dir.empty()) {
        ensure_dir(a.checkpoint_dir);
        options.checkpoint_dir = a.checkpoint_dir;
    }
    Service service(options);
    int port = service.start();
    out << json{{"listening", a.host + ":" + std::to_string(port)}}.dump() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    return 0;
}

struct BenchArgs {
    std::string config;
    std::string checkpoint;
    int size = 640;
    int width = 0;
    int height = 0;
    int runs = 10;
    int warmups = 2;
};

int cmd_bench(CLI::App& cmd, const BenchArgs& a, std::ostream& out) {
    apply_config(cmd, load_config(a.config));
    if (a.checkpoint.empty()) throw Error(ErrorCode::config, "bench needs --checkpoint");
    int w = a.width > 0 ? a.width : a.size;
    int h = a.height > 0 ? a.height : a.size;
    if (w <= 0 || h <= 0) throw Error(ErrorCode::config, "frame size must be positive");
    Stylizer stylizer(load_checkpoint(a.checkpoint));
    InferenceTiming t = measure_inference(stylizer, w, h, a.warmups, a.runs);
    out << json{{"fps", t.fps}, {"median_ms", t.median_ms}, {"width", w}, {"height", h}, {"runs", t.runs}}.dump()
        << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-shot video stylization: training, inference and temporal guidance"};
    app.name("patchstyle");
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a generator on stylized keyframes");
    t->add_option("--config", train.config, "JSON job file");
    t->add_option("--frames", train.frames, "Directory of input frames (PNG)");
    t->add_option("--masks", train.masks, "Directory of per-frame masks");
    t->add_option("--guidance", train.guidance, "Directory of guidance layers");
    t->add_option("--keyframes", train.keyframes, "JSON list of {index, style, mask}");
    t->add_option("--out", train.out, "Output directory for checkpoint.ckpt and loss.csv");
    t->add_option("--steps", train.steps, "Step budget");
    t->add_option("--seconds", train.seconds, "Wall-clock budget");
    t->add_option("--seed", train.seed, "Random seed");
    t->add_option("--mode", train.mode, "patch or fullframe");

    StylizeArgs sty;
    auto* s = app.add_subcommand("stylize", "Stylize frames with a checkpoint");
    s->add_option("--config", sty.config, "JSON config");
    s->add_option("--checkpoint", sty.checkpoint, "Checkpoint file");
    s->add_option("--frames", sty.frames, "Directory of input frames");
    s->add_option("--out", sty.out, "Output directory");
    s->add_option("--guidance", sty.guidance, "Directory of guidance layers");
    s->add_option("--masks", sty.masks, "Directory of masks");
    s->add_flag("--composite", sty.composite, "Keep input pixels outside the masks");
    s->add_option("--workers", sty.workers, "Parallel workers (0 = all cores)");
    s->add_option("--order", sty.order, "forward, reverse or shuffle");
    s->add_option("--seed", sty.seed, "Shuffle seed");

    FilterArgs filt;
    auto* f = app.add_subcommand("filter", "Temporal bilateral pre-filter");
    f->add_option("--config", filt.config, "JSON config");
    f->add_option("--frames,--in", filt.frames, "Directory of input frames");
    f->add_option("--out", filt.out, "Output directory");
    f->add_option("--radius", filt.radius, "Temporal radius in frames")->capture_default_str();
    f->add_option("--sigma-t", filt.sigma_t, "Temporal sigma in frames")->capture_default_str();
    f->add_option("--sigma-r", filt.sigma_r, "Range sigma in intensity")->capture_default_str();
    f->add_flag("--no-motion", filt.no_motion, "Disable motion compensation");
    f->add_option("--motion-spacing", filt.motion.grid_spacing, "Motion lattice spacing")->capture_default_str();
    f->add_option("--motion-block", filt.motion.block_radius, "Motion block radius")->capture_default_str();
    f->add_option("--motion-search", filt.motion.search_radius, "Motion search radius")->capture_default_str();
    f->add_option("--workers", filt.workers, "Parallel workers")->capture_default_str();

    GuidanceArgs guide;
    auto add_guidance_options = [](CLI::App* c, GuidanceArgs& g) {
        c->add_option("--config", g.config, "JSON config");
        c->add_option("--frames", g.frames, "Directory of input frames");
        c->add_option("--keyframe", g.keyframes, "Keyframe index (repeatable)");
        c->add_option("--out", g.out, "Output directory");
        c->add_option("--spacing", g.spacing, "Grid spacing")->capture_default_str();
        c->add_option("--iterations", g.iterations, "ARAP iterations")->capture_default_str();
        c->add_option("--rigidity", g.rigidity, "Rigidity weight")->capture_default_str();
        c->add_option("--block-radius", g.block_radius, "Block-match radius")->capture_default_str();
        c->add_option("--search-radius", g.search_radius, "Block-match search radius")->capture_default_str();
        c->add_option("--workers", g.workers, "Parallel workers")->capture_default_str();
    };
    auto* g = app.add_subcommand("guidance", "Generate and advect the Gaussian guidance layer");
    add_guidance_options(g, guide);
    g->add_option("--seed", guide.seed, "Gaussian seed")->capture_default_str();
    g->add_option("--count", guide.count, "Gaussian count (default area/2000)");
    g->add_option("--sigma-min", guide.sigma_min, "Smallest sigma")->capture_default_str();
    g->add_option("--sigma-max", guide.sigma_max, "Largest sigma")->capture_default_str();

    GuidanceArgs reg;
    auto* r = app.add_subcommand("register", "Write registration grid overlays (debugging)");
    add_guidance_options(r, reg);

    HyperoptArgs hyp;
    auto* h = app.add_subcommand("hyperopt", "Constrained grid search over training hyper-parameters");
    h->add_option("--config", hyp.config, "JSON config");
    h->add_option("--spec", hyp.spec, "Search spec JSON");
    h->add_option("--out", hyp.out, "Results file (JSON lines)");
    h->add_option("--summary-dir", hyp.summary_dir, "Write per-axis summary CSVs here");
    h->add_flag("--surrogate", hyp.surrogate, "Use the analytic surrogate instead of training");
    h->add_flag("--allow-large", hyp.allow_large, "Run grids beyond desk scale");
    h->add_option("--workers", hyp.workers, "Parallel workers (overrides the spec)");

    ServeArgs srv;
    auto* v = app.add_subcommand("serve", "Run the interactive session service");
    v->add_option("--config", srv.config, "JSON config");
    v->add_option("--host", srv.host, "Bind address")->capture_default_str();
    v->add_option("--port", srv.port, "Port (0 = any)")->capture_default_str();
    v->add_option("--static", srv.static_dir, "Directory served under /");
    v->add_option("--checkpoint-dir", srv.checkpoint_dir, "Write each session's latest checkpoint here");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Measure full-frame inference throughput");
    b->add_option("--config", bench.config, "JSON config");
    b->add_option("--checkpoint", bench.checkpoint, "Checkpoint file");
    b->add_option("--size", bench.size, "Square frame size")->capture_default_str();
    b->add_option("--width", bench.width, "Frame width (overrides --size)");
    b->add_option("--height", bench.height, "Frame height (overrides --size)");
    b->add_option("--runs", bench.runs, "Timed runs")->capture_default_str();
    b->add_option("--warmups", bench.warmups, "Discarded warm-up runs")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "patchstyle: " << e.what() << '\n';
        if (args.empty() || e.get_exit_code() != 0) err << "run 'patchstyle --help' for usage\n";
        return 2;
    }

    g_interrupted = false;
    try {
        if (*t) return cmd_train(*t, train, out);
        if (*s) return cmd_stylize(*s, sty, out);
        if (*f) return cmd_filter(*f, filt, out);
        if (*g) return cmd_guidance(*g, guide, out);
        if (*r) return cmd_register(*r, reg, out);
        if (*h) return cmd_hyperopt(*h, hyp, out, err);
        if (*v) return cmd_serve(*v, srv, out);
        if (*b) return cmd_bench(*b, bench, out);
    } catch (const Error& e) {
        err << "patchstyle: " << to_string(e.code()) << ": " << e.what() << '\n';
        return e.code() == ErrorCode::config ? 2 : 1;
    } catch (const std::exception& e) {
        err << "patchstyle: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace patchstyle
