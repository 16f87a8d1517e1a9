#include "patchstyle/train_config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "patchstyle/error.hpp"

namespace patchstyle {

std::string to_string(TrainMode mode) { return mode == TrainMode::patch ? "patch" : "fullframe"; }

std::string to_string(Augmentation a) {
    switch (a) {
        case Augmentation::none: return "none";
        case Augmentation::gaussian_noise: return "gaussian-noise";
        case Augmentation::pixel_erase: return "pixel-erase";
        case Augmentation::occlusion: return "occlusion";
        case Augmentation::dropout_map: return "dropout-map";
        case Augmentation::dropout_pixel: return "dropout-pixel";
    }
    return "none";
}

TrainMode parse_train_mode(const std::string& text) {
    if (text == "patch") return TrainMode::patch;
    if (text == "fullframe") return TrainMode::fullframe;
    throw Error(ErrorCode::config, "unknown training mode '" + text + "'");
}

Augmentation parse_augmentation(const std::string& text) {
    for (auto a : {Augmentation::none, Augmentation::gaussian_noise, Augmentation::pixel_erase, Augmentation::occlusion,
                   Augmentation::dropout_map, Augmentation::dropout_pixel})
        if (to_string(a) == text) return a;
    throw Error(ErrorCode::config, "unknown augmentation '" + text + "'");
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::config, msg); };
    using R = HyperParameterRange;

    if (patch_size < 8) fail("patch_size must be at least 8");
    if (batch_size < 1) fail("batch_size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
    if (resnet_blocks < 1) fail("resnet_blocks must be at least 1");
    if (base_filters < 1 || discriminator_filters < 1) fail("filter counts must be positive");
    if (loss_weights.l1 < 0 || loss_weights.adversarial < 0 || loss_weights.perceptual < 0)
        fail("loss weights must be non-negative");
    if (budget.steps && budget.seconds) fail("budget must be either steps or seconds, not both");
    if (budget.steps && *budget.steps < 0) fail("step budget must be non-negative");
    if (budget.seconds && !(*budget.seconds > 0.0)) fail("wall-clock budget must be positive");
    if (!(checkpoint_interval_seconds > 0.0)) fail("checkpoint_interval_seconds must be positive");
    if (checkpoint_interval_steps < 0) fail("checkpoint_interval_steps must be non-negative");
    if (augmentation_strength < 0.0 || augmentation_strength >= 1.0) fail("augmentation_strength must be in [0,1)");
    if (perceptual.mode == PerceptualConfig::Mode::pretrained && perceptual.weights.empty())
        fail("pretrained perceptual mode needs a weights file");

    const NetConfig net = net_config();
    net.validate();
    if (mode == TrainMode::patch && patch_size % net.downsample_factor() != 0)
        fail("patch_size must be a multiple of " + std::to_string(net.downsample_factor()));

    if (!allow_out_of_range) {
        if (patch_size < R::patch_min || patch_size > R::patch_max) fail("patch_size outside [12,188]");
        if (batch_size < R::batch_min || batch_size > R::batch_max) fail("batch_size outside [5,1000]");
        if (resnet_blocks < R::blocks_min || resnet_blocks > R::blocks_max) fail("resnet_blocks outside [1,40]");
        if (learning_rate < R::lr_min * (1 - 1e-9) || learning_rate > R::lr_max * (1 + 1e-9))
            fail("learning_rate outside [0.0002,0.0032]");
    }
}

NetConfig TrainConfig::net_config() const {
    NetConfig n;
    n.resnet_blocks = resnet_blocks;
    n.base_filters = base_filters;
    n.input_channels = use_guidance ? 6 : 3;
    return n;
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j;
    j["patch_size"] = patch_size;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["resnet_blocks"] = resnet_blocks;
    j["base_filters"] = base_filters;
    j["discriminator_filters"] = discriminator_filters;
    j["loss_weights"] = {{"l1", loss_weights.l1},
                         {"adversarial", loss_weights.adversarial},
                         {"perceptual", loss_weights.perceptual}};
    nlohmann::json b = nlohmann::json::object();
    if (budget.steps) b["steps"] = *budget.steps;
    if (budget.seconds) b["seconds"] = *budget.seconds;
    j["budget"] = b;
    j["seed"] = seed;
    j["use_guidance"] = use_guidance;
    j["mode"] = to_string(mode);
    j["augmentation"] = to_string(augmentation);
    j["augmentation_strength"] = augmentation_strength;
    j["checkpoint_interval_seconds"] = checkpoint_interval_seconds;
    j["checkpoint_interval_steps"] = checkpoint_interval_steps;
    j["allow_out_of_range"] = allow_out_of_range;
    j["perceptual"] = {{"mode", perceptual.mode == PerceptualConfig::Mode::random ? "random" : "pretrained"},
                       {"seed", perceptual.seed},
                       {"weights", perceptual.weights.string()}};
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.patch_size = j.value("patch_size", c.patch_size);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.resnet_blocks = j.value("resnet_blocks", c.resnet_blocks);
        c.base_filters = j.value("base_filters", c.base_filters);
        c.discriminator_filters = j.value("discriminator_filters", c.discriminator_filters);
        if (j.contains("loss_weights")) {
            const auto& w = j.at("loss_weights");
            c.loss_weights.l1 = w.value("l1", c.loss_weights.l1);
            c.loss_weights.adversarial = w.value("adversarial", c.loss_weights.adversarial);
            c.loss_weights.perceptual = w.value("perceptual", c.loss_weights.perceptual);
        }
        if (j.contains("budget")) {
            const auto& b = j.at("budget");
            c.budget = Budget::unbounded();
            if (b.contains("steps")) c.budget.steps = b.at("steps").get<int64_t>();
            if (b.contains("seconds")) c.budget.seconds = b.at("seconds").get<double>();
        }
        c.seed = j.value("seed", c.seed);
        c.use_guidance = j.value("use_guidance", c.use_guidance);
        if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
        if (j.contains("augmentation")) c.augmentation = parse_augmentation(j.at("augmentation").get<std::string>());
        c.augmentation_strength = j.value("augmentation_strength", c.augmentation_strength);
        c.checkpoint_interval_seconds = j.value("checkpoint_interval_seconds", c.checkpoint_interval_seconds);
        c.checkpoint_interval_steps = j.value("checkpoint_interval_steps", c.checkpoint_interval_steps);
        c.allow_out_of_range = j.value("allow_out_of_range", c.allow_out_of_range);
        if (j.contains("perceptual")) {
            const auto& p = j.at("perceptual");
            const auto mode = p.value("mode", std::string("random"));
            if (mode == "random")
                c.perceptual.mode = PerceptualConfig::Mode::random;
            else if (mode == "pretrained")
                c.perceptual.mode = PerceptualConfig::Mode::pretrained;
            else
                throw Error(ErrorCode::config, "unknown perceptual mode '" + mode + "'");
            c.perceptual.seed = p.value("seed", c.perceptual.seed);
            c.perceptual.weights = p.value("weights", std::string());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, std::string("malformed training config: ") + e.what());
    }
    return c;
}

std::string TrainConfig::hash() const { return fnv1a_hex(to_json().dump()); }

TrainConfig read_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, std::string("cannot parse config: ") + e.what());
    }
    return TrainConfig::from_json(j.contains("train") ? j.at("train") : j);
}

// ---------------------------------------------------------------------------

nlohmann::json LossBreakdown::to_json() const {
    return {{"l1", l1}, {"adv_g", adversarial_g}, {"adv_d", adversarial_d}, {"perceptual", perceptual}, {"total", total}};
}

LossBreakdown LossBreakdown::from_json(const nlohmann::json& j) {
    LossBreakdown b;
    b.l1 = j.value("l1", 0.0);
    b.adversarial_g = j.value("adv_g", 0.0);
    b.adversarial_d = j.value("adv_d", 0.0);
    b.perceptual = j.value("perceptual", 0.0);
    b.total = j.value("total", 0.0);
    return b;
}

namespace {

constexpr const char* kGeneratorPrefix = "generator/";
constexpr const char* kDiscriminatorPrefix = "discriminator/";

}  // namespace

Archive to_archive(const Checkpoint& ckpt) {
    Archive a;
    a.meta["kind"] = "checkpoint";
    a.meta["net_config"] = ckpt.net.to_json();
    a.meta["train_config"] = ckpt.train_config;
    a.meta["config_hash"] = ckpt.config_hash;
    a.meta["step"] = ckpt.step;
    a.meta["elapsed_seconds"] = ckpt.elapsed_seconds;
    a.meta["target_version"] = ckpt.target_version;
    auto history = nlohmann::json::array();
    for (const auto& r : ckpt.history) {
        auto e = r.loss.to_json();
        e["step"] = r.step;
        e["elapsed_seconds"] = r.elapsed_seconds;
        if (r.target_changed) e["target_changed"] = true;
        history.push_back(std::move(e));
    }
    a.meta["loss_history"] = std::move(history);
    for (const auto& t : ckpt.generator) {
        TensorBlob b = t;
        b.name = kGeneratorPrefix + t.name;
        a.tensors.push_back(std::move(b));
    }
    for (const auto& t : ckpt.discriminator) {
        TensorBlob b = t;
        b.name = kDiscriminatorPrefix + t.name;
        a.tensors.push_back(std::move(b));
    }
    return a;
}

Checkpoint checkpoint_from_archive(const Archive& a) {
    if (a.meta.value("kind", std::string()) != "checkpoint") throw Error(ErrorCode::io, "archive is not a checkpoint");
    Checkpoint c;
    try {
        c.net = NetConfig::from_json(a.meta.at("net_config"));
        c.train_config = a.meta.value("train_config", nlohmann::json::object());
        c.config_hash = a.meta.value("config_hash", std::string());
        c.step = a.meta.value("step", int64_t{0});
        c.elapsed_seconds = a.meta.value("elapsed_seconds", 0.0);
        c.target_version = a.meta.value("target_version", int64_t{0});
        for (const auto& e : a.meta.value("loss_history", nlohmann::json::array())) {
            LossRecord r;
            r.step = e.value("step", int64_t{0});
            r.elapsed_seconds = e.value("elapsed_seconds", 0.0);
            r.loss = LossBreakdown::from_json(e);
            r.target_changed = e.value("target_changed", false);
            c.history.push_back(r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::io, std::string("corrupt checkpoint metadata: ") + e.what());
    }
    const std::string gp = kGeneratorPrefix;
    const std::string dp = kDiscriminatorPrefix;
    for (const auto& t : a.tensors) {
        TensorBlob b = t;
        if (t.name.starts_with(gp)) {
            b.name = t.name.substr(gp.size());
            c.generator.push_back(std::move(b));
        } else if (t.name.starts_with(dp)) {
            b.name = t.name.substr(dp.size());
            c.discriminator.push_back(std::move(b));
        }
    }
    c.net.validate();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_archive_atomic(path, to_archive(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_archive(read_archive(path)); }

std::string loss_history_csv(const std::vector<LossRecord>& history) {
    std::ostringstream out;
    out << "step,elapsed_seconds,l1,adv_g,adv_d,perceptual,total,target_changed\n";
    out << std::setprecision(9);
    for (const auto& r : history)
        out << r.step << ',' << r.elapsed_seconds << ',' << r.loss.l1 << ',' << r.loss.adversarial_g << ','
            << r.loss.adversarial_d << ',' << r.loss.perceptual << ',' << r.loss.total << ','
            << (r.target_changed ? 1 : 0) << '\n';
    return out.str();
}

void write_loss_history_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
    out << loss_history_csv(history);
}

}  // namespace patchstyle
