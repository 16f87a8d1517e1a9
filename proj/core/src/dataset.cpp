#include "patchstyle/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "patchstyle/error.hpp"

namespace patchstyle {

namespace fs = std::filesystem;

Image Sequence::network_input(size_t i) const {
    if (i >= frames.size()) throw Error(ErrorCode::index_out_of_range, "frame index out of range");
    if (!has_guidance()) return frames[i].pixels;
    return concat_channels(frames[i].pixels, guidance[i].pixels);
}

void Sequence::validate() const {
    if (frames.empty()) throw Error(ErrorCode::empty_input, "sequence has no frames");
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].index != static_cast<int>(i))
            throw Error(ErrorCode::invalid_argument, "frame indices must be contiguous from 0");
        if (!frames[i].pixels.same_extent(frames.front().pixels))
            throw Error(ErrorCode::dimension_mismatch, "frame " + std::to_string(i) + " differs in extent");
    }
    if (!masks.empty() && masks.size() != frames.size())
        throw Error(ErrorCode::pairing, "mask count does not match frame count");
    if (!guidance.empty() && guidance.size() != frames.size())
        throw Error(ErrorCode::pairing, "guidance count does not match frame count");
    for (const auto& m : masks)
        if (m.width != width() || m.height != height())
            throw Error(ErrorCode::dimension_mismatch, "mask extent differs from frames");
    for (const auto& g : guidance)
        if (g.pixels.width != width() || g.pixels.height != height())
            throw Error(ErrorCode::dimension_mismatch, "guidance extent differs from frames");
}

Sequence make_sequence(std::vector<Image> images) {
    Sequence seq;
    seq.frames.reserve(images.size());
    for (size_t i = 0; i < images.size(); ++i) seq.frames.push_back({static_cast<int>(i), std::move(images[i])});
    seq.validate();
    return seq;
}

Image Keyframe::network_input() const {
    return guidance ? concat_channels(input, guidance->pixels) : input;
}

std::vector<KeyframeSpec> keyframe_specs_from_json(const nlohmann::json& list, const fs::path& base_dir) {
    if (!list.is_array()) throw Error(ErrorCode::config, "keyframe spec must be a JSON list");
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    std::vector<KeyframeSpec> specs;
    try {
        for (const auto& entry : list) {
            KeyframeSpec spec;
            spec.index = entry.at("index").get<int>();
            spec.style = resolve(entry.at("style").get<std::string>());
            if (entry.contains("mask") && !entry.at("mask").is_null())
                spec.mask = resolve(entry.at("mask").get<std::string>());
            specs.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, std::string("malformed keyframe spec: ") + e.what());
    }
    return specs;
}

std::vector<KeyframeSpec> read_keyframe_specs(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::io, "cannot open keyframe spec '" + file.string() + "'");
    nlohmann::json list;
    try {
        in >> list;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, std::string("cannot parse keyframe spec: ") + e.what());
    }
    return keyframe_specs_from_json(list, file.parent_path());
}

std::vector<fs::path> list_png_files(const fs::path& directory) {
    if (!fs::is_directory(directory))
        throw Error(ErrorCode::io, "not a directory: '" + directory.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (!entry.is_regular_file()) continue;
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

Sequence load_sequence(const fs::path& directory, const std::optional<fs::path>& mask_directory) {
    const auto files = list_png_files(directory);
    if (files.empty()) throw Error(ErrorCode::empty_input, "no PNG frames in '" + directory.string() + "'");

    Sequence seq;
    for (size_t i = 0; i < files.size(); ++i) {
        Image img = read_image_rgb(files[i]);
        if (!seq.frames.empty() && !img.same_extent(seq.frames.front().pixels))
            throw Error(ErrorCode::dimension_mismatch,
                        "frame '" + files[i].filename().string() + "' is " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + ", expected " + std::to_string(seq.width()) + "x" +
                            std::to_string(seq.height()));
        seq.frames.push_back({static_cast<int>(i), std::move(img)});
        seq.names.push_back(files[i].filename().string());
    }

    if (mask_directory) {
        const auto mask_files = list_png_files(*mask_directory);
        if (mask_files.size() != files.size())
            throw Error(ErrorCode::pairing, "found " + std::to_string(mask_files.size()) + " masks for " +
                                                std::to_string(files.size()) + " frames");
        for (const auto& name : seq.names) {
            const fs::path path = *mask_directory / name;
            if (!fs::exists(path)) throw Error(ErrorCode::pairing, "no mask named '" + name + "'");
            Mask m = read_mask(path);
            if (m.width != seq.width() || m.height != seq.height())
                throw Error(ErrorCode::dimension_mismatch, "mask '" + name + "' differs in extent");
            seq.masks.push_back(std::move(m));
        }
    }
    return seq;
}

void load_guidance(Sequence& sequence, const fs::path& directory) {
    if (sequence.names.size() != sequence.size())
        throw Error(ErrorCode::pairing, "sequence has no file names to pair guidance with");
    std::vector<GuidanceLayer> layers;
    for (const auto& name : sequence.names) {
        const fs::path path = directory / name;
        if (!fs::exists(path)) throw Error(ErrorCode::pairing, "no guidance layer named '" + name + "'");
        Image g = read_image_rgb(path);
        if (!g.same_extent(sequence.frames.front().pixels))
            throw Error(ErrorCode::dimension_mismatch, "guidance '" + name + "' differs in extent");
        layers.push_back({std::move(g)});
    }
    sequence.guidance = std::move(layers);
}

Keyframe make_keyframe(const Sequence& sequence, int index, Image style, std::optional<Mask> mask) {
    if (index < 0 || index >= static_cast<int>(sequence.size()))
        throw Error(ErrorCode::index_out_of_range, "keyframe index " + std::to_string(index) + " outside sequence of " +
                                                       std::to_string(sequence.size()) + " frames");
    const Image& input = sequence.frames[index].pixels;
    if (!style.same_extent(input))
        throw Error(ErrorCode::dimension_mismatch, "style for keyframe " + std::to_string(index) +
                                                       " does not match the frame extent");
    if (style.channels != 3) throw Error(ErrorCode::channel_mismatch, "style must be RGB");
    Mask m = mask ? std::move(*mask) : Mask::full(input.width, input.height);
    if (m.width != input.width || m.height != input.height)
        throw Error(ErrorCode::dimension_mismatch, "mask for keyframe " + std::to_string(index) +
                                                       " does not match the frame extent");
    if (m.count() == 0)
        throw Error(ErrorCode::invalid_argument, "mask for keyframe " + std::to_string(index) + " is empty");

    Keyframe kf{index, input, std::move(style), std::move(m), std::nullopt};
    if (sequence.has_guidance()) kf.guidance = sequence.guidance[index];
    return kf;
}

std::vector<Keyframe> load_keyframes(const Sequence& sequence, std::span<const KeyframeSpec> specs) {
    std::vector<Keyframe> keyframes;
    for (const auto& spec : specs) {
        if (spec.index < 0 || spec.index >= static_cast<int>(sequence.size()))
            throw Error(ErrorCode::index_out_of_range, "keyframe index " + std::to_string(spec.index) +
                                                           " outside sequence of " + std::to_string(sequence.size()) +
                                                           " frames");
        std::optional<Mask> mask;
        if (spec.mask) mask = read_mask(*spec.mask);
        keyframes.push_back(make_keyframe(sequence, spec.index, read_image_rgb(spec.style), std::move(mask)));
    }
    return keyframes;
}

// ---------------------------------------------------------------------------
// Patch extraction

namespace {

void check_keyframes(std::span<const Keyframe> keyframes) {
    if (keyframes.empty()) throw Error(ErrorCode::empty_input, "no keyframes");
    const int channels = keyframes.front().input_channels();
    for (const auto& kf : keyframes) {
        if (kf.input_channels() != channels)
            throw Error(ErrorCode::channel_mismatch, "keyframes disagree on guidance channels");
        if (!kf.style.same_extent(kf.input) || kf.mask.width != kf.input.width || kf.mask.height != kf.input.height)
            throw Error(ErrorCode::dimension_mismatch, "keyframe " + std::to_string(kf.index) + " is inconsistent");
    }
}

// Copies a window whose top-left corner is (x0, y0) with reflection at frame borders.
void cut_patch(const Keyframe& kf, int x0, int y0, int w, int h, PatchBatch& batch, int slot) {
    const size_t plane = static_cast<size_t>(w) * h;
    float* in = batch.inputs.data() + static_cast<size_t>(slot) * batch.input_channels * plane;
    float* tg = batch.targets.data() + static_cast<size_t>(slot) * 3 * plane;
    float* lm = batch.loss_masks.data() + static_cast<size_t>(slot) * plane;
    const int W = kf.input.width;
    const int H = kf.input.height;
    for (int y = 0; y < h; ++y) {
        const int sy = reflect_index(y0 + y, H);
        for (int x = 0; x < w; ++x) {
            const int sx = reflect_index(x0 + x, W);
            const size_t p = static_cast<size_t>(y) * w + x;
            for (int c = 0; c < 3; ++c) {
                in[c * plane + p] = kf.input.at(sx, sy, c);
                tg[c * plane + p] = kf.style.at(sx, sy, c);
            }
            if (kf.guidance)
                for (int c = 0; c < 3; ++c) in[(3 + c) * plane + p] = kf.guidance->pixels.at(sx, sy, c);
            lm[p] = kf.mask.at(sx, sy) ? 1.0f : 0.0f;
        }
    }
}

PatchBatch allocate(int count, int w, int h, int channels) {
    PatchBatch b;
    b.count = count;
    b.width = w;
    b.height = h;
    b.input_channels = channels;
    const size_t plane = static_cast<size_t>(w) * h;
    b.inputs.assign(count * channels * plane, 0.0f);
    b.targets.assign(count * 3 * plane, 0.0f);
    b.loss_masks.assign(count * plane, 0.0f);
    b.origins.resize(count);
    return b;
}

}  // namespace

PatchSampler::PatchSampler(std::vector<Keyframe> keyframes, int patch_size)
    : keyframes_(std::move(keyframes)), patch_size_(patch_size) {
    check_keyframes(keyframes_);
    channels_ = keyframes_.front().input_channels();
    if (patch_size < 8) throw Error(ErrorCode::invalid_argument, "patch size must be at least 8");
    for (uint32_t k = 0; k < keyframes_.size(); ++k) {
        const auto& kf = keyframes_[k];
        if (patch_size > std::min(kf.input.width, kf.input.height))
            throw Error(ErrorCode::invalid_argument, "patch size " + std::to_string(patch_size) +
                                                         " exceeds keyframe extent");
        for (uint32_t i = 0; i < kf.mask.bits.size(); ++i)
            if (kf.mask.bits[i]) centers_.push_back({k, i});
    }
    if (centers_.empty()) throw Error(ErrorCode::sampling, "no valid patch centers inside keyframe masks");
}

PatchBatch PatchSampler::sample(int batch_size, std::mt19937_64& rng) const {
    if (batch_size <= 0) throw Error(ErrorCode::invalid_argument, "batch size must be positive");
    std::uniform_int_distribution<size_t> pick(0, centers_.size() - 1);
    std::vector<PatchOrigin> origins(batch_size);
    for (auto& o : origins) {
        const Center c = centers_[pick(rng)];
        const int w = keyframes_[c.keyframe].mask.width;
        o = {static_cast<int>(c.keyframe), static_cast<int>(c.offset % w), static_cast<int>(c.offset / w)};
    }
    return extract(origins);
}

PatchBatch PatchSampler::extract(std::span<const PatchOrigin> origins) const {
    PatchBatch batch = allocate(static_cast<int>(origins.size()), patch_size_, patch_size_, channels_);
    const int half = patch_size_ / 2;
    for (size_t i = 0; i < origins.size(); ++i) {
        const auto& o = origins[i];
        if (o.keyframe < 0 || o.keyframe >= static_cast<int>(keyframes_.size()))
            throw Error(ErrorCode::index_out_of_range, "patch origin refers to unknown keyframe");
        cut_patch(keyframes_[o.keyframe], o.x - half, o.y - half, patch_size_, patch_size_, batch, static_cast<int>(i));
        batch.origins[i] = o;
    }
    return batch;
}

PatchBatch sample_patch_batch(std::span<const Keyframe> keyframes, int patch_size, int batch_size,
                              std::mt19937_64& rng) {
    PatchSampler sampler(std::vector<Keyframe>(keyframes.begin(), keyframes.end()), patch_size);
    return sampler.sample(batch_size, rng);
}

PatchBatch full_frame_batch(std::span<const Keyframe> keyframes, int multiple) {
    check_keyframes(keyframes);
    const int W = keyframes.front().input.width;
    const int H = keyframes.front().input.height;
    for (const auto& kf : keyframes)
        if (kf.input.width != W || kf.input.height != H)
            throw Error(ErrorCode::dimension_mismatch, "full-frame batches need keyframes of equal extent");
    const int pw = (W + multiple - 1) / multiple * multiple;
    const int ph = (H + multiple - 1) / multiple * multiple;
    PatchBatch batch = allocate(static_cast<int>(keyframes.size()), pw, ph, keyframes.front().input_channels());
    const size_t plane = static_cast<size_t>(pw) * ph;
    for (size_t k = 0; k < keyframes.size(); ++k) {
        cut_patch(keyframes[k], 0, 0, pw, ph, batch, static_cast<int>(k));
        float* lm = batch.loss_masks.data() + k * plane;
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x)
                if (x >= W || y >= H) lm[static_cast<size_t>(y) * pw + x] = 0.0f;
        batch.origins[k] = {static_cast<int>(k), W / 2, H / 2};
    }
    return batch;
}

PatchBatch tile_patches(const Keyframe& keyframe, int patch_size, int stride) {
    if (patch_size <= 0 || stride <= 0) throw Error(ErrorCode::invalid_argument, "patch size and stride must be positive");
    const int W = keyframe.input.width;
    const int H = keyframe.input.height;
    std::vector<std::pair<int, int>> corners;
    for (int y = 0; y + patch_size <= H; y += stride)
        for (int x = 0; x + patch_size <= W; x += stride) corners.emplace_back(x, y);
    if (corners.empty()) throw Error(ErrorCode::invalid_argument, "patch larger than keyframe");
    PatchBatch batch = allocate(static_cast<int>(corners.size()), patch_size, patch_size, keyframe.input_channels());
    for (size_t i = 0; i < corners.size(); ++i) {
        const auto [x0, y0] = corners[i];
        cut_patch(keyframe, x0, y0, patch_size, patch_size, batch, static_cast<int>(i));
        batch.origins[i] = {0, x0 + patch_size / 2, y0 + patch_size / 2};
    }
    return batch;
}

}  // namespace patchstyle
