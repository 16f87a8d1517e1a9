#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "patchstyle/dataset.hpp"
#include "patchstyle/error.hpp"

namespace patchstyle {
namespace {

using testing::thrown_code;

Sequence textured_sequence(int frames, int w, int h) {
    std::vector<Image> images;
    for (int i = 0; i < frames; ++i) images.push_back(testing::texture(w, h, 100 + i));
    return make_sequence(std::move(images));
}

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(w, h, false);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.set(x, y, true);
    return m;
}

float planar(const std::vector<float>& data, int slot, int channels, int c, int w, int h, int x, int y) {
    return data[((static_cast<size_t>(slot) * channels + c) * h + y) * w + x];
}

TEST(Sequence, ValidateReportsEachInconsistency) {
    Sequence s = textured_sequence(3, 16, 12);
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(thrown_code([] { Sequence{}.validate(); }), ErrorCode::empty_input);

    Sequence bad = s;
    bad.frames[1].pixels = Image(15, 12, 3);
    EXPECT_EQ(thrown_code([&] { bad.validate(); }), ErrorCode::dimension_mismatch);

    bad = s;
    bad.masks = {Mask::full(16, 12)};
    EXPECT_EQ(thrown_code([&] { bad.validate(); }), ErrorCode::pairing);

    bad = s;
    bad.frames[2].index = 7;
    EXPECT_EQ(thrown_code([&] { bad.validate(); }), ErrorCode::invalid_argument);
}

TEST(Sequence, NetworkInputAppendsGuidance) {
    Sequence s = textured_sequence(2, 8, 8);
    EXPECT_EQ(s.network_input(0).channels, 3);
    s.guidance = {GuidanceLayer{Image(8, 8, 3, 0.25f)}, GuidanceLayer{Image(8, 8, 3, 0.5f)}};
    Image in = s.network_input(1);
    ASSERT_EQ(in.channels, 6);
    EXPECT_EQ(in.at(3, 3, 4), 0.5f);
    EXPECT_EQ(in.at(3, 3, 1), s.frames[1].pixels.at(3, 3, 1));
    EXPECT_EQ(thrown_code([&] { s.network_input(2); }), ErrorCode::index_out_of_range);
}

TEST(LoadSequence, PairsMasksByNameAndSortsFrames) {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "frames");
    std::filesystem::create_directories(dir / "masks");
    Sequence s = textured_sequence(3, 10, 6);
    for (int i = 2; i >= 0; --i) {
        const std::string name = "f" + std::to_string(i) + ".png";
        write_png(dir / "frames" / name, s.frames[i].pixels);
        write_mask_png(dir / "masks" / name, rect_mask(10, 6, 0, 0, i + 1, 6));
    }
    Sequence loaded = load_sequence(dir / "frames", dir / "masks");
    ASSERT_EQ(loaded.size(), 3u);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(loaded.frames[i].index, i);
        EXPECT_EQ(loaded.names[i], "f" + std::to_string(i) + ".png");
        EXPECT_EQ(loaded.frames[i].pixels, quantize_8bit(s.frames[i].pixels));
        EXPECT_EQ(loaded.masks[i].count(), static_cast<size_t>(6 * (i + 1)));
    }
}

TEST(LoadSequence, RejectsBadInputs) {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "empty");
    EXPECT_EQ(thrown_code([&] { load_sequence(dir / "empty"); }), ErrorCode::empty_input);
    EXPECT_EQ(thrown_code([&] { load_sequence(dir / "missing"); }), ErrorCode::io);

    std::filesystem::create_directories(dir / "mixed");
    write_png(dir / "mixed" / "a.png", Image(8, 8, 3));
    write_png(dir / "mixed" / "b.png", Image(9, 8, 3));
    EXPECT_EQ(thrown_code([&] { load_sequence(dir / "mixed"); }), ErrorCode::dimension_mismatch);

    std::filesystem::create_directories(dir / "frames");
    std::filesystem::create_directories(dir / "masks");
    write_png(dir / "frames" / "a.png", Image(8, 8, 3));
    write_png(dir / "frames" / "b.png", Image(8, 8, 3));
    write_mask_png(dir / "masks" / "a.png", Mask::full(8, 8));
    EXPECT_EQ(thrown_code([&] { load_sequence(dir / "frames", dir / "masks"); }), ErrorCode::pairing);
    write_mask_png(dir / "masks" / "c.png", Mask::full(8, 8));
    EXPECT_EQ(thrown_code([&] { load_sequence(dir / "frames", dir / "masks"); }), ErrorCode::pairing);
}

TEST(LoadGuidance, PairsByFileName) {
    testing::TempDir dir;
    std::filesystem::create_directories(dir / "frames");
    std::filesystem::create_directories(dir / "guide");
    testing::write_frames(dir / "frames", {Image(8, 8, 3), Image(8, 8, 3)});
    Sequence s = load_sequence(dir / "frames");
    EXPECT_EQ(thrown_code([&] { load_guidance(s, dir / "guide"); }), ErrorCode::pairing);
    testing::write_frames(dir / "guide", {Image(8, 8, 3, 1.0f), Image(8, 8, 3, 0.0f)});
    load_guidance(s, dir / "guide");
    ASSERT_TRUE(s.has_guidance());
    EXPECT_EQ(s.guidance[0].pixels.at(0, 0, 0), 1.0f);
    EXPECT_EQ(s.guidance[1].pixels.at(0, 0, 0), 0.0f);
}

TEST(Keyframes, SpecsResolveRelativePaths) {
    auto list = nlohmann::json::parse(R"([{"index": 2, "style": "s.png", "mask": "/abs/m.png"}, {"index": 0, "style": "x/y.png"}])");
    auto specs = keyframe_specs_from_json(list, "/base");
    ASSERT_EQ(specs.size(), 2u);
    EXPECT_EQ(specs[0].index, 2);
    EXPECT_EQ(specs[0].style, std::filesystem::path("/base/s.png"));
    EXPECT_EQ(*specs[0].mask, std::filesystem::path("/abs/m.png"));
    EXPECT_FALSE(specs[1].mask.has_value());
    EXPECT_EQ(thrown_code([] { keyframe_specs_from_json(nlohmann::json::object(), "."); }), ErrorCode::config);
    EXPECT_EQ(thrown_code([] { keyframe_specs_from_json(nlohmann::json::parse(R"([{"style": 3}])"), "."); }),
              ErrorCode::config);
}

TEST(Keyframes, MakeKeyframeChecksItsInputs) {
    Sequence s = textured_sequence(2, 12, 10);
    Keyframe k = make_keyframe(s, 1, Image(12, 10, 3, 0.5f));
    EXPECT_EQ(k.mask.count(), 120u);
    EXPECT_EQ(k.input, s.frames[1].pixels);
    EXPECT_EQ(thrown_code([&] { make_keyframe(s, 2, Image(12, 10, 3)); }), ErrorCode::index_out_of_range);
    EXPECT_EQ(thrown_code([&] { make_keyframe(s, 0, Image(11, 10, 3)); }), ErrorCode::dimension_mismatch);
    EXPECT_EQ(thrown_code([&] { make_keyframe(s, 0, Image(12, 10, 1)); }), ErrorCode::channel_mismatch);
    EXPECT_EQ(thrown_code([&] { make_keyframe(s, 0, Image(12, 10, 3), Mask(12, 10, false)); }),
              ErrorCode::invalid_argument);
}

TEST(PatchSampler, PatchesAreColocatedCropsCenteredInsideTheMask) {
    Sequence s = textured_sequence(2, 40, 30);
    Image style = testing::procedural_style(s.frames[0].pixels);
    Keyframe k = make_keyframe(s, 0, style, rect_mask(40, 30, 3, 4, 20, 9));
    PatchSampler sampler({k}, 16);
    std::mt19937_64 rng(9);
    PatchBatch b = sampler.sample(64, rng);
    ASSERT_EQ(b.count, 64);
    for (int i = 0; i < b.count; ++i) {
        const auto& o = b.origins[i];
        EXPECT_TRUE(k.mask.at(o.x, o.y));
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const int sx = reflect_index(o.x - 8 + x, 40);
                const int sy = reflect_index(o.y - 8 + y, 30);
                for (int c = 0; c < 3; ++c) {
                    ASSERT_EQ(planar(b.inputs, i, 3, c, 16, 16, x, y), k.input.at(sx, sy, c));
                    ASSERT_EQ(planar(b.targets, i, 3, c, 16, 16, x, y), k.style.at(sx, sy, c));
                }
                ASSERT_EQ(planar(b.loss_masks, i, 1, 0, 16, 16, x, y), k.mask.at(sx, sy) ? 1.0f : 0.0f);
            }
    }
}

// Centers are uniform over the union of masked pixels, so each keyframe is drawn
// in proportion to its mask area.
TEST(PatchSampler, CentersAreUniformOverPooledMaskPixels) {
    Sequence s = textured_sequence(2, 32, 32);
    Keyframe a = make_keyframe(s, 0, s.frames[0].pixels, rect_mask(32, 32, 0, 0, 4, 4));
    Keyframe b = make_keyframe(s, 1, s.frames[1].pixels, rect_mask(32, 32, 10, 10, 14, 22));
    PatchSampler sampler({a, b}, 8);
    EXPECT_EQ(sampler.pool_size(), 16u + 48u);

    std::map<std::tuple<int, int, int>, int> counts;
    std::mt19937_64 rng(4);
    const int draws = 32000;
    for (int i = 0; i < draws / 100; ++i) {
        PatchBatch batch = sampler.sample(100, rng);
        for (const auto& o : batch.origins) ++counts[{o.keyframe, o.x, o.y}];
    }
    ASSERT_EQ(counts.size(), 64u);
    const double expected = static_cast<double>(draws) / 64.0;
    double chi2 = 0.0;
    for (const auto& [key, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
    // 63 degrees of freedom; the 0.999 quantile is about 103.4.
    EXPECT_LT(chi2, 103.4);
}

TEST(PatchSampler, SameSeedSameBatch) {
    Sequence s = textured_sequence(1, 24, 24);
    PatchSampler sampler({make_keyframe(s, 0, s.frames[0].pixels)}, 8);
    std::mt19937_64 r1(3), r2(3);
    auto a = sampler.sample(5, r1);
    auto b = sampler.sample(5, r2);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_EQ(a.targets, b.targets);
}

TEST(PatchSampler, RejectsImpossibleConfigurations) {
    Sequence s = textured_sequence(1, 24, 20);
    Keyframe k = make_keyframe(s, 0, s.frames[0].pixels);
    EXPECT_EQ(thrown_code([&] { PatchSampler({k}, 21); }), ErrorCode::invalid_argument);
    EXPECT_EQ(thrown_code([&] { PatchSampler({k}, 4); }), ErrorCode::invalid_argument);
    EXPECT_EQ(thrown_code([] { PatchSampler({}, 8); }), ErrorCode::empty_input);
    Keyframe hollow = k;
    hollow.mask = Mask(24, 20, false);
    EXPECT_EQ(thrown_code([&] { PatchSampler({hollow}, 8); }), ErrorCode::sampling);
    PatchSampler ok({k}, 8);
    std::mt19937_64 rng(1);
    EXPECT_EQ(thrown_code([&] { ok.sample(0, rng); }), ErrorCode::invalid_argument);
    const PatchOrigin bad{3, 1, 1};
    EXPECT_EQ(thrown_code([&] { ok.extract(std::span(&bad, 1)); }), ErrorCode::index_out_of_range);
}

TEST(PatchSampler, GuidanceChannelsFollowTheInput) {
    Sequence s = textured_sequence(1, 16, 16);
    s.guidance = {GuidanceLayer{testing::texture(16, 16, 77)}};
    Keyframe k = make_keyframe(s, 0, s.frames[0].pixels);
    ASSERT_EQ(k.input_channels(), 6);
    PatchSampler sampler({k}, 8);
    const PatchOrigin o{0, 8, 8};
    PatchBatch b = sampler.extract(std::span(&o, 1));
    EXPECT_EQ(b.input_channels, 6);
    EXPECT_EQ(planar(b.inputs, 0, 6, 4, 8, 8, 2, 3), s.guidance[0].pixels.at(6, 7, 1));
}

TEST(FullFrameBatch, PaddingIsExcludedFromTheLoss) {
    Sequence s = textured_sequence(2, 13, 9);
    std::vector<Keyframe> ks{make_keyframe(s, 0, s.frames[0].pixels), make_keyframe(s, 1, s.frames[1].pixels)};
    PatchBatch b = full_frame_batch(ks, 8);
    ASSERT_EQ(b.width, 16);
    ASSERT_EQ(b.height, 16);
    double sum = 0.0;
    for (float v : b.loss_masks) sum += v;
    EXPECT_EQ(sum, 2.0 * 13 * 9);
    EXPECT_EQ(planar(b.inputs, 1, 3, 2, 16, 16, 12, 8), s.frames[1].pixels.at(12, 8, 2));
}

TEST(TilePatches, CoversTheFrameOnAGrid) {
    Sequence s = textured_sequence(1, 20, 12);
    PatchBatch b = tile_patches(make_keyframe(s, 0, s.frames[0].pixels), 8, 4);
    EXPECT_EQ(b.count, 4 * 2);
    EXPECT_EQ(planar(b.inputs, 5, 3, 0, 8, 8, 0, 0), s.frames[0].pixels.at(4, 4, 0));
    EXPECT_THROW(tile_patches(make_keyframe(s, 0, s.frames[0].pixels), 13, 4), Error);
}

}  // namespace
}  // namespace patchstyle
