#include <gtest/gtest.h>

#include <cstdlib>

#include "fixtures.hpp"
#include "patchstyle/error.hpp"
#include "patchstyle/inference.hpp"
#include "patchstyle/trainer.hpp"

namespace patchstyle {
namespace {

using testing::thrown_code;

Checkpoint tiny_checkpoint(bool guidance = false) {
    auto shape = testing::moving_shape(2, 32);
    Sequence seq = make_sequence(shape.frames);
    Keyframe k = make_keyframe(seq, 0, shape.styles[0]);
    TrainConfig cfg = testing::tiny_config(1);
    if (guidance) {
        k.guidance = GuidanceLayer{testing::texture(32, 32, 1)};
        cfg.use_guidance = true;
    }
    return train({k}, cfg);
}

TEST(Stylizer, OddExtentsArePaddedAndCroppedBack) {
    Stylizer s(tiny_checkpoint());
    Image frame = testing::texture(37, 41, 3);
    Image out = s.stylize(frame);
    EXPECT_EQ(out.width, 37);
    EXPECT_EQ(out.height, 41);
    EXPECT_EQ(out.channels, 3);
    for (float v : out.data) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST(Stylizer, LargeOddFrame) {
    Stylizer s(tiny_checkpoint());
    Image out = s.stylize(testing::smooth_noise(637, 641, 32, 2));
    EXPECT_EQ(out.width, 637);
    EXPECT_EQ(out.height, 641);
}

TEST(Stylizer, CompositingWithAnEmptyMaskKeepsTheInput) {
    Stylizer s(tiny_checkpoint());
    Image frame = testing::texture(24, 20, 4);
    Mask none(24, 20, false);
    EXPECT_EQ(s.stylize(frame, nullptr, &none, true), frame);
    Mask half(24, 20, false);
    for (int x = 0; x < 12; ++x)
        for (int y = 0; y < 20; ++y) half.set(x, y, true);
    Image full = s.stylize(frame);
    Image mixed = s.stylize(frame, nullptr, &half, true);
    EXPECT_EQ(mixed.at(3, 3, 1), full.at(3, 3, 1));
    EXPECT_EQ(mixed.at(20, 3, 1), frame.at(20, 3, 1));
    EXPECT_EQ(s.stylize(frame, nullptr, &half, false), full);
}

TEST(Stylizer, ChecksChannelsAndExtents) {
    Stylizer plain(tiny_checkpoint());
    Image frame = testing::texture(16, 16, 1);
    GuidanceLayer g{Image(16, 16, 3)};
    EXPECT_EQ(thrown_code([&] { plain.stylize(frame, &g); }), ErrorCode::channel_mismatch);
    EXPECT_EQ(thrown_code([&] { plain.stylize(Image(16, 16, 1)); }), ErrorCode::channel_mismatch);
    Mask wrong(15, 16, true);
    EXPECT_EQ(thrown_code([&] { plain.stylize(frame, nullptr, &wrong, true); }), ErrorCode::dimension_mismatch);

    Stylizer guided(tiny_checkpoint(true));
    EXPECT_TRUE(guided.uses_guidance());
    EXPECT_EQ(thrown_code([&] { guided.stylize(frame); }), ErrorCode::channel_mismatch);
    GuidanceLayer small{Image(8, 8, 3)};
    EXPECT_EQ(thrown_code([&] { guided.stylize(frame, &small); }), ErrorCode::dimension_mismatch);
    EXPECT_EQ(guided.stylize(frame, &g).width, 16);
}

TEST(Stylizer, MemoryLimitRejectsOversizedFrames) {
    Checkpoint c = tiny_checkpoint();
    EXPECT_GT(estimate_inference_bytes(c.net, 640, 480), estimate_inference_bytes(c.net, 320, 240));
    Stylizer s(c, std::nullopt, estimate_inference_bytes(c.net, 64, 64));
    EXPECT_NO_THROW(s.stylize(Image(64, 64, 3)));
    EXPECT_EQ(thrown_code([&] { s.stylize(Image(256, 256, 3)); }), ErrorCode::resource);
}

TEST(Stylizer, FramesAreIndependentOfHistory) {
    Stylizer s(tiny_checkpoint());
    Image a = testing::texture(32, 32, 10);
    Image b = testing::texture(32, 32, 11);
    Image first = s.stylize(a);
    s.stylize(b);
    EXPECT_EQ(s.stylize(a), first);
}

TEST(StylizeSequence, WorkersAndOrderDoNotChangeOutputs) {
    Stylizer s(tiny_checkpoint());
    auto shape = testing::moving_shape(6, 32);
    Sequence seq = make_sequence(shape.frames);
    Sequence base = stylize_sequence(s, seq, 1);
    const std::vector<size_t> reverse{5, 4, 3, 2, 1, 0};
    const std::vector<size_t> shuffled{3, 0, 5, 1, 4, 2};
    for (const Sequence& other :
         {stylize_sequence(s, seq, 8), stylize_sequence(s, seq, 3, reverse), stylize_sequence(s, seq, 2, shuffled)}) {
        ASSERT_EQ(other.size(), 6u);
        for (size_t i = 0; i < 6; ++i) {
            EXPECT_EQ(other.frames[i].pixels, base.frames[i].pixels);
            EXPECT_EQ(other.frames[i].index, static_cast<int>(i));
        }
    }
    Frame single = stylize_frame(s, seq.frames[4]);
    EXPECT_EQ(single.pixels, base.frames[4].pixels);
    EXPECT_EQ(single.index, 4);
}

TEST(StylizeSequence, ValidatesArguments) {
    Stylizer s(tiny_checkpoint());
    Sequence seq = make_sequence({Image(16, 16, 3), Image(16, 16, 3)});
    const std::vector<size_t> dup{0, 0};
    EXPECT_EQ(thrown_code([&] { stylize_sequence(s, seq, 1, dup); }), ErrorCode::invalid_argument);
    EXPECT_EQ(thrown_code([&] { stylize_sequence(s, seq, 0); }), ErrorCode::invalid_argument);
    Stylizer guided(tiny_checkpoint(true));
    EXPECT_EQ(thrown_code([&] { stylize_sequence(guided, seq); }), ErrorCode::channel_mismatch);
}

TEST(StylizeSequence, CompositesSequenceMasks) {
    Stylizer s(tiny_checkpoint());
    Sequence seq = make_sequence({testing::texture(16, 16, 1), testing::texture(16, 16, 2)});
    seq.masks = {Mask(16, 16, false), Mask(16, 16, false)};
    Sequence out = stylize_sequence(s, seq, 1, {}, true);
    EXPECT_EQ(out.frames[1].pixels, seq.frames[1].pixels);
}

TEST(MeasureInference, ReportsConsistentTiming) {
    Stylizer s(tiny_checkpoint());
    InferenceTiming t = measure_inference(s, 48, 40, 1, 3);
    EXPECT_EQ(t.runs, 3);
    EXPECT_GT(t.median_ms, 0.0);
    EXPECT_NEAR(t.fps, 1000.0 / t.median_ms, 1e-9);
    EXPECT_EQ(thrown_code([&] { measure_inference(s, 48, 40, 1, 0); }), ErrorCode::invalid_argument);
}

TEST(Device, EnvironmentSelection) {
    unsetenv("PATCHSTYLE_DEVICE");
    EXPECT_TRUE(device_from_environment().is_cpu());
    setenv("PATCHSTYLE_DEVICE", "cpu", 1);
    EXPECT_TRUE(device_from_environment().is_cpu());
    setenv("PATCHSTYLE_DEVICE", "quantum", 1);
    EXPECT_EQ(thrown_code([] { device_from_environment(); }), ErrorCode::config);
    if (!torch::cuda::is_available()) {
        setenv("PATCHSTYLE_DEVICE", "cuda", 1);
        EXPECT_EQ(thrown_code([] { device_from_environment(); }), ErrorCode::resource);
    }
    unsetenv("PATCHSTYLE_DEVICE");
}

}  // namespace
}  // namespace patchstyle
