#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "patchstyle/error.hpp"
#include "patchstyle/trainer.hpp"

namespace patchstyle {
namespace {

using testing::thrown_code;

struct Scene {
    Sequence sequence;
    std::vector<Keyframe> keyframes;
};

Scene small_scene() {
    auto shape = testing::moving_shape(4, 32);
    Scene s;
    s.sequence = make_sequence(shape.frames);
    s.keyframes.push_back(make_keyframe(s.sequence, 0, shape.styles[0]));
    return s;
}

TEST(Trainer, ZeroStepBudgetEmitsOnlyTheInitialCheckpoint) {
    Scene s = small_scene();
    int emitted = 0;
    TrainCallbacks cb;
    cb.on_checkpoint = [&](const Checkpoint& c) {
        ++emitted;
        EXPECT_EQ(c.step, 0);
    };
    Checkpoint c = train(s.keyframes, testing::tiny_config(0), cb);
    EXPECT_EQ(emitted, 1);
    EXPECT_EQ(c.step, 0);
    EXPECT_TRUE(c.history.empty());
}

TEST(Trainer, StepCadenceAndFinalCheckpoint) {
    Scene s = small_scene();
    TrainConfig cfg = testing::tiny_config(5);
    cfg.checkpoint_interval_steps = 2;
    std::vector<int64_t> steps;
    int records = 0;
    TrainCallbacks cb;
    cb.on_checkpoint = [&](const Checkpoint& c) { steps.push_back(c.step); };
    cb.on_step = [&](const LossRecord&) { ++records; };
    Checkpoint last = train(s.keyframes, cfg, cb);
    EXPECT_EQ(steps, (std::vector<int64_t>{0, 2, 4, 5}));
    EXPECT_EQ(records, 5);
    EXPECT_EQ(last.history.size(), 5u);
}

TEST(Trainer, ShouldStopEndsTraining) {
    Scene s = small_scene();
    TrainConfig cfg = testing::tiny_config(1000);
    int records = 0;
    TrainCallbacks cb;
    cb.on_step = [&](const LossRecord&) { ++records; };
    cb.should_stop = [&] { return records >= 3; };
    EXPECT_EQ(train(s.keyframes, cfg, cb).step, 3);
}

TEST(Trainer, SameSeedSameWeights) {
    Scene s = small_scene();
    Trainer a(s.keyframes, testing::tiny_config(3));
    Trainer b(s.keyframes, testing::tiny_config(3));
    for (int i = 0; i < 3; ++i) {
        auto ra = a.step();
        auto rb = b.step();
        EXPECT_EQ(ra.loss.total, rb.loss.total);
    }
    EXPECT_EQ(a.snapshot().generator, b.snapshot().generator);

    TrainConfig other = testing::tiny_config(3);
    other.seed = 2;
    Trainer c(s.keyframes, other);
    c.step();
    EXPECT_NE(c.snapshot().generator, a.snapshot().generator);
}

TEST(Trainer, ReplacingKeyframesMarksTheNextRecord) {
    Scene s = small_scene();
    Trainer t(s.keyframes, testing::tiny_config(10));
    EXPECT_FALSE(t.step().target_changed);
    std::vector<Keyframe> next{make_keyframe(s.sequence, 2, Image(32, 32, 3, 0.3f))};
    t.replace_keyframes(next);
    EXPECT_EQ(t.target_version(), 1);
    EXPECT_TRUE(t.step().target_changed);
    EXPECT_FALSE(t.step().target_changed);
    EXPECT_EQ(t.steps_done(), 3);
    EXPECT_EQ(t.snapshot().target_version, 1);

    std::istringstream csv(loss_history_csv(t.history()));
    std::string line;
    std::vector<std::string> markers;
    std::getline(csv, line);
    while (std::getline(csv, line)) markers.push_back(line.substr(line.rfind(',') + 1));
    EXPECT_EQ(markers, (std::vector<std::string>{"0", "1", "0"}));

    // A rejected replacement leaves the current targets in place.
    Keyframe tiny = make_keyframe(make_sequence({Image(8, 8, 3)}), 0, Image(8, 8, 3));
    EXPECT_EQ(thrown_code([&] { t.replace_keyframes({tiny}); }), ErrorCode::invalid_argument);
    EXPECT_EQ(t.target_version(), 1);
    EXPECT_NO_THROW(t.step());
}

TEST(Trainer, GuidanceMustBePresentWhenRequested) {
    Scene s = small_scene();
    TrainConfig cfg = testing::tiny_config(1);
    cfg.use_guidance = true;
    EXPECT_EQ(thrown_code([&] { Trainer(s.keyframes, cfg); }), ErrorCode::channel_mismatch);
    EXPECT_EQ(thrown_code([&] { Trainer({}, testing::tiny_config(1)); }), ErrorCode::empty_input);

    s.keyframes[0].guidance = GuidanceLayer{testing::texture(32, 32, 3)};
    Trainer t(s.keyframes, cfg);
    EXPECT_EQ(t.snapshot().net.input_channels, 6);
    EXPECT_NO_THROW(t.step());
}

TEST(Trainer, FullFrameModeTrainsOnWholeKeyframes) {
    Scene s = small_scene();
    TrainConfig cfg = testing::tiny_config(2);
    cfg.mode = TrainMode::fullframe;
    Checkpoint c = train(s.keyframes, cfg);
    EXPECT_EQ(c.step, 2);
    EXPECT_GT(c.history.back().loss.l1, 0.0);
}

TEST(Trainer, AugmentationsRun) {
    Scene s = small_scene();
    for (auto aug : {Augmentation::gaussian_noise, Augmentation::pixel_erase, Augmentation::occlusion,
                     Augmentation::dropout_map, Augmentation::dropout_pixel}) {
        TrainConfig cfg = testing::tiny_config(2);
        cfg.augmentation = aug;
        EXPECT_EQ(train(s.keyframes, cfg).step, 2) << to_string(aug);
    }
}

TEST(Trainer, LossDecreasesOnASingleKeyframe) {
    Scene s = small_scene();
    TrainConfig cfg = testing::tiny_config(150);
    cfg.base_filters = 8;
    cfg.learning_rate = 0.002;
    cfg.loss_weights = {1.0, 0.0, 0.0};
    Trainer t(s.keyframes, cfg);
    const Checkpoint before = t.snapshot();
    const Checkpoint after = t.run();
    const EvalPair pair{s.keyframes[0].input, s.keyframes[0].style, std::nullopt};
    const double l0 = evaluate(before, std::span(&pair, 1)).l1;
    const double l1 = evaluate(after, std::span(&pair, 1)).l1;
    EXPECT_LT(l1, 0.8 * l0);
}

TEST(Checkpoint, RoundTripsThroughAnArchive) {
    Scene s = small_scene();
    TrainConfig cfg = testing::tiny_config(2);
    Checkpoint c = train(s.keyframes, cfg);
    testing::TempDir dir;
    save_checkpoint(dir / "a.ckpt", c);
    Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(back.net, c.net);
    EXPECT_EQ(back.step, 2);
    EXPECT_EQ(back.config_hash, cfg.hash());
    EXPECT_EQ(back.generator, c.generator);
    EXPECT_EQ(back.discriminator, c.discriminator);
    ASSERT_EQ(back.history.size(), 2u);
    EXPECT_EQ(back.history[1].loss.total, c.history[1].loss.total);
    EXPECT_EQ(TrainConfig::from_json(back.train_config), cfg);

    const EvalPair pair{s.keyframes[0].input, s.keyframes[0].style, std::nullopt};
    EXPECT_EQ(evaluate(c, std::span(&pair, 1)).l1, evaluate(back, std::span(&pair, 1)).l1);
}

TEST(Evaluate, ValidatesPairs) {
    Scene s = small_scene();
    Checkpoint c = train(s.keyframes, testing::tiny_config(0));
    EXPECT_EQ(thrown_code([&] { evaluate(c, {}); }), ErrorCode::empty_input);
    const EvalPair bad{s.keyframes[0].input, Image(31, 32, 3), std::nullopt};
    EXPECT_EQ(thrown_code([&] { evaluate(c, std::span(&bad, 1)); }), ErrorCode::dimension_mismatch);

    Mask half(32, 32, false);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x) half.set(x, y, true);
    Image ref = s.keyframes[0].style;
    Generator g = load_generator(c);
    Image out = infer_padded(g, s.keyframes[0].input);
    // With the lower half masked out, changing the reference there does not change the score.
    Image ref2 = ref;
    for (int y = 16; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            for (int ch = 0; ch < 3; ++ch) ref2.at(x, y, ch) = 1.0f - ref.at(x, y, ch);
    const EvalPair p1{s.keyframes[0].input, ref, half};
    const EvalPair p2{s.keyframes[0].input, ref2, half};
    EXPECT_DOUBLE_EQ(evaluate(c, std::span(&p1, 1)).l1, evaluate(c, std::span(&p2, 1)).l1);
    EXPECT_EQ(out.width, 32);
}

}  // namespace
}  // namespace patchstyle
