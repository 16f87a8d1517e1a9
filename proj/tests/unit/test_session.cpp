#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "fixtures.hpp"
#include "patchstyle/error.hpp"
#include "patchstyle/inference.hpp"
#include "patchstyle/session.hpp"

namespace patchstyle {
namespace {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;
using testing::thrown_code;

struct Fixture {
    Sequence sequence;
    std::vector<Keyframe> keyframes;
    TrainConfig config;
};

Fixture fixture(double cadence_seconds = 0.2) {
    auto shape = testing::moving_shape(10, 32);
    Fixture f;
    f.sequence = make_sequence(shape.frames);
    f.keyframes = {make_keyframe(f.sequence, 0, shape.styles[0])};
    f.config = testing::tiny_config(0);
    f.config.checkpoint_interval_seconds = cadence_seconds;
    return f;
}

std::shared_ptr<Session> mock_session(SessionManager& m, const Fixture& f, SessionOptions options = {}) {
    return m.create(f.sequence, f.keyframes, f.config, make_mock_backend(f.keyframes, f.config), options);
}

template <class Pred>
bool wait_for(Pred pred, std::chrono::milliseconds limit) {
    const auto end = Clock::now() + limit;
    while (Clock::now() < end) {
        if (pred()) return true;
        std::this_thread::sleep_for(5ms);
    }
    return pred();
}

TEST(PreviewChannel, DropsTheOldestWhenFull) {
    PreviewChannel channel;
    auto sub = channel.subscribe();
    for (int i = 0; i < 6; ++i) channel.publish({0, i, 0, {}});
    EXPECT_EQ(sub->next(0ms)->step, 2);
    channel.close();
    EXPECT_TRUE(sub->closed());
    EXPECT_EQ(sub->next(0ms)->step, 3);
    EXPECT_TRUE(channel.subscribe()->closed());
}

TEST(PreviewChannel, ForgetsDroppedSubscribers) {
    PreviewChannel channel;
    auto a = channel.subscribe();
    { auto b = channel.subscribe(); }
    EXPECT_EQ(channel.subscriber_count(), 1u);
}

TEST(DeviceSharing, ParsesNames) {
    EXPECT_EQ(parse_device_sharing("trainer"), DeviceSharing::trainer_priority);
    EXPECT_EQ(parse_device_sharing(to_string(DeviceSharing::inference_priority)), DeviceSharing::inference_priority);
    EXPECT_EQ(thrown_code([] { parse_device_sharing("both"); }), ErrorCode::config);
}

TEST(Session, MockLoopMakesProgressAndStops) {
    SessionManager m;
    Fixture f = fixture();
    auto s = mock_session(m, f);
    EXPECT_EQ(thrown_code([&] { s->stylize(0); }), ErrorCode::not_found);
    s->start();
    EXPECT_TRUE(wait_for([&] { return s->status().step >= 20; }, 5s));
    EXPECT_TRUE(s->running());
    EXPECT_EQ(thrown_code([&] { s->start(); }), ErrorCode::conflict);
    s->stop();
    EXPECT_FALSE(s->running());
    auto status = s->status();
    EXPECT_EQ(status.checkpoint_step, status.step);
    ASSERT_TRUE(status.loss.has_value());
    auto j = status.to_json();
    for (const char* key : {"id", "running", "step", "elapsed", "loss", "target_version", "checkpoint_step"})
        EXPECT_TRUE(j.contains(key)) << key;

    // Restarting continues from the same backend.
    s->start();
    EXPECT_TRUE(wait_for([&] { return s->status().step >= status.step + 5; }, 5s));
    s->stop();
}

TEST(Session, KeyframeUpdatesAreWarmAndMarked) {
    SessionManager m;
    Fixture f = fixture();
    auto s = mock_session(m, f);
    s->start();
    ASSERT_TRUE(wait_for([&] { return s->status().step >= 10; }, 5s));
    const int64_t before = s->status().step;
    s->set_keyframe_style(0, Image(32, 32, 3, 0.9f));
    ASSERT_TRUE(wait_for([&] { return s->status().target_version == 1; }, 5s));
    ASSERT_TRUE(wait_for([&] {
        auto c = s->latest_checkpoint();
        return c && c->target_version == 1;
    }, 5s));
    s->stop();
    auto c = s->latest_checkpoint();
    EXPECT_GT(c->step, before);
    int marked = 0;
    for (const auto& r : c->history)
        if (r.target_changed) {
            ++marked;
            EXPECT_GT(r.step, before);
        }
    EXPECT_EQ(marked, 1);
    Image rendered = s->stylize(0);
    EXPECT_NEAR(rendered.at(0, 0, 0), 0.5f * f.sequence.frames[0].pixels.at(0, 0, 0) + 0.45f, 1e-5);
}

TEST(Session, KeyframeEditsAreValidated) {
    SessionManager m;
    Fixture f = fixture();
    auto s = mock_session(m, f);
    EXPECT_EQ(thrown_code([&] { s->set_keyframe_style(0, Image(16, 16, 3)); }), ErrorCode::dimension_mismatch);
    EXPECT_EQ(thrown_code([&] { s->set_keyframe_style(40, Image(32, 32, 3)); }), ErrorCode::index_out_of_range);
    EXPECT_EQ(thrown_code([&] { s->set_keyframe_mask(0, Mask(32, 32, false)); }), ErrorCode::invalid_argument);
    EXPECT_EQ(thrown_code([&] { s->set_preview_frame(10); }), ErrorCode::index_out_of_range);
    EXPECT_NO_THROW(s->set_keyframe_style(5, Image(32, 32, 3, 0.2f)));
    EXPECT_NO_THROW(s->set_keyframe_mask(7, Mask(32, 32, true)));
}

TEST(Session, PreviewFollowsTheRequestedFrameWithoutRestarting) {
    SessionManager m;
    Fixture f = fixture(0.05);
    SessionOptions o;
    o.preview_frame = 7;
    auto s = mock_session(m, f, o);
    auto sub = s->subscribe_previews();
    s->start();
    auto first = sub->next(2s);
    ASSERT_TRUE(first.has_value());
    EXPECT_EQ(first->frame, 7u);
    Image decoded = decode_png_rgb(first->png);
    EXPECT_EQ(decoded.width, 32);

    s->set_preview_frame(3);
    std::optional<PreviewMessage> switched;
    ASSERT_TRUE(wait_for([&] {
        auto msg = sub->next(50ms);
        if (msg && msg->frame == 3) switched = msg;
        return switched.has_value();
    }, 3s));
    EXPECT_GE(switched->step, first->step);
    // Training carries on: later previews of the new frame come from newer steps.
    std::optional<PreviewMessage> later;
    ASSERT_TRUE(wait_for([&] {
        auto msg = sub->next(50ms);
        if (msg && msg->frame == 3 && msg->step > first->step) later = msg;
        return later.has_value();
    }, 3s));
    EXPECT_TRUE(s->running());
    EXPECT_EQ(s->status().preview_frame, 3u);
    s->close();
    EXPECT_TRUE(wait_for([&] { return sub->closed(); }, 1s));
}

TEST(Session, KeyframeUpdateReachesPreviewsWithinOneCadence) {
    SessionManager m;
    const double cadence = 0.5;
    Fixture f = fixture(cadence);
    auto s = mock_session(m, f);
    auto sub = s->subscribe_previews();
    s->start();
    ASSERT_TRUE(sub->next(2s).has_value());
    std::this_thread::sleep_for(100ms);
    const auto t0 = Clock::now();
    s->set_keyframe_style(0, Image(32, 32, 3, 1.0f));
    std::optional<PreviewMessage> updated;
    while (!updated && Clock::now() - t0 < 3s) {
        auto msg = sub->next(20ms);
        if (msg && msg->target_version >= 1) updated = msg;
    }
    const double latency = std::chrono::duration<double>(Clock::now() - t0).count();
    s->stop();
    ASSERT_TRUE(updated.has_value());
    EXPECT_LE(latency, cadence + 0.1);
}

TEST(Session, InferencePriorityPublishesEveryStep) {
    SessionManager m;
    Fixture f = fixture(10.0);
    SessionOptions o;
    o.device_sharing = DeviceSharing::inference_priority;
    auto s = mock_session(m, f, o);
    auto sub = s->subscribe_previews();
    s->start();
    std::vector<int64_t> steps;
    while (steps.size() < 6) {
        auto msg = sub->next(2s);
        ASSERT_TRUE(msg.has_value());
        steps.push_back(msg->step);
    }
    s->stop();
    EXPECT_GT(steps.back(), steps.front());
}

TEST(Session, CheckpointDirectoryHoldsALoadableArchive) {
    testing::TempDir dir;
    SessionManager m;
    Fixture f = fixture(0.1);
    SessionOptions o;
    o.checkpoint_dir = dir.path();
    auto s = m.create(f.sequence, f.keyframes, f.config, make_trainer_backend(f.keyframes, f.config), o);
    s->start();
    ASSERT_TRUE(wait_for([&] { return s->status().step >= 3; }, 30s));
    s->stop();
    Checkpoint c = load_checkpoint(dir / (s->id() + ".ckpt"));
    EXPECT_EQ(c.step, s->status().step);
    Stylizer stylizer(c);
    EXPECT_EQ(stylizer.stylize(f.sequence.frames[2].pixels), s->stylize(2));
}

TEST(SessionManager, TracksSessions) {
    SessionManager m;
    Fixture f = fixture();
    auto a = mock_session(m, f);
    auto b = mock_session(m, f);
    EXPECT_NE(a->id(), b->id());
    EXPECT_EQ(m.ids().size(), 2u);
    EXPECT_EQ(m.find(a->id()), a);
    a->start();
    auto sub = a->subscribe_previews();
    EXPECT_TRUE(m.remove(a->id()));
    EXPECT_FALSE(a->running());
    EXPECT_TRUE(sub->closed());
    EXPECT_FALSE(m.remove(a->id()));
    EXPECT_EQ(m.find(a->id()), nullptr);
    b->start();
    m.stop_all();
    EXPECT_FALSE(b->running());
}

}  // namespace
}  // namespace patchstyle
