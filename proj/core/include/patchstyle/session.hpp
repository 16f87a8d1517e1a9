#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "patchstyle/dataset.hpp"
#include "patchstyle/train_config.hpp"

namespace patchstyle {

/// Who yields when training and preview rendering share one device.
enum class DeviceSharing {
    trainer_priority,    // previews are rendered only when a checkpoint is emitted
    inference_priority,  // every training step publishes a fresh snapshot and preview
};
std::string to_string(DeviceSharing sharing);
DeviceSharing parse_device_sharing(const std::string& text);

/// Training and rendering behind a session. Called from the session's loop thread
/// only, except `render`, which may also run on request threads.
class SessionBackend {
public:
    virtual ~SessionBackend() = default;
    virtual LossRecord step() = 0;
    virtual void replace_keyframes(std::vector<Keyframe> keyframes) = 0;
    virtual Checkpoint snapshot() = 0;
    virtual Image render(const Checkpoint& checkpoint, const Sequence& sequence, size_t frame) = 0;
};

/// Trains the real generator; renders with a stylizer built from each checkpoint.
std::unique_ptr<SessionBackend> make_trainer_backend(std::vector<Keyframe> keyframes, TrainConfig config);

/// Stand-in with a 1 ms step and a render that tints the frame with the mean style
/// color of the checkpoint's target version.
std::unique_ptr<SessionBackend> make_mock_backend(std::vector<Keyframe> keyframes, TrainConfig config,
                                                  std::chrono::microseconds step_time = std::chrono::milliseconds(1));

struct PreviewMessage {
    size_t frame = 0;
    int64_t step = 0;
    int64_t target_version = 0;
    std::vector<uint8_t> png;
};

/// Bounded per-subscriber queue; the oldest message is dropped when full.
class PreviewSubscription {
public:
    std::optional<PreviewMessage> next(std::chrono::milliseconds timeout);
    bool closed() const;

private:
    friend class PreviewChannel;
    void push(const PreviewMessage& message);
    void close();

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<PreviewMessage> queue_;
    bool closed_ = false;
    static constexpr size_t capacity = 4;
};

class PreviewChannel {
public:
    std::shared_ptr<PreviewSubscription> subscribe();
    void publish(const PreviewMessage& message);
    void close();
    size_t subscriber_count();

private:
    std::mutex mutex_;
    std::vector<std::weak_ptr<PreviewSubscription>> subscribers_;
    bool closed_ = false;
};

struct SessionStatus {
    std::string id;
    bool running = false;
    int64_t step = 0;
    double elapsed_seconds = 0.0;
    std::optional<LossBreakdown> loss;
    int64_t target_version = 0;
    int64_t checkpoint_step = -1;
    size_t preview_frame = 0;

    nlohmann::json to_json() const;
};

struct SessionOptions {
    size_t preview_frame = 0;
    DeviceSharing device_sharing = DeviceSharing::trainer_priority;
    /// When set, every emitted checkpoint is also written atomically to <dir>/<id>.ckpt.
    std::optional<std::filesystem::path> checkpoint_dir;
};

/// Interactive training session: an unbounded training loop over a mutable keyframe
/// set, periodic checkpoints and preview pushes.
class Session {
public:
    Session(std::string id, Sequence sequence, std::vector<Keyframe> keyframes, TrainConfig config,
            std::unique_ptr<SessionBackend> backend, SessionOptions options = {});
    ~Session();

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    /// Starts the training loop; a second concurrent loop is rejected with Error(conflict).
    void start();
    void stop();
    /// Stops training and ends every preview subscription.
    void close();
    bool running() const;

    SessionStatus status() const;
    const std::string& id() const noexcept { return id_; }
    const Sequence& sequence() const noexcept { return sequence_; }

    /// Queues a replacement style for keyframe `index` (a frame index). Unknown
    /// indices add a new keyframe with a full mask.
    void set_keyframe_style(int index, Image style);
    void set_keyframe_mask(int index, Mask mask);
    void set_preview_frame(size_t frame);

    std::shared_ptr<const Checkpoint> latest_checkpoint() const;
    /// Renders a frame with the latest checkpoint. Throws Error(not_found) before the first one.
    Image stylize(size_t frame) const;

    std::shared_ptr<PreviewSubscription> subscribe_previews();

private:
    void loop();
    void apply_pending_updates();
    void emit_checkpoint(bool persist);
    void publish_preview();

    std::string id_;
    Sequence sequence_;
    TrainConfig config_;
    std::unique_ptr<SessionBackend> backend_;
    SessionOptions options_;

    mutable std::mutex mutex_;
    std::vector<Keyframe> keyframes_;  // latest requested set, guarded by mutex_
    bool keyframes_dirty_ = false;
    size_t preview_frame_;
    bool preview_dirty_ = false;
    std::optional<LossRecord> last_record_;
    int64_t steps_ = 0;
    double elapsed_ = 0.0;
    int64_t target_version_ = 0;
    std::shared_ptr<const Checkpoint> checkpoint_;

    mutable std::mutex render_mutex_;
    PreviewChannel previews_;
    std::atomic<bool> stop_requested_{false};
    std::atomic<bool> running_{false};
    std::thread thread_;
};

/// Thread-safe registry of live sessions.
class SessionManager {
public:
    std::shared_ptr<Session> create(Sequence sequence, std::vector<Keyframe> keyframes, TrainConfig config,
                                    std::unique_ptr<SessionBackend> backend, SessionOptions options = {});
    std::shared_ptr<Session> find(const std::string& id) const;
    bool remove(const std::string& id);
    std::vector<std::string> ids() const;
    void stop_all();

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    uint64_t counter_ = 0;
};

}  // namespace patchstyle
