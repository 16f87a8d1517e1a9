#include "patchstyle/session.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "patchstyle/error.hpp"
#include "patchstyle/inference.hpp"
#include "patchstyle/trainer.hpp"

namespace patchstyle {

namespace {

using Clock = std::chrono::steady_clock;

class TrainerBackend final : public SessionBackend {
public:
    TrainerBackend(std::vector<Keyframe> keyframes, TrainConfig config) : trainer_(std::move(keyframes), config) {}

    LossRecord step() override { return trainer_.step(); }
    void replace_keyframes(std::vector<Keyframe> keyframes) override { trainer_.replace_keyframes(std::move(keyframes)); }
    Checkpoint snapshot() override { return trainer_.snapshot(); }

    Image render(const Checkpoint& checkpoint, const Sequence& sequence, size_t frame) override {
        if (!cached_ || cached_step_ != checkpoint.step || cached_version_ != checkpoint.target_version) {
            cached_ = std::make_unique<Stylizer>(checkpoint);
            cached_step_ = checkpoint.step;
            cached_version_ = checkpoint.target_version;
        }
        const GuidanceLayer* g = cached_->uses_guidance() ? &sequence.guidance.at(frame) : nullptr;
        return cached_->stylize(sequence.frames.at(frame).pixels, g);
    }

private:
    Trainer trainer_;
    std::unique_ptr<Stylizer> cached_;
    int64_t cached_step_ = -1;
    int64_t cached_version_ = -1;
};

class MockBackend final : public SessionBackend {
public:
    MockBackend(std::vector<Keyframe> keyframes, TrainConfig config, std::chrono::microseconds step_time)
        : config_(std::move(config)), step_time_(step_time) {
        colors_.push_back(mean_style(keyframes));
        keyframes_ = std::move(keyframes);
    }

    LossRecord step() override {
        auto t0 = Clock::now();
        std::this_thread::sleep_for(step_time_);
        LossBreakdown loss;
        loss.l1 = loss.total = 1.0 / static_cast<double>(step_ + 1);
        elapsed_ += std::chrono::duration<double>(Clock::now() - t0).count();
        LossRecord r{++step_, elapsed_, loss, changed_};
        changed_ = false;
        history_.push_back(r);
        return r;
    }

    void replace_keyframes(std::vector<Keyframe> keyframes) override {
        std::lock_guard lock(mutex_);
        colors_.push_back(mean_style(keyframes));
        keyframes_ = std::move(keyframes);
        changed_ = true;
    }

    Checkpoint snapshot() override {
        Checkpoint c;
        c.net = config_.net_config();
        c.train_config = config_.to_json();
        c.config_hash = config_.hash();
        c.step = step_;
        c.elapsed_seconds = elapsed_;
        std::lock_guard lock(mutex_);
        c.target_version = static_cast<int64_t>(colors_.size()) - 1;
        c.history = history_;
        return c;
    }

    Image render(const Checkpoint& checkpoint, const Sequence& sequence, size_t frame) override {
        std::array<float, 3> color;
        {
            std::lock_guard lock(mutex_);
            color = colors_.at(static_cast<size_t>(checkpoint.target_version));
        }
        Image out = sequence.frames.at(frame).pixels;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = 0.5f * out.data[i] + 0.5f * color[i % 3];
        return out;
    }

private:
    static std::array<float, 3> mean_style(const std::vector<Keyframe>& keyframes) {
        std::array<double, 3> sum{};
        size_t n = 0;
        for (const auto& k : keyframes) {
            for (size_t i = 0; i < k.style.data.size(); ++i) sum[i % 3] += k.style.data[i];
            n += k.style.data.size() / 3;
        }
        std::array<float, 3> out{};
        for (int c = 0; c < 3; ++c) out[c] = n ? static_cast<float>(sum[c] / n) : 0.0f;
        return out;
    }

    TrainConfig config_;
    std::chrono::microseconds step_time_;
    std::mutex mutex_;
    std::vector<Keyframe> keyframes_;
    std::vector<std::array<float, 3>> colors_;  // by target version
    int64_t step_ = 0;
    double elapsed_ = 0.0;
    bool changed_ = false;
    std::vector<LossRecord> history_;
};

}  // namespace

std::string to_string(DeviceSharing sharing) {
    return sharing == DeviceSharing::trainer_priority ? "trainer" : "inference";
}

DeviceSharing parse_device_sharing(const std::string& text) {
    if (text == "trainer") return DeviceSharing::trainer_priority;
    if (text == "inference") return DeviceSharing::inference_priority;
    throw Error(ErrorCode::config, "device sharing must be 'trainer' or 'inference', got '" + text + "'");
}

std::unique_ptr<SessionBackend> make_trainer_backend(std::vector<Keyframe> keyframes, TrainConfig config) {
    config.budget = Budget::unbounded();
    return std::make_unique<TrainerBackend>(std::move(keyframes), std::move(config));
}

std::unique_ptr<SessionBackend> make_mock_backend(std::vector<Keyframe> keyframes, TrainConfig config,
                                                  std::chrono::microseconds step_time) {
    return std::make_unique<MockBackend>(std::move(keyframes), std::move(config), step_time);
}

// ---------------------------------------------------------------------------

std::optional<PreviewMessage> PreviewSubscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    PreviewMessage m = std::move(queue_.front());
    queue_.pop_front();
    return m;
}

bool PreviewSubscription::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

void PreviewSubscription::push(const PreviewMessage& message) {
    {
        std::lock_guard lock(mutex_);
        if (closed_) return;
        if (queue_.size() >= capacity) queue_.pop_front();
        queue_.push_back(message);
    }
    cv_.notify_all();
}

void PreviewSubscription::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

std::shared_ptr<PreviewSubscription> PreviewChannel::subscribe() {
    auto sub = std::make_shared<PreviewSubscription>();
    std::lock_guard lock(mutex_);
    if (closed_) {
        sub->close();
    } else {
        subscribers_.push_back(sub);
    }
    return sub;
}

void PreviewChannel::publish(const PreviewMessage& message) {
    std::vector<std::shared_ptr<PreviewSubscription>> live;
    {
        std::lock_guard lock(mutex_);
        std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
        for (auto& w : subscribers_) {
            if (auto s = w.lock()) live.push_back(std::move(s));
        }
    }
    for (auto& s : live) s->push(message);
}

void PreviewChannel::close() {
    std::vector<std::shared_ptr<PreviewSubscription>> live;
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
        for (auto& w : subscribers_) {
            if (auto s = w.lock()) live.push_back(std::move(s));
        }
        subscribers_.clear();
    }
    for (auto& s : live) s->close();
}

size_t PreviewChannel::subscriber_count() {
    std::lock_guard lock(mutex_);
    std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
    return subscribers_.size();
}

// ---------------------------------------------------------------------------

nlohmann::json SessionStatus::to_json() const {
    nlohmann::json j{{"id", id},
                     {"running", running},
                     {"step", step},
                     {"elapsed", elapsed_seconds},
                     {"target_version", target_version},
                     {"checkpoint_step", checkpoint_step},
                     {"preview_frame", preview_frame}};
    j["loss"] = loss ? loss->to_json() : nlohmann::json(nullptr);
    return j;
}

Session::Session(std::string id, Sequence sequence, std::vector<Keyframe> keyframes, TrainConfig config,
                 std::unique_ptr<SessionBackend> backend, SessionOptions options)
    : id_(std::move(id)),
      sequence_(std::move(sequence)),
      config_(std::move(config)),
      backend_(std::move(backend)),
      options_(std::move(options)),
      keyframes_(std::move(keyframes)),
      preview_frame_(options_.preview_frame) {
    if (!backend_) throw Error(ErrorCode::invalid_argument, "session needs a backend");
    if (preview_frame_ >= sequence_.size()) {
        throw Error(ErrorCode::index_out_of_range, "preview frame outside the sequence");
    }
}

Session::~Session() { close(); }

void Session::start() {
    bool expected = false;
    if (!running_.compare_exchange_strong(expected, true)) {
        throw Error(ErrorCode::conflict, "session " + id_ + " already has a training loop");
    }
    if (thread_.joinable()) thread_.join();
    stop_requested_ = false;
    thread_ = std::thread([this] { loop(); });
}

void Session::stop() {
    stop_requested_ = true;
    if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

void Session::close() {
    stop();
    previews_.close();
}

bool Session::running() const { return running_.load(); }

SessionStatus Session::status() const {
    std::lock_guard lock(mutex_);
    SessionStatus s;
    s.id = id_;
    s.running = running_.load();
    s.step = steps_;
    s.elapsed_seconds = elapsed_;
    if (last_record_) s.loss = last_record_->loss;
    s.target_version = target_version_;
    s.checkpoint_step = checkpoint_ ? checkpoint_->step : -1;
    s.preview_frame = preview_frame_;
    return s;
}

void Session::set_keyframe_style(int index, Image style) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(keyframes_.begin(), keyframes_.end(), [&](const Keyframe& k) { return k.index == index; });
    if (it == keyframes_.end()) {
        keyframes_.push_back(make_keyframe(sequence_, index, std::move(style)));
    } else {
        if (!style.same_extent(it->input)) {
            throw Error(ErrorCode::dimension_mismatch, "style extent differs from keyframe " + std::to_string(index));
        }
        it->style = std::move(style);
    }
    keyframes_dirty_ = true;
}

void Session::set_keyframe_mask(int index, Mask mask) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(keyframes_.begin(), keyframes_.end(), [&](const Keyframe& k) { return k.index == index; });
    if (it == keyframes_.end()) {
        if (index < 0 || static_cast<size_t>(index) >= sequence_.size()) {
            throw Error(ErrorCode::index_out_of_range, "keyframe index " + std::to_string(index) + " out of range");
        }
        keyframes_.push_back(make_keyframe(sequence_, index, sequence_.frames[index].pixels, std::move(mask)));
    } else {
        // Reuse the keyframe constructor's validation.
        *it = make_keyframe(sequence_, index, it->style, std::move(mask));
    }
    keyframes_dirty_ = true;
}

void Session::set_preview_frame(size_t frame) {
    if (frame >= sequence_.size()) {
        throw Error(ErrorCode::index_out_of_range, "preview frame " + std::to_string(frame) + " out of range");
    }
    std::lock_guard lock(mutex_);
    preview_frame_ = frame;
    preview_dirty_ = true;
}

std::shared_ptr<const Checkpoint> Session::latest_checkpoint() const {
    std::lock_guard lock(mutex_);
    return checkpoint_;
}

Image Session::stylize(size_t frame) const {
    if (frame >= sequence_.size()) {
        throw Error(ErrorCode::index_out_of_range, "frame " + std::to_string(frame) + " out of range");
    }
    auto ckpt = latest_checkpoint();
    if (!ckpt) throw Error(ErrorCode::not_found, "no checkpoint yet");
    std::lock_guard lock(render_mutex_);
    return backend_->render(*ckpt, sequence_, frame);
}

std::shared_ptr<PreviewSubscription> Session::subscribe_previews() { return previews_.subscribe(); }

void Session::apply_pending_updates() {
    std::vector<Keyframe> next;
    {
        std::lock_guard lock(mutex_);
        if (!keyframes_dirty_) return;
        next = keyframes_;
        keyframes_dirty_ = false;
    }
    backend_->replace_keyframes(std::move(next));
    std::lock_guard lock(mutex_);
    ++target_version_;
}

void Session::emit_checkpoint(bool persist) {
    auto ckpt = std::make_shared<const Checkpoint>(backend_->snapshot());
    if (persist && options_.checkpoint_dir) save_checkpoint(*options_.checkpoint_dir / (id_ + ".ckpt"), *ckpt);
    {
        std::lock_guard lock(mutex_);
        checkpoint_ = std::move(ckpt);
    }
    publish_preview();
}

void Session::publish_preview() {
    size_t frame;
    {
        std::lock_guard lock(mutex_);
        frame = preview_frame_;
        preview_dirty_ = false;
    }
    if (previews_.subscriber_count() == 0) return;
    auto ckpt = latest_checkpoint();
    if (!ckpt) return;
    Image img;
    {
        std::lock_guard lock(render_mutex_);
        img = backend_->render(*ckpt, sequence_, frame);
    }
    previews_.publish({frame, ckpt->step, ckpt->target_version, encode_png(img)});
}

void Session::loop() {
    const auto start = Clock::now();
    try {
        emit_checkpoint(true);
        auto last_emit = Clock::now();
        int64_t last_emit_step = 0;
        while (!stop_requested_) {
            apply_pending_updates();
            LossRecord record = backend_->step();
            {
                std::lock_guard lock(mutex_);
                last_record_ = record;
                steps_ = record.step;
                elapsed_ = std::chrono::duration<double>(Clock::now() - start).count();
            }
            bool due;
            if (config_.checkpoint_interval_steps > 0) {
                due = record.step - last_emit_step >= config_.checkpoint_interval_steps;
            } else {
                due = std::chrono::duration<double>(Clock::now() - last_emit).count() >=
                      config_.checkpoint_interval_seconds;
            }
            if (due) {
                emit_checkpoint(true);
                last_emit = Clock::now();
                last_emit_step = record.step;
                continue;
            }
            if (options_.device_sharing == DeviceSharing::inference_priority) {
                emit_checkpoint(false);
                continue;
            }
            bool dirty;
            {
                std::lock_guard lock(mutex_);
                dirty = preview_dirty_;
            }
            if (dirty) publish_preview();
        }
        emit_checkpoint(true);
    } catch (const std::exception&) {
        // The loop ends; status reports running = false and the last checkpoint stays valid.
    }
    running_ = false;
}

// ---------------------------------------------------------------------------

std::shared_ptr<Session> SessionManager::create(Sequence sequence, std::vector<Keyframe> keyframes,
                                                TrainConfig config, std::unique_ptr<SessionBackend> backend,
                                                SessionOptions options) {
    std::string id;
    {
        std::lock_guard lock(mutex_);
        static thread_local std::mt19937_64 rng{std::random_device{}()};
        std::ostringstream os;
        os << std::hex << (rng() & 0xffffffffULL) << '-' << ++counter_;
        id = os.str();
    }
    auto session = std::make_shared<Session>(id, std::move(sequence), std::move(keyframes), std::move(config),
                                             std::move(backend), std::move(options));
    std::lock_guard lock(mutex_);
    sessions_[id] = session;
    return session;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

bool SessionManager::remove(const std::string& id) {
    std::shared_ptr<Session> s;
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) return false;
        s = std::move(it->second);
        sessions_.erase(it);
    }
    s->close();
    return true;
}

std::vector<std::string> SessionManager::ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

void SessionManager::stop_all() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mutex_);
        for (auto& [id, s] : sessions_) all.push_back(s);
    }
    for (auto& s : all) s->close();
}

}  // namespace patchstyle
