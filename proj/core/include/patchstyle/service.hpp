#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "patchstyle/session.hpp"

namespace patchstyle {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 0;  // 0 picks a free port
    /// Served under / when set (the studio bundle).
    std::optional<std::filesystem::path> static_dir;
    /// Each session writes its latest checkpoint to <dir>/<id>.ckpt when set.
    std::optional<std::filesystem::path> checkpoint_dir;
};

/// Builds a session from a POST /sessions body:
///   {"sequence": dir, "masks"?: dir, "guidance"?: dir,
///    "keyframes": [{"index", "style"?, "mask"?}], "config"?: {...},
///    "preview_frame"?: n, "device_sharing"?: "trainer"|"inference",
///    "backend"?: "trainer"|"mock", "mock_step_ms"?: n}
/// A keyframe without a style starts from its own input frame.
std::shared_ptr<Session> create_session(SessionManager& manager, const nlohmann::json& request,
                                        const ServiceOptions& options = {});

/// HTTP front end over a SessionManager.
///
///   POST   /sessions                           -> 201 {id}
///   GET    /sessions                           -> {sessions: [id]}
///   POST   /sessions/{id}/train                -> 409 when a loop is already running
///   PUT    /sessions/{id}/keyframes/{k}/style  PNG body
///   PUT    /sessions/{id}/keyframes/{k}/mask   PNG body
///   GET    /sessions/{id}/status               -> {step, elapsed, loss, ...}
///   GET    /sessions/{id}/frames/{i}/stylized  -> PNG
///   GET    /sessions/{id}/checkpoint           -> checkpoint archive
///   GET    /sessions/{id}/preview[?frame=i]    -> chunked JSON lines {frame, step, target_version, png}
///   POST   /sessions/{id}/preview/frame        {frame}
///   DELETE /sessions/{id}
class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Blocks until `stop` is called.
    void wait();
    void stop();

    int port() const noexcept;
    SessionManager& sessions() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace patchstyle
