#include "patchstyle/service.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

#include "patchstyle/archive.hpp"
#include "patchstyle/error.hpp"

namespace patchstyle {

namespace {

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::index_out_of_range:
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::resource: return 503;
        case ErrorCode::io: return 500;
        default: return 400;
    }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

template <typename Fn>
auto guarded(Fn fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), to_string(e.code()), e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, "invalid_argument", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

int parse_index(const std::string& text) {
    try {
        size_t used = 0;
        int v = std::stoi(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "'" + text + "' is not an integer");
    }
}

std::span<const uint8_t> body_bytes(const httplib::Request& req) {
    return {reinterpret_cast<const uint8_t*>(req.body.data()), req.body.size()};
}

// Undecodable uploads are client errors, not server failures.
template <typename Decode>
auto decode_upload(const httplib::Request& req, Decode decode) {
    try {
        return decode(body_bytes(req));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::io) throw;
        throw Error(ErrorCode::invalid_argument, std::string("request body is not a valid PNG: ") + e.what());
    }
}

std::filesystem::path request_path(const nlohmann::json& j, const char* key) {
    return std::filesystem::path(j.at(key).get<std::string>());
}

}  // namespace

std::shared_ptr<Session> create_session(SessionManager& manager, const nlohmann::json& request,
                                        const ServiceOptions& options) {
    if (!request.is_object() || !request.contains("sequence")) {
        throw Error(ErrorCode::invalid_argument, "session request needs a \"sequence\" directory");
    }
    std::optional<std::filesystem::path> masks;
    if (request.contains("masks")) masks = request_path(request, "masks");
    Sequence sequence = load_sequence(request_path(request, "sequence"), masks);
    if (request.contains("guidance")) load_guidance(sequence, request_path(request, "guidance"));

    TrainConfig config = request.contains("config") ? TrainConfig::from_json(request.at("config")) : TrainConfig{};
    config.budget = Budget::unbounded();
    if (config.use_guidance && !sequence.has_guidance()) {
        throw Error(ErrorCode::invalid_argument, "config uses guidance but the session has no guidance directory");
    }

    std::vector<Keyframe> keyframes;
    const nlohmann::json list = request.value("keyframes", nlohmann::json::array({{{"index", 0}}}));
    for (const auto& k : list) {
        int index = k.at("index").get<int>();
        if (index < 0 || static_cast<size_t>(index) >= sequence.size()) {
            throw Error(ErrorCode::index_out_of_range, "keyframe index " + std::to_string(index) + " out of range");
        }
        Image style = k.contains("style") ? read_image_rgb(request_path(k, "style")) : sequence.frames[index].pixels;
        std::optional<Mask> mask;
        if (k.contains("mask")) mask = read_mask(request_path(k, "mask"));
        keyframes.push_back(make_keyframe(sequence, index, std::move(style), std::move(mask)));
    }
    if (keyframes.empty()) throw Error(ErrorCode::invalid_argument, "session needs at least one keyframe");

    SessionOptions session_options;
    session_options.preview_frame = request.value("preview_frame", size_t{0});
    if (request.contains("device_sharing")) {
        session_options.device_sharing = parse_device_sharing(request.at("device_sharing").get<std::string>());
    }
    session_options.checkpoint_dir = options.checkpoint_dir;

    std::string backend_name = request.value("backend", std::string("trainer"));
    std::unique_ptr<SessionBackend> backend;
    if (backend_name == "trainer") {
        config.validate();
        backend = make_trainer_backend(keyframes, config);
    } else if (backend_name == "mock") {
        auto step = std::chrono::microseconds(static_cast<int64_t>(request.value("mock_step_ms", 1.0) * 1000.0));
        backend = make_mock_backend(keyframes, config, step);
    } else {
        throw Error(ErrorCode::invalid_argument, "unknown backend '" + backend_name + "'");
    }

    auto session = manager.create(std::move(sequence), std::move(keyframes), config, std::move(backend),
                                  std::move(session_options));
    session->start();
    return session;
}

struct Service::Impl {
    ServiceOptions options;
    httplib::Server server;
    SessionManager sessions;
    std::thread thread;
    std::atomic<bool> stopping{false};
    int port = 0;

    std::shared_ptr<Session> session(const httplib::Request& req) {
        auto s = sessions.find(req.matches[1]);
        if (!s) throw Error(ErrorCode::not_found, "no session '" + std::string(req.matches[1]) + "'");
        return s;
    }

    void routes() {
        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::shared_ptr<Session> s;
            try {
                s = create_session(sessions, nlohmann::json::parse(req.body), options);
            } catch (const Error& e) {
                // Paths in the request that cannot be read are the client's problem.
                if (e.code() != ErrorCode::io) throw;
                throw Error(ErrorCode::invalid_argument, e.what());
            }
            send_json(res, 201, {{"id", s->id()}});
        }));
        server.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"sessions", sessions.ids()}});
        }));
        server.Post(R"(/sessions/([^/]+)/train)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            session(req)->start();
            send_json(res, 200, {{"running", true}});
        }));
        server.Put(R"(/sessions/([^/]+)/keyframes/(-?\d+)/style)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req);
                       s->set_keyframe_style(parse_index(req.matches[2]), decode_upload(req, decode_png_rgb));
                       send_json(res, 200, {{"accepted", true}});
                   }));
        server.Put(R"(/sessions/([^/]+)/keyframes/(-?\d+)/mask)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req);
                       s->set_keyframe_mask(parse_index(req.matches[2]), decode_upload(req, decode_mask_png));
                       send_json(res, 200, {{"accepted", true}});
                   }));
        server.Get(R"(/sessions/([^/]+)/status)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, session(req)->status().to_json());
        }));
        server.Get(R"(/sessions/([^/]+)/frames/(-?\d+)/stylized)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto s = session(req);
                       int i = parse_index(req.matches[2]);
                       if (i < 0) throw Error(ErrorCode::index_out_of_range, "negative frame index");
                       auto png = encode_png(s->stylize(static_cast<size_t>(i)));
                       res.set_content(std::string(png.begin(), png.end()), "image/png");
                   }));
        server.Get(R"(/sessions/([^/]+)/checkpoint)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       auto ckpt = session(req)->latest_checkpoint();
                       if (!ckpt) throw Error(ErrorCode::not_found, "no checkpoint yet");
                       auto bytes = serialize_archive(to_archive(*ckpt));
                       res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
                   }));
        server.Post(R"(/sessions/([^/]+)/preview/frame)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        auto s = session(req);
                        int frame = nlohmann::json::parse(req.body).at("frame").get<int>();
                        if (frame < 0) throw Error(ErrorCode::index_out_of_range, "negative frame index");
                        s->set_preview_frame(static_cast<size_t>(frame));
                        send_json(res, 200, {{"frame", frame}});
                    }));
        server.Get(R"(/sessions/([^/]+)/preview)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto s = session(req);
            if (req.has_param("frame")) {
                int frame = parse_index(req.get_param_value("frame"));
                if (frame < 0) throw Error(ErrorCode::index_out_of_range, "negative frame index");
                s->set_preview_frame(static_cast<size_t>(frame));
            }
            auto sub = s->subscribe_previews();
            res.set_chunked_content_provider(
                "application/x-ndjson", [this, sub](size_t, httplib::DataSink& sink) {
                    if (stopping) {
                        sink.done();
                        return true;
                    }
                    auto m = sub->next(std::chrono::milliseconds(200));
                    if (!m) {
                        if (sub->closed()) sink.done();
                        return true;
                    }
                    nlohmann::json line{{"frame", m->frame},
                                        {"step", m->step},
                                        {"target_version", m->target_version},
                                        {"png", httplib::detail::base64_encode(
                                                    std::string(m->png.begin(), m->png.end()))}};
                    std::string text = line.dump() + "\n";
                    return sink.write(text.data(), text.size());
                });
        }));
        server.Delete(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!sessions.remove(req.matches[1])) {
                throw Error(ErrorCode::not_found, "no session '" + std::string(req.matches[1]) + "'");
            }
            send_json(res, 200, {{"deleted", true}});
        }));
        if (options.static_dir) server.set_mount_point("/", options.static_dir->string());
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
    impl_->options = std::move(options);
    impl_->routes();
}

Service::~Service() { stop(); }

int Service::start() {
    if (impl_->thread.joinable()) throw Error(ErrorCode::conflict, "service already started");
    int port = impl_->options.port > 0
                   ? (impl_->server.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1)
                   : impl_->server.bind_to_any_port(impl_->options.host);
    if (port <= 0) {
        throw Error(ErrorCode::resource, "cannot bind " + impl_->options.host + ":" +
                                             std::to_string(impl_->options.port));
    }
    impl_->port = port;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void Service::stop() {
    if (!impl_) return;
    impl_->stopping = true;
    impl_->sessions.stop_all();
    impl_->server.stop();
    if (impl_->thread.joinable() && impl_->thread.get_id() != std::this_thread::get_id()) impl_->thread.join();
}

int Service::port() const noexcept { return impl_->port; }

SessionManager& Service::sessions() noexcept { return impl_->sessions; }

}  // namespace patchstyle
