#include "cotadapt/mock_server.hpp"

#include <chrono>
#include <stdexcept>
#include <thread>

#include "cotadapt/util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cotadapt {
namespace {

using json = nlohmann::json;

json error_body(const std::string& message, const std::string& type) {
    return json{{"error", {{"message", message}, {"type", type}}}};
}

}  // namespace

struct MockServer::Impl {
    std::shared_ptr<StudentBackend> backend;
    std::string require_key;
    httplib::Server server;
    std::thread worker;
    int bound_port = 0;
    std::string host;
    std::atomic<int> fail_budget{0};
    std::atomic<uint64_t> handled{0};
};

MockServer::MockServer(std::shared_ptr<StudentBackend> backend, std::string require_key)
    : impl_(std::make_unique<Impl>()) {
    if (!backend) throw std::invalid_argument("mock server needs a backend");
    impl_->backend = std::move(backend);
    impl_->require_key = std::move(require_key);

    impl_->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("ok", "text/plain");
    });

    impl_->server.Post("/v1/completions", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
        impl_->handled.fetch_add(1);

        if (impl_->fail_budget.load() > 0 && impl_->fail_budget.fetch_sub(1) > 0) {
            res.status = 503;
            res.set_content(error_body("injected failure", "server_error").dump(),
                            "application/json");
            return;
        }

        if (!impl_->require_key.empty()) {
            auto auth = req.get_header_value("Authorization");
            if (auth != "Bearer " + impl_->require_key) {
                res.status = 401;
                res.set_content(error_body("invalid api key", "authentication_error").dump(),
                                "application/json");
                return;
            }
        }

        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            res.status = 400;
            res.set_content(error_body("request body is not a JSON object",
                                       "invalid_request_error")
                                .dump(),
                            "application/json");
            return;
        }
        if (!body.contains("prompt") || !body["prompt"].is_string()) {
            res.status = 400;
            res.set_content(
                error_body("prompt must be a string", "invalid_request_error").dump(),
                "application/json");
            return;
        }

        SamplingParams params;
        params.n = body.value("n", 1);
        params.temperature = body.value("temperature", 1.0);
        params.max_new_tokens = body.value("max_tokens", 16);
        if (body.contains("stop")) {
            if (body["stop"].is_string()) {
                params.stop.push_back(body["stop"].get<std::string>());
            } else if (body["stop"].is_array()) {
                for (const auto& s : body["stop"]) {
                    if (s.is_string()) params.stop.push_back(s.get<std::string>());
                }
            }
        }
        if (body.contains("seed") && body["seed"].is_number_integer()) {
            params.seed = body["seed"].get<int64_t>();
        }
        std::string prompt = body["prompt"].get<std::string>();

        try {
            params.validate();
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(error_body(e.what(), "invalid_request_error").dump(),
                            "application/json");
            return;
        }

        try {
            auto completions = impl_->backend->sample_continuations(prompt, params);
            json choices = json::array();
            for (size_t i = 0; i < completions.size(); ++i) {
                choices.push_back({{"index", i},
                                   {"text", completions[i].text},
                                   {"finish_reason",
                                    finish_reason_name(completions[i].finish_reason)}});
            }
            json reply;
            reply["id"] = "cmpl-" + std::to_string(fnv1a64(prompt));
            reply["object"] = "text_completion";
            reply["created"] = 0;  // fixed so responses are reproducible
            reply["model"] = body.value("model", "scripted");
            reply["choices"] = std::move(choices);
            res.set_content(reply.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(error_body(e.what(), "server_error").dump(), "application/json");
        }
    });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
    impl_->host = host;
    if (port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(host);
        if (impl_->bound_port <= 0) throw std::runtime_error("mock server: no free port");
    } else {
        if (!impl_->server.bind_to_port(host, port)) {
            throw std::runtime_error("mock server: cannot bind port " + std::to_string(port));
        }
        impl_->bound_port = port;
    }
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    while (!impl_->server.is_running()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    return impl_->bound_port;
}

void MockServer::stop() {
    if (impl_->worker.joinable()) {
        impl_->server.stop();
        impl_->worker.join();
    }
}

int MockServer::port() const { return impl_->bound_port; }

std::string MockServer::base_url() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->bound_port);
}

void MockServer::fail_next(int n) { impl_->fail_budget.store(n); }

uint64_t MockServer::handled_requests() const { return impl_->handled.load(); }

}  // namespace cotadapt
