#include "cotadapt/remote_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include "cotadapt/util.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cotadapt {
namespace {

using json = nlohmann::json;

constexpr std::ptrdiff_t kSemaphoreCeiling = 1 << 15;

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

struct RemoteBackend::Impl {
    RemoteConfig cfg;
    std::counting_semaphore<kSemaphoreCeiling> slots;
    std::string api_key;

    explicit Impl(RemoteConfig config)
        : cfg(std::move(config)), slots(std::max(1, cfg.max_concurrency)) {
        if (!cfg.api_key_env.empty()) {
            if (const char* v = std::getenv(cfg.api_key_env.c_str())) api_key = v;
        }
    }
};

RemoteBackend::RemoteBackend(RemoteConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
    if (impl_->cfg.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

RemoteBackend::~RemoteBackend() = default;

const RemoteConfig& RemoteBackend::config() const { return impl_->cfg; }

std::vector<Completion> RemoteBackend::sample_continuations(const std::string& prompt,
                                                            const SamplingParams& params) {
    params.validate();
    const RemoteConfig& cfg = impl_->cfg;

    json body;
    body["model"] = cfg.model;
    body["prompt"] = prompt;
    body["n"] = params.n;
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_new_tokens;
    if (!params.stop.empty()) body["stop"] = params.stop;
    if (params.seed) body["seed"] = *params.seed;
    std::string payload = body.dump();

    impl_->slots.acquire();
    struct Release {
        std::counting_semaphore<kSemaphoreCeiling>& s;
        ~Release() { s.release(); }
    } release{impl_->slots};

    std::string last_error;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        if (attempt > 0) {
            double delay = cfg.backoff_base_s * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }

        httplib::Client client(cfg.base_url);
        auto seconds = std::chrono::duration<double>(cfg.timeout_s);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::milliseconds>(seconds));
        httplib::Headers headers;
        if (!impl_->api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + impl_->api_key);
        }

        auto res = client.Post("/v1/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            if (retryable_status(res->status)) continue;
            throw BackendError("completions endpoint rejected request: " + last_error +
                               " body: " + res->body.substr(0, 200));
        }

        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array()) {
            last_error = "malformed completions response";
            continue;
        }

        // Place each choice by its index; anything missing or unusable
        // is reported as an errored completion rather than dropped.
        std::vector<Completion> out(static_cast<size_t>(params.n),
                                    Completion{"", FinishReason::error});
        for (const auto& choice : reply["choices"]) {
            if (!choice.is_object() || !choice.contains("text") || !choice["text"].is_string()) {
                continue;
            }
            size_t index = out.size();
            if (choice.contains("index") && choice["index"].is_number_unsigned()) {
                index = choice["index"].get<size_t>();
            }
            if (index >= out.size()) continue;
            out[index].text = choice["text"].get<std::string>();
            out[index].finish_reason = finish_reason_from_name(choice.value("finish_reason", "stop"));
        }
        count_request(params.n);
        return out;
    }
    throw BackendError("completions request failed after " + std::to_string(cfg.max_attempts) +
                       " attempts: " + last_error);
}

std::string RemoteBackend::fingerprint() const {
    return "remote;url=" + impl_->cfg.base_url + ";model=" + impl_->cfg.model;
}

}  // namespace cotadapt
