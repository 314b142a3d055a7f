#pragma once

#include <memory>
#include <string>

#include "cotadapt/backend.hpp"

namespace cotadapt {

struct RemoteConfig {
    std::string base_url = "http://127.0.0.1:8080";
    std::string model = "student";
    // Name of the environment variable holding the bearer token; unset
    // or empty means no Authorization header.
    std::string api_key_env = "COTADAPT_API_KEY";
    double timeout_s = 120.0;
    int max_concurrency = 32;  // in-flight request cap
    int max_attempts = 3;
    double backoff_base_s = 0.5;  // grows 2x per retry
};

// Client for an HTTP completions endpoint (POST {base_url}/v1/completions
// with model/prompt/n/temperature/max_tokens/stop/seed; responses carry
// choices[i].text and finish_reason). Transient failures (connect
// errors, 429, 5xx) are retried with exponential backoff; other HTTP
// errors raise BackendError immediately. Thread-safe; a counting
// semaphore bounds concurrent requests.
class RemoteBackend : public StudentBackend {
public:
    explicit RemoteBackend(RemoteConfig config);
    ~RemoteBackend() override;

    std::vector<Completion> sample_continuations(const std::string& prompt,
                                                 const SamplingParams& params) override;
    std::string fingerprint() const override;

    const RemoteConfig& config() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cotadapt
