#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "cotadapt/backend.hpp"

namespace cotadapt {

// Serves any StudentBackend over the completions HTTP protocol, so the
// remote client can be exercised without a real model server. Also used
// by the CLI to stand in for one.
class MockServer {
public:
    // `require_key`: when non-empty, requests must carry
    // "Authorization: Bearer <require_key>" or they fail with 401.
    explicit MockServer(std::shared_ptr<StudentBackend> backend, std::string require_key = "");
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    // Binds and serves on a background thread. port == 0 picks a free
    // port. Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    int port() const;
    std::string base_url() const;

    // The next `n` requests fail with 503 (for retry tests).
    void fail_next(int n);

    uint64_t handled_requests() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cotadapt
