#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cotadapt {

struct SamplingParams {
    int n = 1;
    double temperature = 0.0;
    int max_new_tokens = 256;
    std::vector<std::string> stop;
    std::optional<int64_t> seed;

    // Throws std::invalid_argument when out of range.
    void validate() const;

    // Stable key string for caching; includes every field that can
    // change a completion.
    std::string fingerprint() const;
};

enum class FinishReason { stop, length, error };

const char* finish_reason_name(FinishReason r);
FinishReason finish_reason_from_name(const std::string& name);

struct Completion {
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
};

// Raised when a backend cannot produce completions at all (transport
// failure, exhausted retries). Per-completion failures are reported via
// FinishReason::error instead.
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A student model that can continue a prompt. Implementations must be
// safe to call from multiple threads.
class StudentBackend {
public:
    virtual ~StudentBackend() = default;

    // Returns exactly params.n completions for the prompt.
    virtual std::vector<Completion> sample_continuations(const std::string& prompt,
                                                         const SamplingParams& params) = 0;

    // Stable identity string; changes whenever sampling behavior would.
    virtual std::string fingerprint() const = 0;

    uint64_t request_count() const { return requests_.load(); }
    uint64_t completion_count() const { return completions_.load(); }
    void reset_counters() {
        requests_.store(0);
        completions_.store(0);
    }

protected:
    void count_request(int n) {
        requests_.fetch_add(1);
        completions_.fetch_add(static_cast<uint64_t>(n));
    }

private:
    std::atomic<uint64_t> requests_{0};
    std::atomic<uint64_t> completions_{0};
};

}  // namespace cotadapt
