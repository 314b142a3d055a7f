#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

namespace cotadapt {

// Persistent memo of per-step rollout outcomes keyed by record, step,
// sampling parameters and backend identity. Stores the integer hit
// count rather than the ratio so reloaded scores are bit-exact.
// Append-only text file; unreadable or partial lines are ignored so a
// truncated cache degrades to re-scoring, never to wrong results.
// Thread-safe.
class ScoreCache {
public:
    struct Key {
        std::string record_id;
        int step = 0;
        std::string params_fp;
        std::string backend_fp;
    };

    struct Entry {
        int hits = 0;
        int n_sim = 0;
    };

    // Loads existing entries if the file exists; otherwise starts empty
    // and creates the file on first insert.
    explicit ScoreCache(std::string path);

    std::optional<Entry> lookup(const Key& key) const;
    void insert(const Key& key, Entry entry);

    size_t size() const;
    const std::string& path() const { return path_; }

private:
    static std::string encode_key(const Key& key);

    std::string path_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Entry> entries_;
    bool header_written_ = false;
};

}  // namespace cotadapt
