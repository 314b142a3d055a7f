#include "cotadapt/score_cache.hpp"

#include <fstream>
#include <sstream>
#include <vector>

namespace cotadapt {
namespace {

constexpr const char* kHeader = "cotadapt-cache v1";

// Tab/newline/backslash-escaped so arbitrary ids survive the TSV format.
std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t tab = line.find('\t', pos);
        if (tab == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
}

bool parse_int(const std::string& s, int& out) {
    if (s.empty() || s.size() > 9) return false;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

}  // namespace

std::string ScoreCache::encode_key(const Key& key) {
    return escape(key.record_id) + "\t" + std::to_string(key.step) + "\t" +
           escape(key.params_fp) + "\t" + escape(key.backend_fp);
}

ScoreCache::ScoreCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            if (line != kHeader) return;  // wrong version: ignore entirely
            header_written_ = true;
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 6) continue;  // partial/corrupt line: skip
        Entry e;
        if (!parse_int(cols[4], e.hits) || !parse_int(cols[5], e.n_sim)) continue;
        if (e.n_sim <= 0 || e.hits < 0 || e.hits > e.n_sim) continue;
        entries_[cols[0] + "\t" + cols[1] + "\t" + cols[2] + "\t" + cols[3]] = e;
    }
}

std::optional<ScoreCache::Entry> ScoreCache::lookup(const Key& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(encode_key(key));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ScoreCache::insert(const Key& key, Entry entry) {
    std::lock_guard<std::mutex> lock(mu_);
    std::string encoded = encode_key(key);
    if (!entries_.emplace(encoded, entry).second) return;  // already stored

    // A missing or wrong-version file is rewritten from scratch.
    auto mode = std::ios::binary | (header_written_ ? std::ios::app : std::ios::trunc);
    std::ofstream out(path_, mode);
    if (!out) return;  // cache is best-effort; scoring already succeeded
    if (!header_written_) {
        out << kHeader << "\n";
        header_written_ = true;
    }
    out << encoded << "\t" << entry.hits << "\t" << entry.n_sim << "\n";
    out.flush();
}

size_t ScoreCache::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

}  // namespace cotadapt
