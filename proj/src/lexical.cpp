#include "cotadapt/lexical.hpp"

#include <unordered_map>

#include "cotadapt/trajectory.hpp"
#include "cotadapt/util.hpp"

namespace cotadapt {
namespace {

void tokenize_into(const std::string& sentence, std::vector<std::string>& out) {
    size_t i = 0;
    while (i < sentence.size()) {
        while (i < sentence.size() && !std::isalnum(static_cast<unsigned char>(sentence[i]))) ++i;
        size_t j = i;
        while (j < sentence.size() && std::isalnum(static_cast<unsigned char>(sentence[j]))) ++j;
        if (j > i) out.push_back(to_lower(std::string_view(sentence).substr(i, j - i)));
        i = j;
    }
}

struct Tally {
    long long tokens = 0;
    std::unordered_map<std::string, long long> counts;
};

Tally tally_corpus(std::span<const std::string> texts, const std::vector<std::string>& keywords) {
    Tally tally;
    for (const auto& kw : keywords) tally.counts[to_lower(kw)];
    std::vector<std::string> tokens;
    for (const auto& text : texts) {
        tokens.clear();
        for (const auto& tok : first_sentence_tokens(text)) tokens.push_back(tok);
        tally.tokens += static_cast<long long>(tokens.size());
        for (const auto& tok : tokens) {
            auto it = tally.counts.find(tok);
            if (it != tally.counts.end()) ++it->second;
        }
    }
    return tally;
}

double per100(long long count, long long tokens) {
    if (tokens == 0) return 0.0;
    return 100.0 * static_cast<double>(count) / static_cast<double>(tokens);
}

}  // namespace

std::vector<std::string> first_sentence_tokens(const std::string& trajectory) {
    std::vector<std::string> out;
    if (trajectory.empty()) return out;
    for (const auto& step : segment_steps(trajectory)) {
        tokenize_into(first_sentence(step.text), out);
    }
    return out;
}

LexicalReport lexical_shift(std::span<const std::string> before,
                            std::span<const std::string> after,
                            const std::vector<std::string>& keywords) {
    Tally tb = tally_corpus(before, keywords);
    Tally ta = tally_corpus(after, keywords);

    LexicalReport report;
    report.tokens_before = tb.tokens;
    report.tokens_after = ta.tokens;
    for (const auto& kw : keywords) {
        KeywordStat stat;
        stat.keyword = to_lower(kw);
        stat.count_before = tb.counts[stat.keyword];
        stat.count_after = ta.counts[stat.keyword];
        stat.per100_before = per100(stat.count_before, tb.tokens);
        stat.per100_after = per100(stat.count_after, ta.tokens);
        stat.delta = stat.per100_after - stat.per100_before;
        report.rows.push_back(std::move(stat));
    }
    return report;
}

std::vector<std::string> default_reflective_keywords() {
    return {"wait",    "but",  "however", "check",   "verify",
            "alternatively", "actually", "hmm", "recheck", "instead"};
}

std::string lexical_to_csv(const LexicalReport& report) {
    std::string out = "keyword,count_before,per100_before,count_after,per100_after,delta\n";
    for (const auto& row : report.rows) {
        out += row.keyword;
        out += ',' + std::to_string(row.count_before);
        out += ',' + format_fixed(row.per100_before, 2);
        out += ',' + std::to_string(row.count_after);
        out += ',' + format_fixed(row.per100_after, 2);
        out += ',' + format_fixed(row.delta, 2);
        out += '\n';
    }
    return out;
}

}  // namespace cotadapt
