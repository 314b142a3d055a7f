#pragma once

#include <span>
#include <string>
#include <vector>

namespace cotadapt {

// Lowercased alphanumeric tokens drawn from the first sentence of every
// step of a trajectory text.
std::vector<std::string> first_sentence_tokens(const std::string& trajectory);

struct KeywordStat {
    std::string keyword;
    long long count_before = 0;
    long long count_after = 0;
    double per100_before = 0.0;  // occurrences per 100 first-sentence tokens
    double per100_after = 0.0;
    double delta = 0.0;          // per100_after - per100_before
};

struct LexicalReport {
    long long tokens_before = 0;
    long long tokens_after = 0;
    std::vector<KeywordStat> rows;  // in keyword order given
};

// Compares keyword rates in step-opening sentences between two sets of
// trajectories (e.g. an unadapted and an adapted training set).
LexicalReport lexical_shift(std::span<const std::string> before,
                            std::span<const std::string> after,
                            const std::vector<std::string>& keywords);

// Markers of self-correction and review that tend to shift when a
// student rewrites the tail of a solution in its own voice.
std::vector<std::string> default_reflective_keywords();

// CSV: keyword,count_before,per100_before,count_after,per100_after,delta
// with rates fixed to two decimals.
std::string lexical_to_csv(const LexicalReport& report);

}  // namespace cotadapt
