#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cotadapt {

// One reasoning step of an expert solution.
struct Step {
    int index = 0;
    std::string text;
};

// A final answer in raw and canonical form.
struct Answer {
    std::string raw;
    std::string normalized;
};

Answer make_answer(std::string raw);

// An ingested expert record. `step_joiner` is the delimiter that
// reconstructs `raw_solution` from `steps` byte-for-byte: "\n\n" when
// the solution was split on blank lines, "" when the single-paragraph
// sentence fallback was used (each piece then keeps its own trailing
// whitespace).
struct ExpertRecord {
    std::string id;
    std::string question;
    std::string raw_solution;
    std::vector<Step> steps;
    Answer answer;
    std::string step_joiner = "\n\n";
};

// Splits a solution into steps on blank lines; single-paragraph input
// falls back to sentence boundaries. Segments shorter than 2 chars after
// trimming are merged into their neighbor. Throws std::invalid_argument
// on empty input. On return, joining `steps` with `*joiner_out` (if
// non-null it receives the delimiter) reproduces the input exactly.
std::vector<Step> segment_steps(const std::string& raw_solution,
                                std::string* joiner_out = nullptr);

std::string join_steps(std::span<const Step> steps, const std::string& joiner);

// Content of the last balanced \boxed{...} span, or nullopt when no
// balanced span exists. Nested braces allowed; unbalanced spans skipped.
std::optional<std::string> extract_boxed(const std::string& text);

// extract_boxed + normalization; nullopt when nothing could be extracted
// or the normalized form is empty.
std::optional<Answer> extract_answer(const std::string& text);

// Canonical answer form: trim, strip outer $, drop \left / \right,
// collapse whitespace, then either an exact reduced rational ("p/q" or
// integer), a lowercased pure-word phrase, or the cleaned string itself.
// Idempotent.
std::string normalize_answer(const std::string& raw);

bool answers_equivalent(const std::string& a, const std::string& b);
bool answers_equivalent(const Answer& a, const Answer& b);

// Prefix of `text` through its first sentence terminator (., ?, !) that
// is outside $...$ and \boxed{...} spans and followed by whitespace or
// end of text. The whole text when no such terminator exists.
std::string first_sentence(const std::string& text);

struct QuarantinedLine {
    std::string id;      // empty when the id itself was unreadable
    size_t line_number;  // 1-based position in the input file
    std::string reason;
};

struct CorpusLoadResult {
    std::vector<ExpertRecord> records;
    std::vector<QuarantinedLine> rejected;
};

// Reads a JSONL corpus (one object per line with string fields id,
// question, solution, answer). Invalid lines are quarantined with a
// reason instead of aborting the load.
CorpusLoadResult load_corpus_jsonl(const std::string& path);
CorpusLoadResult parse_corpus_jsonl(const std::string& content);

void write_corpus_jsonl(const std::string& path, std::span<const ExpertRecord> records);
std::string corpus_to_jsonl(std::span<const ExpertRecord> records);

// Validates one already-parsed record (non-empty solution, segmentable,
// non-empty normalized answer). Returns an error message or empty string.
std::string validate_record_fields(const std::string& id, const std::string& question,
                                   const std::string& solution, const std::string& answer);

}  // namespace cotadapt
