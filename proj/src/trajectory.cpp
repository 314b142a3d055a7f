#include "cotadapt/trajectory.hpp"

#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cotadapt/util.hpp"
#include "json.hpp"

namespace cotadapt {
namespace {

using json = nlohmann::json;

// Tracks whether a scan position is inside $...$ math or a \boxed{...}
// argument, so sentence punctuation inside formulas is not treated as a
// sentence boundary.
struct MathSpanTracker {
    bool in_dollar = false;
    int boxed_depth = 0;  // brace depth inside a \boxed argument, 0 = outside

    // Feed character at position i; returns true if text[i] is inside
    // (or part of) a math span.
    bool feed(const std::string& s, size_t i) {
        char c = s[i];
        if (boxed_depth > 0) {
            if (c == '{') ++boxed_depth;
            else if (c == '}') --boxed_depth;
            return true;
        }
        if (c == '$') {
            // A run of '$' acts as one delimiter ("$$" display math).
            if (i > 0 && s[i - 1] == '$') return true;
            in_dollar = !in_dollar;
            return true;
        }
        if (in_dollar) return true;
        constexpr std::string_view kBoxed = "\\boxed{";
        if (c == '\\' && s.compare(i, kBoxed.size(), kBoxed) == 0) {
            return true;
        }
        if (c == '{' && i >= 6 && s.compare(i - 6, 7, "\\boxed{") == 0) {
            boxed_depth = 1;
            return true;
        }
        return false;
    }
};

bool is_terminator(char c) { return c == '.' || c == '?' || c == '!'; }

// Splits on sentence terminators outside math spans; each piece keeps
// its trailing whitespace so joining with "" reproduces the input.
std::vector<std::string> split_sentences_keep_ws(const std::string& raw) {
    std::vector<std::string> pieces;
    MathSpanTracker tracker;
    size_t start = 0;
    size_t i = 0;
    while (i < raw.size()) {
        bool in_math = tracker.feed(raw, i);
        if (!in_math && is_terminator(raw[i])) {
            size_t j = i + 1;
            if (j == raw.size() || std::isspace(static_cast<unsigned char>(raw[j]))) {
                while (j < raw.size() && std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
                pieces.push_back(raw.substr(start, j - start));
                start = j;
                i = j;
                continue;
            }
        }
        ++i;
    }
    if (start < raw.size()) pieces.push_back(raw.substr(start));
    return pieces;
}

// Merges fragments shorter than 2 chars (after trimming) into the
// preceding kept segment, inserting `sep` between them. A short leading
// fragment absorbs its successor instead.
std::vector<std::string> merge_short(std::vector<std::string> segs, const std::string& sep) {
    std::vector<std::string> out;
    for (auto& seg : segs) {
        if (!out.empty() && (trim_view(seg).size() < 2 || trim_view(out.back()).size() < 2)) {
            out.back() += sep + seg;
        } else {
            out.push_back(std::move(seg));
        }
    }
    return out;
}

struct Rational {
    long long num = 0;
    long long den = 1;
};

bool parse_ll(std::string_view s, long long& out) {
    if (s.empty() || s.size() > 18) return false;
    size_t i = 0;
    bool neg = false;
    if (s[0] == '+' || s[0] == '-') {
        neg = s[0] == '-';
        i = 1;
        if (i == s.size()) return false;
    }
    long long v = 0;
    for (; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        v = v * 10 + (s[i] - '0');
    }
    out = neg ? -v : v;
    return true;
}

void reduce(Rational& r) {
    if (r.den < 0) {
        r.den = -r.den;
        r.num = -r.num;
    }
    long long g = std::gcd(r.num < 0 ? -r.num : r.num, r.den);
    if (g > 1) {
        r.num /= g;
        r.den /= g;
    }
    if (r.num == 0) r.den = 1;
}

// Accepts \frac{p}{q}, p/q, decimals and integers with exact integer
// arithmetic (long long); anything else is not a rational.
std::optional<Rational> parse_rational(std::string_view s) {
    s = trim_view(s);
    if (s.empty()) return std::nullopt;

    bool neg = false;
    while (!s.empty() && (s[0] == '+' || s[0] == '-')) {
        if (s[0] == '-') neg = !neg;
        s = trim_view(s.substr(1));
    }
    if (s.empty()) return std::nullopt;

    auto negate = [&](Rational r) {
        if (neg) r.num = -r.num;
        return r;
    };

    constexpr std::string_view kFrac = "\\frac{";
    if (s.substr(0, kFrac.size()) == kFrac) {
        size_t close1 = s.find('}', kFrac.size());
        if (close1 == std::string_view::npos) return std::nullopt;
        if (close1 + 1 >= s.size() || s[close1 + 1] != '{') return std::nullopt;
        size_t close2 = s.find('}', close1 + 2);
        if (close2 == std::string_view::npos || close2 + 1 != s.size()) return std::nullopt;
        long long p, q;
        if (!parse_ll(trim_view(s.substr(kFrac.size(), close1 - kFrac.size())), p)) return std::nullopt;
        if (!parse_ll(trim_view(s.substr(close1 + 2, close2 - close1 - 2)), q)) return std::nullopt;
        if (q == 0) return std::nullopt;
        Rational r{p, q};
        reduce(r);
        return negate(r);
    }

    size_t slash = s.find('/');
    if (slash != std::string_view::npos) {
        long long p, q;
        if (!parse_ll(trim_view(s.substr(0, slash)), p)) return std::nullopt;
        if (!parse_ll(trim_view(s.substr(slash + 1)), q)) return std::nullopt;
        if (q == 0) return std::nullopt;
        Rational r{p, q};
        reduce(r);
        return negate(r);
    }

    size_t dot = s.find('.');
    if (dot != std::string_view::npos) {
        std::string_view ip = s.substr(0, dot);
        std::string_view fp = s.substr(dot + 1);
        if (ip.empty() && fp.empty()) return std::nullopt;
        if (fp.size() > 15) return std::nullopt;
        long long whole = 0;
        if (!ip.empty() && !parse_ll(ip, whole)) return std::nullopt;
        if (whole < 0) return std::nullopt;  // sign already consumed above
        long long frac = 0;
        if (!fp.empty() && !parse_ll(fp, frac)) return std::nullopt;
        if (frac < 0) return std::nullopt;
        long long den = 1;
        for (size_t i = 0; i < fp.size(); ++i) den *= 10;
        if (whole > (std::numeric_limits<long long>::max() - frac) / den) return std::nullopt;
        Rational r{whole * den + frac, den};
        reduce(r);
        return negate(r);
    }

    long long v;
    if (!parse_ll(s, v)) return std::nullopt;
    return negate(Rational{v, 1});
}

std::string rational_to_string(const Rational& r) {
    if (r.den == 1) return std::to_string(r.num);
    return std::to_string(r.num) + "/" + std::to_string(r.den);
}

std::string remove_all(std::string s, std::string_view needle) {
    size_t pos = 0;
    while ((pos = s.find(needle, pos)) != std::string::npos) s.erase(pos, needle.size());
    return s;
}

std::string collapse_ws(std::string_view s) {
    std::string out;
    bool prev_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            prev_space = true;
        } else {
            if (prev_space && !out.empty()) out += ' ';
            prev_space = false;
            out += c;
        }
    }
    return out;
}

bool is_pure_words(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isalpha(static_cast<unsigned char>(c)) && c != ' ') return false;
    }
    return true;
}

}  // namespace

Answer make_answer(std::string raw) {
    Answer a;
    a.normalized = normalize_answer(raw);
    a.raw = std::move(raw);
    return a;
}

std::vector<Step> segment_steps(const std::string& raw_solution, std::string* joiner_out) {
    if (raw_solution.empty()) throw std::invalid_argument("empty solution text");

    std::vector<std::string> segs;
    size_t pos = 0;
    while (true) {
        size_t nl = raw_solution.find("\n\n", pos);
        if (nl == std::string::npos) {
            segs.push_back(raw_solution.substr(pos));
            break;
        }
        segs.push_back(raw_solution.substr(pos, nl - pos));
        pos = nl + 2;
    }

    std::string joiner;
    std::vector<std::string> merged;
    if (segs.size() > 1) {
        joiner = "\n\n";
        merged = merge_short(std::move(segs), joiner);
    } else {
        joiner = "";
        merged = merge_short(split_sentences_keep_ws(raw_solution), joiner);
    }
    if (merged.empty()) throw std::invalid_argument("solution has no usable steps");

    std::vector<Step> steps;
    steps.reserve(merged.size());
    for (size_t i = 0; i < merged.size(); ++i) {
        steps.push_back(Step{static_cast<int>(i), std::move(merged[i])});
    }
    if (joiner_out) *joiner_out = joiner;
    return steps;
}

std::string join_steps(std::span<const Step> steps, const std::string& joiner) {
    std::string out;
    for (size_t i = 0; i < steps.size(); ++i) {
        if (i) out += joiner;
        out += steps[i].text;
    }
    return out;
}

std::optional<std::string> extract_boxed(const std::string& text) {
    constexpr std::string_view kMarker = "\\boxed{";
    std::optional<std::string> last;
    size_t pos = 0;
    while ((pos = text.find(kMarker, pos)) != std::string::npos) {
        size_t body = pos + kMarker.size();
        int depth = 1;
        size_t i = body;
        for (; i < text.size(); ++i) {
            if (text[i] == '{') ++depth;
            else if (text[i] == '}' && --depth == 0) break;
        }
        if (depth == 0) {
            last = text.substr(body, i - body);
            pos = i + 1;
        } else {
            pos = body;  // unbalanced span: skip the marker, keep scanning
        }
    }
    return last;
}

std::optional<Answer> extract_answer(const std::string& text) {
    auto boxed = extract_boxed(text);
    if (!boxed) return std::nullopt;
    Answer a = make_answer(std::move(*boxed));
    if (a.normalized.empty()) return std::nullopt;
    return a;
}

std::string normalize_answer(const std::string& raw) {
    std::string s = trim(raw);
    while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
        s = trim(s.substr(1, s.size() - 2));
    }
    s = remove_all(std::move(s), "\\left");
    s = remove_all(std::move(s), "\\right");
    s = collapse_ws(s);
    if (auto r = parse_rational(s)) return rational_to_string(*r);
    if (is_pure_words(s)) return to_lower(s);
    return s;
}

bool answers_equivalent(const std::string& a, const std::string& b) {
    std::string na = normalize_answer(a);
    std::string nb = normalize_answer(b);
    return !na.empty() && na == nb;
}

bool answers_equivalent(const Answer& a, const Answer& b) {
    return !a.normalized.empty() && a.normalized == b.normalized;
}

std::string first_sentence(const std::string& text) {
    MathSpanTracker tracker;
    for (size_t i = 0; i < text.size(); ++i) {
        bool in_math = tracker.feed(text, i);
        if (!in_math && is_terminator(text[i])) {
            if (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))) {
                return text.substr(0, i + 1);
            }
        }
    }
    return text;
}

std::string validate_record_fields(const std::string& id, const std::string& question,
                                   const std::string& solution, const std::string& answer) {
    if (trim_view(id).empty()) return "missing or empty id";
    if (trim_view(question).empty()) return "missing or empty question";
    if (solution.empty()) return "missing or empty solution";
    if (normalize_answer(answer).empty()) return "answer is empty after normalization";
    try {
        segment_steps(solution);
    } catch (const std::exception& e) {
        return std::string("unsegmentable solution: ") + e.what();
    }
    return "";
}

CorpusLoadResult parse_corpus_jsonl(const std::string& content) {
    CorpusLoadResult out;
    std::istringstream in(content);
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        std::string id;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            out.rejected.push_back({"", line_no, "line is not a JSON object"});
            continue;
        }
        if (obj.contains("id") && obj["id"].is_string()) id = obj["id"].get<std::string>();
        auto field = [&](const char* key) -> std::optional<std::string> {
            if (!obj.contains(key) || !obj[key].is_string()) return std::nullopt;
            return obj[key].get<std::string>();
        };
        auto question = field("question");
        auto solution = field("solution");
        auto answer = field("answer");
        if (!question || !solution || !answer) {
            out.rejected.push_back({id, line_no, "missing string field (id/question/solution/answer)"});
            continue;
        }
        std::string err = validate_record_fields(id, *question, *solution, *answer);
        if (!err.empty()) {
            out.rejected.push_back({id, line_no, err});
            continue;
        }

        ExpertRecord rec;
        rec.id = id;
        rec.question = std::move(*question);
        rec.raw_solution = std::move(*solution);
        rec.steps = segment_steps(rec.raw_solution, &rec.step_joiner);
        // Answers sometimes arrive already boxed; unwrap before normalizing.
        std::string raw_answer = *answer;
        if (auto boxed = extract_boxed(raw_answer)) raw_answer = *boxed;
        rec.answer = make_answer(std::move(raw_answer));
        if (rec.answer.normalized.empty()) {
            out.rejected.push_back({rec.id, line_no, "answer is empty after normalization"});
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

CorpusLoadResult load_corpus_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_corpus_jsonl(ss.str());
}

std::string corpus_to_jsonl(std::span<const ExpertRecord> records) {
    std::string out;
    for (const auto& rec : records) {
        json obj;
        obj["id"] = rec.id;
        obj["question"] = rec.question;
        obj["solution"] = rec.raw_solution;
        obj["answer"] = rec.answer.raw;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void write_corpus_jsonl(const std::string& path, std::span<const ExpertRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    out << corpus_to_jsonl(records);
}

}  // namespace cotadapt
