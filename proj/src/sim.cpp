#include "cotadapt/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cotadapt/util.hpp"

namespace cotadapt {
namespace {

constexpr double kEasyLo = 0.02, kEasyHi = 0.12;
constexpr double kHumpLo = 0.85, kHumpHi = 0.95;
constexpr int kHumpLen = 2;
constexpr double kTempRef = 0.1;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

const char* verb_for(char kind) {
    switch (kind) {
        case '+': return "add";
        case '-': return "subtract";
        default: return "multiply by";
    }
}

long long apply_op(long long v, const SyntheticTask::Op& op) {
    switch (op.kind) {
        case '+': return v + op.operand;
        case '-': return v - op.operand;
        default: return v * op.operand;
    }
}

std::string op_phrase(const SyntheticTask::Op& op) {
    return std::string(verb_for(op.kind)) + " " + std::to_string(op.operand);
}

// Everything the scripted student needs from a prompt.
struct ParsedPrompt {
    std::optional<SyntheticTask> task;
    int position = -1;  // index of the last adopted expert step
};

ParsedPrompt parse_prompt(const std::string& prompt) {
    ParsedPrompt out;
    auto ref = parse_task_ref(prompt);
    if (!ref) return out;
    out.task = synthetic_task_for(ref->first, ref->second);

    constexpr std::string_view kGapLabel = "Rationale before the gap: ";
    constexpr std::string_view kSimLabel = "Rationale so far: ";
    size_t label_pos = prompt.find(kGapLabel);
    size_t label_len = kGapLabel.size();
    if (label_pos == std::string::npos) {
        label_pos = prompt.find(kSimLabel);
        label_len = kSimLabel.size();
    }
    int adopted = 0;
    if (label_pos != std::string::npos) {
        size_t start = label_pos + label_len;
        size_t end = prompt.rfind("\nContinue reasoning step by step");
        if (end == std::string::npos || end < start) end = prompt.size();
        std::string rationale = prompt.substr(start, end - start);
        size_t pos = 0;
        while (pos <= rationale.size()) {
            size_t nl = rationale.find('\n', pos);
            size_t len = (nl == std::string::npos ? rationale.size() : nl) - pos;
            if (!trim_view(std::string_view(rationale).substr(pos, len)).empty()) ++adopted;
            if (nl == std::string::npos) break;
            pos = nl + 1;
        }
    }
    out.position = adopted - 1;
    return out;
}

}  // namespace

long long SyntheticTask::value_after(size_t u) const {
    long long v = start;
    for (size_t i = 0; i < u && i < ops.size(); ++i) v = apply_op(v, ops[i]);
    return v;
}

std::optional<std::pair<uint64_t, uint64_t>> parse_task_ref(const std::string& text) {
    size_t pos = text.find("sim-s");
    if (pos == std::string::npos) return std::nullopt;
    size_t i = pos + 5;
    auto read_u64 = [&](uint64_t& out) {
        if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) return false;
        out = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            out = out * 10 + static_cast<uint64_t>(text[i] - '0');
            ++i;
        }
        return true;
    };
    uint64_t seed = 0, index = 0;
    if (!read_u64(seed)) return std::nullopt;
    if (i + 1 >= text.size() || text[i] != '-' || text[i + 1] != 'i') return std::nullopt;
    i += 2;
    if (!read_u64(index)) return std::nullopt;
    return std::make_pair(seed, index);
}

SyntheticTask synthetic_task_for(uint64_t corpus_seed, uint64_t index) {
    Rng64 rng(mix64(fnv1a64_u64(index, fnv1a64_u64(corpus_seed))));

    SyntheticTask task;
    task.id = "sim-s" + std::to_string(corpus_seed) + "-i" + std::to_string(index);
    task.start = rng.next_int(2, 30);

    int pre = static_cast<int>(rng.next_int(4, 7));
    int post = static_cast<int>(rng.next_int(1, 2));
    auto push_op = [&](double lo, double hi) {
        SyntheticTask::Op op;
        bool allow_mul = task.ops.size() < 2;
        int pick = static_cast<int>(rng.next_int(0, allow_mul ? 5 : 4));
        if (pick == 5) {
            op.kind = '*';
            op.operand = rng.next_int(2, 3);
        } else if (pick >= 3) {
            op.kind = '-';
            op.operand = rng.next_int(2, 19);
        } else {
            op.kind = '+';
            op.operand = rng.next_int(2, 19);
        }
        task.ops.push_back(op);
        task.difficulty.push_back(rng.next_double_in(lo, hi));
    };
    for (int i = 0; i < pre; ++i) push_op(kEasyLo, kEasyHi);
    for (int i = 0; i < kHumpLen; ++i) push_op(kHumpLo, kHumpHi);
    for (int i = 0; i < post; ++i) push_op(kEasyLo, kEasyHi);
    task.difficulty.push_back(0.0);  // the reveal step states the answer

    task.answer = task.value_after(task.ops.size());

    std::vector<std::string> phrases;
    long long v = task.start;
    for (size_t u = 0; u < task.ops.size(); ++u) {
        long long next = apply_op(v, task.ops[u]);
        task.step_texts.push_back("Step " + std::to_string(u + 1) + ": starting from " +
                                  std::to_string(v) + ", " + op_phrase(task.ops[u]) +
                                  " to reach " + std::to_string(next) + ".");
        phrases.push_back(op_phrase(task.ops[u]));
        v = next;
    }
    task.step_texts.push_back("Thus the final answer is \\boxed{" + std::to_string(task.answer) +
                              "}.");

    task.question = "Task " + task.id + ": start with " + std::to_string(task.start) +
                    " and apply these operations in order: " + join(phrases, ", ") +
                    ". What is the final value?";
    task.solution = join(task.step_texts, "\n\n");
    return task;
}

std::vector<ExpertRecord> generate_synthetic_corpus(int count, uint64_t corpus_seed) {
    std::vector<ExpertRecord> records;
    records.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        SyntheticTask task = synthetic_task_for(corpus_seed, static_cast<uint64_t>(i));
        ExpertRecord rec;
        rec.id = task.id;
        rec.question = task.question;
        rec.raw_solution = task.solution;
        rec.steps = segment_steps(rec.raw_solution, &rec.step_joiner);
        rec.answer = make_answer(std::to_string(task.answer));
        records.push_back(std::move(rec));
    }
    return records;
}

double analytic_success(const SyntheticTask& task, int position, const StudentModel& model,
                        double temperature) {
    int last = task.last_step_index();
    if (position >= last) return 1.0;  // the boxed answer is already in the prefix

    auto excess = [&](int u) {
        return std::max(0.0, task.difficulty[static_cast<size_t>(u)] - model.capacity);
    };
    double temp_factor = clamp01(1.0 - model.temp_derail * std::max(0.0, temperature - kTempRef));
    double p = 1.0;
    for (int u = 0; u <= position; ++u) {
        p *= clamp01(1.0 - model.derail * excess(u));
    }
    for (int u = position + 1; u <= last; ++u) {
        p *= clamp01((1.0 - model.slip) * (1.0 - model.solve_penalty * excess(u)) * temp_factor);
    }
    return p;
}

std::vector<Completion> ScriptedStudent::sample_continuations(const std::string& prompt,
                                                              const SamplingParams& params) {
    params.validate();
    ParsedPrompt parsed = parse_prompt(prompt);
    uint64_t eff_seed =
        params.seed ? static_cast<uint64_t>(*params.seed) : model_.seed;

    std::vector<Completion> out;
    out.reserve(static_cast<size_t>(params.n));
    for (int i = 0; i < params.n; ++i) {
        uint64_t h = fnv1a64(prompt);
        h = fnv1a64_u64(eff_seed, h);
        h = fnv1a64_u64(static_cast<uint64_t>(i), h);
        Rng64 rng(mix64(h));

        std::string text;
        if (!parsed.task) {
            text = "I do not recognize this problem, so I cannot give a final value.";
        } else {
            const SyntheticTask& task = *parsed.task;
            double p = analytic_success(task, parsed.position, model_, params.temperature);
            bool success = rng.next_double() < p;

            std::vector<std::string> lines;
            int t = parsed.position;
            if (success) {
                if (t < 0) lines.push_back("I start from " + std::to_string(task.start) + ".");
                for (int u = std::max(0, t + 1); u < static_cast<int>(task.ops.size()); ++u) {
                    lines.push_back("Next, I " + op_phrase(task.ops[static_cast<size_t>(u)]) +
                                    " and get " +
                                    std::to_string(task.value_after(static_cast<size_t>(u) + 1)) +
                                    ".");
                }
                if (model_.loop_fraction > 0 && rng.next_double() < model_.loop_fraction) {
                    for (int r = 0; r < 12; ++r) {
                        lines.push_back(
                            "I should double check the running total one more time to be safe.");
                    }
                }
                lines.push_back("So the final answer is \\boxed{" + std::to_string(task.answer) +
                                "}.");
            } else {
                int mode = static_cast<int>(rng.next_int(0, 3));
                if (mode == 0) {
                    lines.push_back(
                        "I try rearranging the remaining operations but the totals disagree, and "
                        "I cannot settle on a value (attempt " +
                        std::to_string(rng.next_int(100, 999)) + ").");
                } else {
                    long long delta = (1 + rng.next_int(0, 22)) * (rng.next_u64() & 1 ? 1 : -1);
                    if (t < 0) lines.push_back("I start from " + std::to_string(task.start) + ".");
                    for (int u = std::max(0, t + 1); u < static_cast<int>(task.ops.size()); ++u) {
                        lines.push_back("Next, I " + op_phrase(task.ops[static_cast<size_t>(u)]) +
                                        " and get " +
                                        std::to_string(
                                            task.value_after(static_cast<size_t>(u) + 1)) +
                                        ".");
                    }
                    lines.push_back("So the final answer is \\boxed{" +
                                    std::to_string(task.answer + delta) + "}.");
                }
            }
            text = join(lines, "\n");
        }

        // Stop sequences and the token budget both cut the stream; the
        // earlier boundary wins. Words stand in for tokens here.
        size_t stop_cut = std::string::npos;
        for (const auto& s : params.stop) {
            if (s.empty()) continue;
            size_t at = text.find(s);
            if (at != std::string::npos && at < stop_cut) stop_cut = at;
        }
        size_t budget_cut = std::string::npos;
        {
            int words = 0;
            size_t j = 0;
            while (j < text.size()) {
                while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
                if (j >= text.size()) break;
                if (words == params.max_new_tokens) {
                    budget_cut = j;
                    break;
                }
                while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
                ++words;
            }
        }

        Completion c;
        if (stop_cut != std::string::npos && stop_cut <= budget_cut) {
            c.text = text.substr(0, stop_cut);
            c.finish_reason = FinishReason::stop;
        } else if (budget_cut != std::string::npos) {
            c.text = std::string(rtrim_view(text.substr(0, budget_cut)));
            c.finish_reason = FinishReason::length;
        } else {
            c.text = std::move(text);
            c.finish_reason = FinishReason::stop;
        }
        out.push_back(std::move(c));
    }
    count_request(params.n);
    return out;
}

std::string ScriptedStudent::fingerprint() const {
    std::string fp = "scripted;c=" + format_double(model_.capacity);
    fp += ";seed=" + std::to_string(model_.seed);
    fp += ";slip=" + format_double(model_.slip);
    fp += ";pen=" + format_double(model_.solve_penalty);
    fp += ";derail=" + format_double(model_.derail);
    fp += ";td=" + format_double(model_.temp_derail);
    fp += ";loop=" + format_double(model_.loop_fraction);
    return fp;
}

}  // namespace cotadapt
