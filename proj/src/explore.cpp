#include "cotadapt/explore.hpp"

#include <set>
#include <stdexcept>

#include "cotadapt/util.hpp"

namespace cotadapt {

std::string render_exploration_prompt(const std::string& question, std::span<const Step> prefix) {
    std::string joined;
    for (size_t i = 0; i < prefix.size(); ++i) {
        if (i) joined += '\n';
        joined += rtrim_view(prefix[i].text);
    }
    return "Question: " + question + "\nRationale before the gap: " + joined +
           "\nContinue reasoning step by step, and put your final answer within \\boxed{}.";
}

double repetition_ratio(const std::string& text) {
    constexpr size_t kGram = 8;
    std::vector<std::string> words = split_words(text);
    if (words.size() < kGram) return 0.0;

    size_t total = words.size() - kGram + 1;
    std::set<std::string> seen;
    size_t repeats = 0;
    for (size_t i = 0; i < total; ++i) {
        std::string gram;
        for (size_t k = 0; k < kGram; ++k) {
            if (k) gram += ' ';
            gram += words[i + k];
        }
        if (!seen.insert(std::move(gram)).second) ++repeats;
    }
    return static_cast<double>(repeats) / static_cast<double>(total);
}

ExplorationResult explore_record(const ExpertRecord& record, int cut,
                                 const SamplingParams& params, StudentBackend& backend) {
    params.validate();
    if (cut < 0 || static_cast<size_t>(cut) > record.steps.size()) {
        throw std::out_of_range("exploration cut out of range for record " + record.id);
    }

    std::string prompt = render_exploration_prompt(
        record.question, std::span<const Step>(record.steps).subspan(0, static_cast<size_t>(cut)));
    auto completions = backend.sample_continuations(prompt, params);

    ExplorationResult result;
    result.record_id = record.id;
    result.cut = cut;
    result.candidates.reserve(completions.size());
    for (size_t i = 0; i < completions.size(); ++i) {
        CandidateTrajectory cand;
        cand.record_id = record.id;
        cand.sample_index = static_cast<int>(i);
        cand.continuation = std::move(completions[i].text);
        cand.finish_reason = completions[i].finish_reason;
        cand.repetition = repetition_ratio(cand.continuation);
        if (cand.finish_reason != FinishReason::error) {
            cand.extracted_answer = extract_answer(cand.continuation);
        }
        cand.consistent =
            cand.extracted_answer && answers_equivalent(*cand.extracted_answer, record.answer);
        result.candidates.push_back(std::move(cand));
    }
    return result;
}

const char* selection_rule_name(SelectionRule rule) {
    switch (rule) {
        case SelectionRule::shortest: return "shortest";
        case SelectionRule::first: return "first";
        case SelectionRule::random_seeded: return "random_seeded";
    }
    return "shortest";
}

std::optional<SelectionRule> selection_rule_from_name(const std::string& name) {
    if (name == "shortest") return SelectionRule::shortest;
    if (name == "first") return SelectionRule::first;
    if (name == "random_seeded") return SelectionRule::random_seeded;
    return std::nullopt;
}

std::string compose_final_trajectory(const ExpertRecord& record, int cut,
                                     const std::string& continuation) {
    if (cut <= 0) return continuation;
    std::string prefix = join_steps(
        std::span<const Step>(record.steps).subspan(0, static_cast<size_t>(cut)),
        record.step_joiner);
    if (record.step_joiner.empty()) return prefix + continuation;
    return prefix + record.step_joiner + continuation;
}

std::optional<AdaptedRecord> select_adapted(const ExpertRecord& record,
                                            const ExplorationResult& exploration,
                                            double max_repetition, SelectionRule rule,
                                            uint64_t seed) {
    std::vector<const CandidateTrajectory*> eligible;
    for (const auto& cand : exploration.candidates) {
        if (cand.consistent && cand.repetition <= max_repetition) eligible.push_back(&cand);
    }
    if (eligible.empty()) return std::nullopt;

    const CandidateTrajectory* chosen = eligible.front();
    switch (rule) {
        case SelectionRule::first:
            break;  // eligible is already in sample order
        case SelectionRule::shortest:
            for (const auto* cand : eligible) {
                if (cand->continuation.size() < chosen->continuation.size()) chosen = cand;
            }
            break;
        case SelectionRule::random_seeded: {
            uint64_t h = fnv1a64(record.id, mix64(seed));
            chosen = eligible[static_cast<size_t>(mix64(h) % eligible.size())];
            break;
        }
    }

    AdaptedRecord out;
    out.id = record.id;
    out.question = record.question;
    out.final_trajectory = compose_final_trajectory(record, exploration.cut, chosen->continuation);
    out.provenance = "adapted";
    out.cut = exploration.cut;
    out.sample_index = chosen->sample_index;
    out.repetition = chosen->repetition;
    return out;
}

}  // namespace cotadapt
