#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotadapt/backend.hpp"
#include "cotadapt/trajectory.hpp"

namespace cotadapt {

// Prompt for letting the student continue on its own from the steps
// before the detected gap. Identical to the simulation prompt except
// for the rationale label.
std::string render_exploration_prompt(const std::string& question, std::span<const Step> prefix);

// Fraction of overlapping word-level 8-grams that already occurred at
// an earlier start position; 0 for texts shorter than 8 words.
double repetition_ratio(const std::string& text);

struct CandidateTrajectory {
    std::string record_id;
    int sample_index = 0;
    std::string continuation;
    std::optional<Answer> extracted_answer;
    bool consistent = false;       // extracted answer matches the expert answer
    double repetition = 0.0;       // repetition_ratio(continuation)
    FinishReason finish_reason = FinishReason::stop;
};

struct ExplorationResult {
    std::string record_id;
    int cut = 0;                   // number of expert steps kept (prefix = steps[0..cut-1])
    std::vector<CandidateTrajectory> candidates;
};

// Samples params.n continuations from the prefix of `cut` expert steps
// (cut == 0 explores from scratch) and grades each one.
ExplorationResult explore_record(const ExpertRecord& record, int cut,
                                 const SamplingParams& params, StudentBackend& backend);

enum class SelectionRule {
    shortest,       // fewest characters; lowest sample index on ties
    first,          // lowest sample index
    random_seeded,  // deterministic pick keyed by (seed, record id)
};

const char* selection_rule_name(SelectionRule rule);
std::optional<SelectionRule> selection_rule_from_name(const std::string& name);

struct AdaptedRecord {
    std::string id;
    std::string question;
    std::string final_trajectory;
    std::string provenance;            // expert | no_gap_expert | adapted
    std::optional<int> cut;            // expert steps kept, when adapted
    int sample_index = -1;             // chosen candidate, when adapted
    double repetition = 0.0;           // of the chosen continuation
};

// Keeps at most one candidate: consistent, repetition <= max_repetition,
// picked by `rule`. Returns nullopt when every candidate fails.
std::optional<AdaptedRecord> select_adapted(const ExpertRecord& record,
                                            const ExplorationResult& exploration,
                                            double max_repetition, SelectionRule rule,
                                            uint64_t seed);

// The retained trajectory: kept expert steps followed by the student
// continuation, joined so the expert prefix stays byte-for-byte intact.
std::string compose_final_trajectory(const ExpertRecord& record, int cut,
                                     const std::string& continuation);

}  // namespace cotadapt
