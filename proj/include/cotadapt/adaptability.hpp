#pragma once

#include <span>
#include <string>
#include <vector>

#include "cotadapt/backend.hpp"
#include "cotadapt/gap.hpp"
#include "cotadapt/score_cache.hpp"
#include "cotadapt/trajectory.hpp"

namespace cotadapt {

// Prompt given to the student when measuring how well it can finish the
// problem after adopting the expert steps in `prefix`.
std::string render_simulation_prompt(const std::string& question, std::span<const Step> prefix);

// Fraction of `params.n` rollouts whose extracted answer matches the
// record's answer. The prefix for step t is steps[0..t] inclusive.
double estimate_step_adaptability(const ExpertRecord& record, int t, const SamplingParams& params,
                                  StudentBackend& backend);

AdaptabilityProfile profile_record(const ExpertRecord& record, const SamplingParams& params,
                                   StudentBackend& backend);

struct ProfileOutcome {
    AdaptabilityProfile profile;
    std::string error;  // non-empty when the backend failed for this record

    bool ok() const { return error.empty(); }
};

// Scores every (record, step) pair. Results are indexed by record in
// input order regardless of scheduling. `cache` may be null.
std::vector<ProfileOutcome> profile_corpus(std::span<const ExpertRecord> records,
                                           const SamplingParams& params, StudentBackend& backend,
                                           ScoreCache* cache = nullptr, int threads = 0);

// Single-threaded reference implementation with identical results; kept
// for equivalence tests and benchmarking.
std::vector<ProfileOutcome> profile_corpus_serial(std::span<const ExpertRecord> records,
                                                  const SamplingParams& params,
                                                  StudentBackend& backend,
                                                  ScoreCache* cache = nullptr);

// CSV with header record_id,t,f_t,n_sim; one row per scored step, rows
// in record order.
std::string profiles_to_csv(std::span<const ProfileOutcome> outcomes);
void write_profile_csv(const std::string& path, std::span<const ProfileOutcome> outcomes);

// Inverse of profiles_to_csv, for offline gap analysis of saved runs.
std::vector<AdaptabilityProfile> read_profile_csv(const std::string& path);

}  // namespace cotadapt
