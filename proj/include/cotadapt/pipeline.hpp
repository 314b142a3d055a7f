#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotadapt/adaptability.hpp"
#include "cotadapt/backend.hpp"
#include "cotadapt/explore.hpp"
#include "cotadapt/gap.hpp"
#include "cotadapt/trajectory.hpp"

namespace cotadapt {

enum class Strategy {
    static_keep,      // emit expert data unchanged
    adaptation_first, // cut after the earliest feasible step, then explore
    adaptation_gap,   // cut before the detected gap step, then explore
    adaptation_full,  // gap cut plus exploration; the full pipeline
};

const char* strategy_name(Strategy s);
std::optional<Strategy> strategy_from_name(const std::string& name);

struct RunConfig {
    Strategy strategy = Strategy::adaptation_full;

    int n_sim = 4;
    double sim_temperature = 0.1;
    int sim_max_new_tokens = 4000;

    int num_samples = 8;
    double explore_temperature = 0.7;
    int explore_max_new_tokens = 2000;

    double epsilon = 0.25;
    double theta = 0.25;  // defaults to 1/n_sim at the CLI
    double max_repetition = 0.5;

    SelectionRule selection = SelectionRule::shortest;
    PeakRule peak_rule = PeakRule::first_peak;
    uint64_t selection_seed = 0;

    std::optional<int64_t> sampler_seed;  // forwarded to the backend
    int threads = 0;                      // 0 = library default
    std::string cache_path;               // empty = no cache

    SamplingParams sim_params() const;
    SamplingParams explore_params() const;
};

// Everything decided about one record. Only gap-related fields are
// serialized; the rest feeds the report and the audit trail.
struct RecordDecision {
    std::string record_id;
    int last_index = 0;
    int t_peak = 0;
    double f_peak = 0.0;
    std::optional<int> t_gap;
    std::optional<int> t_first;
    double epsilon = 0.0;
    std::optional<double> relative_gap_position;
    std::optional<double> relative_first_position;
    std::string provenance;  // adapted | no_gap_expert | discarded
    std::string reason;      // why a record was discarded, when it was
};

struct QuarantinedRecord {
    std::string id;
    std::string stage;  // "ingest" or "scoring"
    std::string reason;
    std::optional<size_t> line_number;
};

struct RunReport {
    std::string strategy;
    size_t corpus_size = 0;
    size_t ingest_rejected = 0;
    std::map<std::string, size_t> counts;  // adapted/discarded/expert/no_gap_expert/quarantined
    size_t emitted = 0;

    double epsilon = 0.0;
    double theta = 0.0;
    int n_sim = 0;
    int num_samples = 0;
    double max_repetition = 0.0;
    std::string selection_rule;
    std::string peak_rule;

    size_t n_with_gap = 0;
    size_t n_with_first = 0;
    size_t n_with_both = 0;
    std::optional<double> mean_relative_gap;
    std::optional<double> mean_relative_first;
    std::optional<double> mean_abs_difference;

    uint64_t requests = 0;
    uint64_t rollouts = 0;
};

struct AdaptOutput {
    std::vector<AdaptedRecord> dataset;            // emit-worthy rows, input order
    std::vector<RecordDecision> decisions;         // profiled records, input order
    std::vector<ProfileOutcome> profiles;          // input order, incl. failures
    std::vector<ExplorationResult> explorations;   // explored records, input order
    std::vector<QuarantinedRecord> quarantined;    // scoring-stage failures
    RunReport report;
};

// Runs the selected strategy over the corpus. `ingest_rejected` is the
// number of lines dropped before this call; it only annotates the report.
AdaptOutput adapt_corpus(std::span<const ExpertRecord> records, const RunConfig& config,
                         StudentBackend& backend, size_t ingest_rejected = 0);

// --- serialization ---------------------------------------------------

std::string training_to_jsonl(std::span<const AdaptedRecord> dataset);
// Writes via a temp file + rename so failures never leave a truncated
// training set behind.
void emit_training_file(std::span<const AdaptedRecord> dataset, const std::string& path);

struct TrainingRow {
    std::string id;
    std::string question;
    std::string trajectory;
    std::string provenance;
};
std::vector<TrainingRow> parse_training_file(const std::string& path);

std::string decisions_to_jsonl(std::span<const RecordDecision> decisions);
std::string candidates_to_jsonl(std::span<const ExplorationResult> explorations);
std::string quarantine_to_jsonl(std::span<const QuarantinedRecord> quarantined);
std::string report_to_json(const RunReport& report);
RunReport report_from_json(const std::string& content);
std::string render_report_text(const RunReport& report, std::optional<double> wall_ms);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace cotadapt
