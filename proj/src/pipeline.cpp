#include "cotadapt/pipeline.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "cotadapt/util.hpp"
#include "json.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cotadapt {
namespace {

using json = nlohmann::json;

json optional_to_json(const std::optional<int>& v) {
    if (v) return *v;
    return nullptr;
}

json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

}  // namespace

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::static_keep: return "static";
        case Strategy::adaptation_first: return "adaptation_first";
        case Strategy::adaptation_gap: return "adaptation_gap";
        case Strategy::adaptation_full: return "adaptation_full";
    }
    return "static";
}

std::optional<Strategy> strategy_from_name(const std::string& name) {
    if (name == "static") return Strategy::static_keep;
    if (name == "adaptation_first") return Strategy::adaptation_first;
    if (name == "adaptation_gap") return Strategy::adaptation_gap;
    if (name == "adaptation_full") return Strategy::adaptation_full;
    return std::nullopt;
}

SamplingParams RunConfig::sim_params() const {
    SamplingParams p;
    p.n = n_sim;
    p.temperature = sim_temperature;
    p.max_new_tokens = sim_max_new_tokens;
    p.seed = sampler_seed;
    return p;
}

SamplingParams RunConfig::explore_params() const {
    SamplingParams p;
    p.n = num_samples;
    p.temperature = explore_temperature;
    p.max_new_tokens = explore_max_new_tokens;
    p.seed = sampler_seed;
    return p;
}

AdaptOutput adapt_corpus(std::span<const ExpertRecord> records, const RunConfig& config,
                         StudentBackend& backend, size_t ingest_rejected) {
    AdaptOutput out;
    RunReport& report = out.report;
    report.strategy = strategy_name(config.strategy);
    report.corpus_size = records.size();
    report.ingest_rejected = ingest_rejected;
    report.epsilon = config.epsilon;
    report.theta = config.theta;
    report.n_sim = config.n_sim;
    report.num_samples = config.num_samples;
    report.max_repetition = config.max_repetition;
    report.selection_rule = selection_rule_name(config.selection);
    report.peak_rule = config.peak_rule == PeakRule::first_peak ? "first_peak" : "global_max";
    for (const char* key : {"adapted", "discarded", "expert", "no_gap_expert", "quarantined"}) {
        report.counts[key] = 0;
    }

    uint64_t requests_before = backend.request_count();
    uint64_t rollouts_before = backend.completion_count();

    if (config.strategy == Strategy::static_keep) {
        for (const auto& rec : records) {
            AdaptedRecord row;
            row.id = rec.id;
            row.question = rec.question;
            row.final_trajectory = rec.raw_solution;
            row.provenance = "expert";
            out.dataset.push_back(std::move(row));
        }
        report.counts["expert"] = records.size();
        report.emitted = out.dataset.size();
        return out;
    }

    // Stage 1: per-step adaptability over the whole corpus.
    std::unique_ptr<ScoreCache> cache;
    if (!config.cache_path.empty()) cache = std::make_unique<ScoreCache>(config.cache_path);
    out.profiles = profile_corpus(records, config.sim_params(), backend, cache.get(),
                                  config.threads);

    // Stage 2: decide where to cut each record.
    struct Plan {
        size_t rec;
        int cut;
    };
    std::vector<Plan> plans;
    std::vector<int> decision_index(records.size(), -1);
    for (size_t r = 0; r < records.size(); ++r) {
        if (!out.profiles[r].ok()) {
            out.quarantined.push_back(
                QuarantinedRecord{records[r].id, "scoring", out.profiles[r].error, std::nullopt});
            continue;
        }
        const AdaptabilityProfile& profile = out.profiles[r].profile;
        GapDecision gap = detect_gap(profile, config.epsilon, config.peak_rule);
        std::optional<int> feasible = first_feasible(profile, config.theta);

        RecordDecision d;
        d.record_id = records[r].id;
        d.last_index = static_cast<int>(profile.scores.size()) - 1;
        d.t_peak = gap.t_peak;
        d.f_peak = gap.f_peak;
        d.t_gap = gap.t_gap;
        d.t_first = feasible;
        d.epsilon = config.epsilon;
        if (gap.t_gap) d.relative_gap_position = relative_position(*gap.t_gap, d.last_index);
        if (feasible) d.relative_first_position = relative_position(*feasible, d.last_index);

        std::optional<int> cut;
        if (config.strategy == Strategy::adaptation_first) {
            // Keep everything through the earliest feasible step.
            if (feasible) cut = *feasible + 1;
        } else {
            // Keep the steps before the gap step.
            if (gap.t_gap) cut = *gap.t_gap;
        }

        decision_index[r] = static_cast<int>(out.decisions.size());
        if (cut) {
            d.provenance = "pending";
            plans.push_back(Plan{r, *cut});
        } else {
            d.provenance = "no_gap_expert";
        }
        out.decisions.push_back(std::move(d));
    }

    // Stage 3: student exploration for every planned cut.
    struct ExploreSlot {
        ExplorationResult result;
        std::optional<AdaptedRecord> adapted;
        std::string error;
    };
    std::vector<ExploreSlot> slots(plans.size());
    SamplingParams explore_params = config.explore_params();

    int nthreads = config.threads;
#if defined(_OPENMP)
    if (nthreads <= 0) nthreads = omp_get_max_threads();
#else
    nthreads = 1;
#endif
    (void)nthreads;

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
#endif
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(plans.size()); ++i) {
        const Plan& plan = plans[static_cast<size_t>(i)];
        ExploreSlot& slot = slots[static_cast<size_t>(i)];
        try {
            slot.result =
                explore_record(records[plan.rec], plan.cut, explore_params, backend);
            slot.adapted = select_adapted(records[plan.rec], slot.result, config.max_repetition,
                                          config.selection, config.selection_seed);
        } catch (const std::exception& e) {
            slot.error = e.what();
        } catch (...) {
            slot.error = "unknown exploration failure";
        }
    }

    // Stage 4: assemble outputs in input order.
    std::vector<std::optional<size_t>> plan_of_record(records.size());
    for (size_t i = 0; i < plans.size(); ++i) plan_of_record[plans[i].rec] = i;

    for (size_t r = 0; r < records.size(); ++r) {
        if (decision_index[r] < 0) continue;  // quarantined at scoring
        RecordDecision& d = out.decisions[static_cast<size_t>(decision_index[r])];
        if (!plan_of_record[r]) {
            AdaptedRecord row;
            row.id = records[r].id;
            row.question = records[r].question;
            row.final_trajectory = records[r].raw_solution;
            row.provenance = "no_gap_expert";
            out.dataset.push_back(std::move(row));
            continue;
        }
        ExploreSlot& slot = slots[*plan_of_record[r]];
        if (!slot.error.empty()) {
            d.provenance = "discarded";
            d.reason = "exploration_failed: " + slot.error;
            continue;
        }
        out.explorations.push_back(std::move(slot.result));
        if (slot.adapted) {
            d.provenance = "adapted";
            out.dataset.push_back(std::move(*slot.adapted));
        } else {
            d.provenance = "discarded";
            d.reason = "no consistent candidate under the repetition cap";
        }
    }

    // Stage 5: counts and position summary.
    for (const auto& d : out.decisions) {
        if (d.provenance == "adapted") ++report.counts["adapted"];
        else if (d.provenance == "discarded") ++report.counts["discarded"];
        else ++report.counts["no_gap_expert"];

        double rel_gap = 0, rel_first = 0;
        if (d.relative_gap_position) {
            ++report.n_with_gap;
            rel_gap = *d.relative_gap_position;
            report.mean_relative_gap = report.mean_relative_gap.value_or(0.0) + rel_gap;
        }
        if (d.relative_first_position) {
            ++report.n_with_first;
            rel_first = *d.relative_first_position;
            report.mean_relative_first = report.mean_relative_first.value_or(0.0) + rel_first;
        }
        if (d.relative_gap_position && d.relative_first_position) {
            ++report.n_with_both;
            double diff = rel_gap - rel_first;
            if (diff < 0) diff = -diff;
            report.mean_abs_difference = report.mean_abs_difference.value_or(0.0) + diff;
        }
    }
    if (report.mean_relative_gap) *report.mean_relative_gap /= static_cast<double>(report.n_with_gap);
    if (report.mean_relative_first) {
        *report.mean_relative_first /= static_cast<double>(report.n_with_first);
    }
    if (report.mean_abs_difference) {
        *report.mean_abs_difference /= static_cast<double>(report.n_with_both);
    }

    report.counts["quarantined"] = out.quarantined.size();
    report.emitted = out.dataset.size();
    report.requests = backend.request_count() - requests_before;
    report.rollouts = backend.completion_count() - rollouts_before;
    return out;
}

std::string training_to_jsonl(std::span<const AdaptedRecord> dataset) {
    std::string out;
    for (const auto& row : dataset) {
        json obj;
        obj["id"] = row.id;
        obj["messages"] = json::array({
            json{{"role", "user"}, {"content", row.question}},
            json{{"role", "assistant"}, {"content", row.final_trajectory}},
        });
        obj["provenance"] = row.provenance;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write: " + path);
}

void emit_training_file(std::span<const AdaptedRecord> dataset, const std::string& path) {
    std::string tmp = path + ".tmp";
    try {
        write_text_file(tmp, training_to_jsonl(dataset));
        if (std::rename(tmp.c_str(), path.c_str()) != 0) {
            throw std::runtime_error("cannot move training file into place: " + path);
        }
    } catch (...) {
        std::remove(tmp.c_str());
        throw;
    }
}

std::vector<TrainingRow> parse_training_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open training file: " + path);
    std::vector<TrainingRow> rows;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_view(line).empty()) continue;
        json obj = json::parse(line, nullptr, false);
        std::string where = path + ":" + std::to_string(line_no);
        if (obj.is_discarded() || !obj.is_object()) {
            throw std::runtime_error("invalid training row at " + where);
        }
        TrainingRow row;
        row.id = obj.value("id", "");
        row.provenance = obj.value("provenance", "");
        if (!obj.contains("messages") || !obj["messages"].is_array() ||
            obj["messages"].size() != 2) {
            throw std::runtime_error("training row needs two messages at " + where);
        }
        const auto& user = obj["messages"][0];
        const auto& assistant = obj["messages"][1];
        if (user.value("role", "") != "user" || assistant.value("role", "") != "assistant") {
            throw std::runtime_error("unexpected message roles at " + where);
        }
        row.question = user.value("content", "");
        row.trajectory = assistant.value("content", "");
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string decisions_to_jsonl(std::span<const RecordDecision> decisions) {
    std::string out;
    for (const auto& d : decisions) {
        json obj;
        obj["record_id"] = d.record_id;
        obj["t_peak"] = d.t_peak;
        obj["t_gap"] = optional_to_json(d.t_gap);
        obj["f_peak"] = d.f_peak;
        obj["epsilon"] = d.epsilon;
        obj["relative_gap_position"] = optional_to_json(d.relative_gap_position);
        obj["relative_first_position"] = optional_to_json(d.relative_first_position);
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::string candidates_to_jsonl(std::span<const ExplorationResult> explorations) {
    std::string out;
    for (const auto& exploration : explorations) {
        for (const auto& cand : exploration.candidates) {
            json obj;
            obj["record_id"] = cand.record_id;
            obj["sample_index"] = cand.sample_index;
            obj["consistent"] = cand.consistent;
            obj["repetition_ratio"] = cand.repetition;
            obj["answer"] =
                cand.extracted_answer ? json(cand.extracted_answer->normalized) : json(nullptr);
            obj["length_chars"] = cand.continuation.size();
            out += obj.dump();
            out += '\n';
        }
    }
    return out;
}

std::string quarantine_to_jsonl(std::span<const QuarantinedRecord> quarantined) {
    std::string out;
    for (const auto& q : quarantined) {
        json obj;
        obj["id"] = q.id;
        obj["stage"] = q.stage;
        obj["reason"] = q.reason;
        if (q.line_number) obj["line_number"] = *q.line_number;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::string report_to_json(const RunReport& report) {
    json obj;
    obj["strategy"] = report.strategy;
    obj["corpus_size"] = report.corpus_size;
    obj["ingest_rejected"] = report.ingest_rejected;
    obj["counts"] = report.counts;
    obj["emitted"] = report.emitted;
    obj["epsilon"] = report.epsilon;
    obj["theta"] = report.theta;
    obj["n_sim"] = report.n_sim;
    obj["num_samples"] = report.num_samples;
    obj["max_repetition"] = report.max_repetition;
    obj["selection_rule"] = report.selection_rule;
    obj["peak_rule"] = report.peak_rule;
    obj["positions"] = {
        {"n_with_gap", report.n_with_gap},
        {"n_with_first", report.n_with_first},
        {"n_with_both", report.n_with_both},
        {"mean_relative_gap", optional_to_json(report.mean_relative_gap)},
        {"mean_relative_first", optional_to_json(report.mean_relative_first)},
        {"mean_abs_difference", optional_to_json(report.mean_abs_difference)},
    };
    obj["requests"] = report.requests;
    obj["rollouts"] = report.rollouts;
    return obj.dump(2) + "\n";
}

RunReport report_from_json(const std::string& content) {
    json obj = json::parse(content, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw std::runtime_error("run report is not a JSON object");
    }
    RunReport report;
    report.strategy = obj.value("strategy", "");
    report.corpus_size = obj.value("corpus_size", size_t{0});
    report.ingest_rejected = obj.value("ingest_rejected", size_t{0});
    if (obj.contains("counts") && obj["counts"].is_object()) {
        for (auto it = obj["counts"].begin(); it != obj["counts"].end(); ++it) {
            report.counts[it.key()] = it.value().get<size_t>();
        }
    }
    report.emitted = obj.value("emitted", size_t{0});
    report.epsilon = obj.value("epsilon", 0.0);
    report.theta = obj.value("theta", 0.0);
    report.n_sim = obj.value("n_sim", 0);
    report.num_samples = obj.value("num_samples", 0);
    report.max_repetition = obj.value("max_repetition", 0.0);
    report.selection_rule = obj.value("selection_rule", "");
    report.peak_rule = obj.value("peak_rule", "");
    if (obj.contains("positions") && obj["positions"].is_object()) {
        const auto& pos = obj["positions"];
        report.n_with_gap = pos.value("n_with_gap", size_t{0});
        report.n_with_first = pos.value("n_with_first", size_t{0});
        report.n_with_both = pos.value("n_with_both", size_t{0});
        auto opt_double = [&](const char* key) -> std::optional<double> {
            if (!pos.contains(key) || pos[key].is_null()) return std::nullopt;
            return pos[key].get<double>();
        };
        report.mean_relative_gap = opt_double("mean_relative_gap");
        report.mean_relative_first = opt_double("mean_relative_first");
        report.mean_abs_difference = opt_double("mean_abs_difference");
    }
    report.requests = obj.value("requests", uint64_t{0});
    report.rollouts = obj.value("rollouts", uint64_t{0});
    return report;
}

std::string render_report_text(const RunReport& report, std::optional<double> wall_ms) {
    std::ostringstream out;
    out << "strategy: " << report.strategy << "\n";
    out << "corpus: " << report.corpus_size << " records";
    if (report.ingest_rejected) out << " (+" << report.ingest_rejected << " rejected at ingest)";
    out << "\n";
    out << "emitted: " << report.emitted << "\n";
    for (const auto& [key, value] : report.counts) {
        out << "  " << key << ": " << value << "\n";
    }
    if (report.mean_relative_gap) {
        out << "mean relative gap position: " << format_fixed(*report.mean_relative_gap, 4)
            << " over " << report.n_with_gap << " records\n";
    }
    if (report.mean_relative_first) {
        out << "mean relative first-feasible position: "
            << format_fixed(*report.mean_relative_first, 4) << " over " << report.n_with_first
            << " records\n";
    }
    if (report.mean_abs_difference) {
        out << "mean |gap - first| distance: " << format_fixed(*report.mean_abs_difference, 4)
            << " over " << report.n_with_both << " records\n";
    }
    out << "requests: " << report.requests << ", rollouts: " << report.rollouts << "\n";
    if (wall_ms) out << "wall clock: " << format_fixed(*wall_ms, 1) << " ms\n";
    return out.str();
}

}  // namespace cotadapt
