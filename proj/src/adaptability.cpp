#include "cotadapt/adaptability.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cotadapt/util.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cotadapt {
namespace {

std::string render_rationale_block(std::span<const Step> prefix) {
    std::string joined;
    for (size_t i = 0; i < prefix.size(); ++i) {
        if (i) joined += '\n';
        joined += rtrim_view(prefix[i].text);
    }
    return joined;
}

int count_hits(const ExpertRecord& record, int t, const SamplingParams& params,
               StudentBackend& backend) {
    std::string prompt = render_simulation_prompt(
        record.question, std::span<const Step>(record.steps).subspan(0, static_cast<size_t>(t) + 1));
    auto completions = backend.sample_continuations(prompt, params);
    int hits = 0;
    for (const auto& c : completions) {
        if (c.finish_reason == FinishReason::error) continue;
        auto extracted = extract_answer(c.text);
        if (extracted && answers_equivalent(*extracted, record.answer)) ++hits;
    }
    return hits;
}

int scored_hits(const ExpertRecord& record, int t, const SamplingParams& params,
                StudentBackend& backend, ScoreCache* cache) {
    if (!cache) return count_hits(record, t, params, backend);
    ScoreCache::Key key{record.id, t, params.fingerprint(), backend.fingerprint()};
    if (auto hit = cache->lookup(key); hit && hit->n_sim == params.n) return hit->hits;
    int hits = count_hits(record, t, params, backend);
    cache->insert(key, ScoreCache::Entry{hits, params.n});
    return hits;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

std::string render_simulation_prompt(const std::string& question, std::span<const Step> prefix) {
    return "Question: " + question + "\nRationale so far: " + render_rationale_block(prefix) +
           "\nContinue reasoning step by step, and put your final answer within \\boxed{}.";
}

double estimate_step_adaptability(const ExpertRecord& record, int t, const SamplingParams& params,
                                  StudentBackend& backend) {
    params.validate();
    if (t < 0 || static_cast<size_t>(t) >= record.steps.size()) {
        throw std::out_of_range("step index out of range for record " + record.id);
    }
    return static_cast<double>(count_hits(record, t, params, backend)) /
           static_cast<double>(params.n);
}

AdaptabilityProfile profile_record(const ExpertRecord& record, const SamplingParams& params,
                                   StudentBackend& backend) {
    params.validate();
    AdaptabilityProfile p;
    p.record_id = record.id;
    p.n_sim = params.n;
    p.scores.resize(record.steps.size());
    for (size_t t = 0; t < record.steps.size(); ++t) {
        p.scores[t] = static_cast<double>(count_hits(record, static_cast<int>(t), params, backend)) /
                      static_cast<double>(params.n);
    }
    return p;
}

std::vector<ProfileOutcome> profile_corpus(std::span<const ExpertRecord> records,
                                           const SamplingParams& params, StudentBackend& backend,
                                           ScoreCache* cache, int threads) {
    params.validate();

    struct Job {
        size_t rec;
        int t;
    };
    std::vector<Job> jobs;
    std::vector<ProfileOutcome> out(records.size());
    for (size_t r = 0; r < records.size(); ++r) {
        out[r].profile.record_id = records[r].id;
        out[r].profile.n_sim = params.n;
        out[r].profile.scores.resize(records[r].steps.size());
        for (size_t t = 0; t < records[r].steps.size(); ++t) {
            jobs.push_back(Job{r, static_cast<int>(t)});
        }
    }

    // One slot per job so threads never contend; exceptions must not
    // escape the parallel region.
    std::vector<std::string> job_errors(jobs.size());

    int nthreads = threads;
#if defined(_OPENMP)
    if (nthreads <= 0) nthreads = omp_get_max_threads();
#else
    nthreads = 1;
#endif
    (void)nthreads;

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
#endif
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(jobs.size()); ++j) {
        const Job& job = jobs[static_cast<size_t>(j)];
        try {
            int hits = scored_hits(records[job.rec], job.t, params, backend, cache);
            out[job.rec].profile.scores[static_cast<size_t>(job.t)] =
                static_cast<double>(hits) / static_cast<double>(params.n);
        } catch (const std::exception& e) {
            job_errors[static_cast<size_t>(j)] = e.what();
        } catch (...) {
            job_errors[static_cast<size_t>(j)] = "unknown scoring failure";
        }
    }

    // First failing step (in step order) labels the record.
    for (size_t j = 0; j < jobs.size(); ++j) {
        if (!job_errors[j].empty() && out[jobs[j].rec].error.empty()) {
            out[jobs[j].rec].error =
                "step " + std::to_string(jobs[j].t) + ": " + job_errors[j];
        }
    }
    return out;
}

std::vector<ProfileOutcome> profile_corpus_serial(std::span<const ExpertRecord> records,
                                                  const SamplingParams& params,
                                                  StudentBackend& backend, ScoreCache* cache) {
    params.validate();
    std::vector<ProfileOutcome> out(records.size());
    for (size_t r = 0; r < records.size(); ++r) {
        out[r].profile.record_id = records[r].id;
        out[r].profile.n_sim = params.n;
        out[r].profile.scores.resize(records[r].steps.size());
        for (size_t t = 0; t < records[r].steps.size(); ++t) {
            try {
                int hits = scored_hits(records[r], static_cast<int>(t), params, backend, cache);
                out[r].profile.scores[t] =
                    static_cast<double>(hits) / static_cast<double>(params.n);
            } catch (const std::exception& e) {
                if (out[r].error.empty()) {
                    out[r].error = "step " + std::to_string(t) + ": " + e.what();
                }
            }
        }
    }
    return out;
}

std::string profiles_to_csv(std::span<const ProfileOutcome> outcomes) {
    std::string out = "record_id,t,f_t,n_sim\n";
    for (const auto& o : outcomes) {
        if (!o.ok()) continue;
        for (size_t t = 0; t < o.profile.scores.size(); ++t) {
            out += csv_field(o.profile.record_id);
            out += ',' + std::to_string(t);
            out += ',' + format_double(o.profile.scores[t]);
            out += ',' + std::to_string(o.profile.n_sim);
            out += '\n';
        }
    }
    return out;
}

void write_profile_csv(const std::string& path, std::span<const ProfileOutcome> outcomes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write profile csv: " + path);
    out << profiles_to_csv(outcomes);
}

std::vector<AdaptabilityProfile> read_profile_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open profile csv: " + path);
    std::vector<AdaptabilityProfile> profiles;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            first = false;
            continue;  // header
        }
        if (trim_view(line).empty()) continue;
        auto cols = parse_csv_row(line);
        if (cols.size() != 4) throw std::runtime_error("malformed profile csv row: " + line);
        int t = std::stoi(cols[1]);
        double f = std::strtod(cols[2].c_str(), nullptr);
        int n = std::stoi(cols[3]);
        if (profiles.empty() || profiles.back().record_id != cols[0] || t == 0) {
            if (t != 0) throw std::runtime_error("profile csv row out of order: " + line);
            profiles.push_back(AdaptabilityProfile{cols[0], {}, n});
        }
        if (t != static_cast<int>(profiles.back().scores.size())) {
            throw std::runtime_error("profile csv row out of order: " + line);
        }
        profiles.back().scores.push_back(f);
    }
    return profiles;
}

}  // namespace cotadapt
