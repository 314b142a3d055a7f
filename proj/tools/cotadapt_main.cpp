#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cotadapt/adaptability.hpp"
#include "cotadapt/gap.hpp"
#include "cotadapt/lexical.hpp"
#include "cotadapt/mock_server.hpp"
#include "cotadapt/pipeline.hpp"
#include "cotadapt/remote_backend.hpp"
#include "cotadapt/sim.hpp"
#include "cotadapt/trajectory.hpp"

namespace fs = std::filesystem;
using namespace cotadapt;

namespace {

struct BackendOpts {
    std::string kind = "scripted";

    double capacity = 0.5;
    uint64_t student_seed = 0;
    double slip = 0.1;
    double solve_penalty = 0.3;
    double derail = 1.6;
    double temp_derail = 0.75;
    double loop_fraction = 0.0;

    RemoteConfig remote;

    void attach(CLI::App* cmd) {
        cmd->add_option("--backend", kind, "Student backend: scripted or remote")
            ->check(CLI::IsMember({"scripted", "remote"}))
            ->capture_default_str();
        cmd->add_option("--capacity", capacity, "Scripted student capability level")
            ->capture_default_str();
        cmd->add_option("--student-seed", student_seed, "Scripted student RNG seed")
            ->capture_default_str();
        cmd->add_option("--slip", slip, "Scripted per-step failure rate")->capture_default_str();
        cmd->add_option("--solve-penalty", solve_penalty,
                        "Scripted failure per unit of excess difficulty")
            ->capture_default_str();
        cmd->add_option("--derail", derail,
                        "Scripted damage from adopting over-capacity steps")
            ->capture_default_str();
        cmd->add_option("--temp-derail", temp_derail,
                        "Scripted failure per unit of temperature above 0.1")
            ->capture_default_str();
        cmd->add_option("--loop-fraction", loop_fraction,
                        "Fraction of successful scripted continuations with a repeated block")
            ->capture_default_str();
        cmd->add_option("--base-url", remote.base_url, "Remote completions endpoint")
            ->capture_default_str();
        cmd->add_option("--model", remote.model, "Remote model name")->capture_default_str();
        cmd->add_option("--api-key-env", remote.api_key_env,
                        "Env var holding the bearer token")
            ->capture_default_str();
        cmd->add_option("--timeout", remote.timeout_s, "Remote request timeout, seconds")
            ->capture_default_str();
        cmd->add_option("--max-concurrency", remote.max_concurrency,
                        "Remote in-flight request cap")
            ->capture_default_str();
        cmd->add_option("--max-attempts", remote.max_attempts, "Remote retry attempts")
            ->capture_default_str();
        cmd->add_option("--backoff-base", remote.backoff_base_s,
                        "Remote retry backoff base, seconds")
            ->capture_default_str();
    }

    StudentModel scripted_model() const {
        StudentModel m;
        m.capacity = capacity;
        m.seed = student_seed;
        m.slip = slip;
        m.solve_penalty = solve_penalty;
        m.derail = derail;
        m.temp_derail = temp_derail;
        m.loop_fraction = loop_fraction;
        return m;
    }

    std::unique_ptr<StudentBackend> make() const {
        if (kind == "remote") return std::make_unique<RemoteBackend>(remote);
        return std::make_unique<ScriptedStudent>(scripted_model());
    }
};

struct RunOpts {
    int n_sim = 4;
    double sim_temperature = 0.1;
    int sim_max_new_tokens = 4000;
    int num_samples = 8;
    double explore_temperature = 0.7;
    int explore_max_new_tokens = 2000;
    double epsilon = 0.25;
    double theta = -1.0;  // < 0: use 1/n_sim
    double max_repetition = 0.5;
    std::string selection = "shortest";
    std::string peak_rule = "first_peak";
    uint64_t selection_seed = 0;
    int64_t sampler_seed = 0;
    bool sampler_seed_set = false;
    int threads = 0;
    std::string cache_path;

    void attach(CLI::App* cmd) {
        cmd->add_option("--n-sim", n_sim, "Rollouts per step when scoring")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--sim-temperature", sim_temperature, "Scoring temperature")
            ->capture_default_str();
        cmd->add_option("--sim-max-new-tokens", sim_max_new_tokens,
                        "Scoring completion budget")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--num-samples", num_samples, "Exploration samples per record")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--explore-temperature", explore_temperature,
                        "Exploration temperature")
            ->capture_default_str();
        cmd->add_option("--explore-max-new-tokens", explore_max_new_tokens,
                        "Exploration completion budget")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        cmd->add_option("--epsilon", epsilon, "Score drop that marks a gap")
            ->capture_default_str();
        cmd->add_option("--theta", theta,
                        "Feasibility threshold (default: 1/n_sim when negative)")
            ->capture_default_str();
        cmd->add_option("--max-repetition", max_repetition,
                        "Highest tolerated candidate repetition ratio")
            ->capture_default_str();
        cmd->add_option("--selection", selection, "Candidate pick: shortest, first, random_seeded")
            ->check(CLI::IsMember({"shortest", "first", "random_seeded"}))
            ->capture_default_str();
        cmd->add_option("--peak-rule", peak_rule, "Peak reference: first_peak or global_max")
            ->check(CLI::IsMember({"first_peak", "global_max"}))
            ->capture_default_str();
        cmd->add_option("--selection-seed", selection_seed, "Seed for random_seeded selection")
            ->capture_default_str();
        cmd->add_option("--sampler-seed", sampler_seed,
                        "Seed forwarded to the backend with every request");
        cmd->add_option("--threads", threads, "Worker threads (0 = library default)")
            ->capture_default_str();
        cmd->add_option("--cache", cache_path, "Score cache file (reused across runs)");
    }

    double effective_theta() const { return theta < 0 ? 1.0 / n_sim : theta; }

    RunConfig to_config(Strategy strategy, const CLI::App* cmd) const {
        RunConfig cfg;
        cfg.strategy = strategy;
        cfg.n_sim = n_sim;
        cfg.sim_temperature = sim_temperature;
        cfg.sim_max_new_tokens = sim_max_new_tokens;
        cfg.num_samples = num_samples;
        cfg.explore_temperature = explore_temperature;
        cfg.explore_max_new_tokens = explore_max_new_tokens;
        cfg.epsilon = epsilon;
        cfg.theta = effective_theta();
        cfg.max_repetition = max_repetition;
        cfg.selection = *selection_rule_from_name(selection);
        cfg.peak_rule = peak_rule == "global_max" ? PeakRule::global_max : PeakRule::first_peak;
        cfg.selection_seed = selection_seed;
        if (cmd->count("--sampler-seed")) cfg.sampler_seed = sampler_seed;
        cfg.threads = threads;
        cfg.cache_path = cache_path;
        return cfg;
    }
};

std::vector<QuarantinedRecord> ingest_quarantine(const std::vector<QuarantinedLine>& rejected) {
    std::vector<QuarantinedRecord> out;
    out.reserve(rejected.size());
    for (const auto& r : rejected) {
        out.push_back(QuarantinedRecord{r.id, "ingest", r.reason, r.line_number});
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_synth(int count, uint64_t seed, const std::string& out_path) {
    auto records = generate_synthetic_corpus(count, seed);
    write_corpus_jsonl(out_path, records);
    std::cout << "wrote " << records.size() << " records to " << out_path << "\n";
    return 0;
}

int run_profile(const std::string& corpus_path, const std::string& out_path,
                const BackendOpts& backend_opts, const RunOpts& run_opts, bool serial) {
    auto loaded = load_corpus_jsonl(corpus_path);
    for (const auto& r : loaded.rejected) {
        std::cerr << "quarantined line " << r.line_number << " (" << r.id << "): " << r.reason
                  << "\n";
    }
    auto backend = backend_opts.make();

    SamplingParams params;
    params.n = run_opts.n_sim;
    params.temperature = run_opts.sim_temperature;
    params.max_new_tokens = run_opts.sim_max_new_tokens;
    if (run_opts.sampler_seed_set) params.seed = run_opts.sampler_seed;

    std::unique_ptr<ScoreCache> cache;
    if (!run_opts.cache_path.empty()) cache = std::make_unique<ScoreCache>(run_opts.cache_path);

    auto outcomes = serial
                        ? profile_corpus_serial(loaded.records, params, *backend, cache.get())
                        : profile_corpus(loaded.records, params, *backend, cache.get(),
                                         run_opts.threads);
    write_profile_csv(out_path, outcomes);

    size_t failed = 0, steps = 0;
    for (const auto& o : outcomes) {
        if (o.ok()) steps += o.profile.scores.size();
        else ++failed;
    }
    std::cout << "profiled " << (outcomes.size() - failed) << " records (" << steps
              << " steps) to " << out_path << "\n";
    if (failed) std::cout << "scoring failed for " << failed << " records\n";
    std::cout << "requests: " << backend->request_count()
              << ", rollouts: " << backend->completion_count() << "\n";
    return 0;
}

int run_gap(const std::string& profile_path, const std::string& out_path, double epsilon,
            double theta, const std::string& peak_rule_name) {
    auto profiles = read_profile_csv(profile_path);
    PeakRule rule = peak_rule_name == "global_max" ? PeakRule::global_max : PeakRule::first_peak;

    std::vector<RecordDecision> decisions;
    size_t with_gap = 0;
    for (const auto& profile : profiles) {
        double th = theta < 0 ? 1.0 / std::max(1, profile.n_sim) : theta;
        GapDecision gap = detect_gap(profile, epsilon, rule);
        auto feasible = first_feasible(profile, th);

        RecordDecision d;
        d.record_id = profile.record_id;
        d.last_index = static_cast<int>(profile.scores.size()) - 1;
        d.t_peak = gap.t_peak;
        d.f_peak = gap.f_peak;
        d.t_gap = gap.t_gap;
        d.t_first = feasible;
        d.epsilon = epsilon;
        if (gap.t_gap) {
            d.relative_gap_position = relative_position(*gap.t_gap, d.last_index);
            ++with_gap;
        }
        if (feasible) d.relative_first_position = relative_position(*feasible, d.last_index);
        decisions.push_back(std::move(d));
    }
    write_text_file(out_path, decisions_to_jsonl(decisions));
    std::cout << "analyzed " << profiles.size() << " profiles; " << with_gap
              << " show a gap; decisions in " << out_path << "\n";
    return 0;
}

int run_adapt(const std::string& corpus_path, const std::string& strategy_name_str,
              const std::string& out_dir, const BackendOpts& backend_opts,
              const RunOpts& run_opts, const CLI::App* cmd) {
    auto strategy = strategy_from_name(strategy_name_str);
    if (!strategy) throw std::runtime_error("unknown strategy: " + strategy_name_str);

    auto loaded = load_corpus_jsonl(corpus_path);
    auto backend = backend_opts.make();
    RunConfig config = run_opts.to_config(*strategy, cmd);

    auto t0 = std::chrono::steady_clock::now();
    AdaptOutput output = adapt_corpus(loaded.records, config, *backend, loaded.rejected.size());
    double wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();

    fs::create_directories(out_dir);
    emit_training_file(output.dataset, (fs::path(out_dir) / "training.jsonl").string());
    write_text_file((fs::path(out_dir) / "decisions.jsonl").string(),
                    decisions_to_jsonl(output.decisions));
    write_text_file((fs::path(out_dir) / "profile.csv").string(),
                    profiles_to_csv(output.profiles));
    write_text_file((fs::path(out_dir) / "candidates.jsonl").string(),
                    candidates_to_jsonl(output.explorations));
    write_text_file((fs::path(out_dir) / "report.json").string(),
                    report_to_json(output.report));

    auto quarantined = ingest_quarantine(loaded.rejected);
    quarantined.insert(quarantined.end(), output.quarantined.begin(), output.quarantined.end());
    write_text_file((fs::path(out_dir) / "quarantine.jsonl").string(),
                    quarantine_to_jsonl(quarantined));

    std::cout << render_report_text(output.report, wall_ms);
    std::cout << "outputs in " << out_dir << "\n";
    return 0;
}

int run_lexical(const std::string& before_path, const std::string& after_path,
                std::vector<std::string> keywords, const std::string& out_path) {
    auto collect = [](const std::string& path) {
        std::vector<std::string> texts;
        for (auto& row : parse_training_file(path)) texts.push_back(std::move(row.trajectory));
        return texts;
    };
    auto before = collect(before_path);
    auto after = collect(after_path);
    if (keywords.empty()) keywords = default_reflective_keywords();

    LexicalReport report = lexical_shift(before, after, keywords);
    std::string csv = lexical_to_csv(report);
    std::cout << csv;
    std::cout << "tokens_before=" << report.tokens_before
              << " tokens_after=" << report.tokens_after << "\n";
    if (!out_path.empty()) write_text_file(out_path, csv);
    return 0;
}

int run_report(const std::string& report_path) {
    RunReport report = report_from_json(read_file(report_path));
    std::cout << render_report_text(report, std::nullopt);
    return 0;
}

int run_serve_mock(const BackendOpts& backend_opts, const std::string& host, int port,
                   const std::string& require_key) {
    auto backend = std::shared_ptr<StudentBackend>(backend_opts.make().release());
    MockServer server(backend, require_key);
    int bound = server.start(host, port);
    std::cout << "completions endpoint at http://" << host << ":" << bound
              << "/v1/completions (scripted student, capacity "
              << backend_opts.capacity << ")\n"
              << "press Ctrl-C to stop\n";
    while (true) std::this_thread::sleep_for(std::chrono::seconds(3600));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adapts expert reasoning corpora to a student model: scores per-step "
                 "adaptability, finds imitation gaps, lets the student finish solutions "
                 "on its own, and emits a filtered training set."};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic expert corpus");
    int synth_count = 32;
    uint64_t synth_seed = 1;
    std::string synth_out = "corpus.jsonl";
    synth->add_option("--count", synth_count, "Records to generate")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Corpus seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output JSONL path")->capture_default_str();

    // profile
    auto* profile = app.add_subcommand("profile", "Score per-step adaptability for a corpus");
    std::string profile_corpus_path, profile_out = "profile.csv";
    bool profile_serial = false;
    auto profile_backend = std::make_shared<BackendOpts>();
    auto profile_run = std::make_shared<RunOpts>();
    profile->add_option("--corpus", profile_corpus_path, "Input corpus JSONL")->required();
    profile->add_option("--out", profile_out, "Output CSV path")->capture_default_str();
    profile->add_flag("--serial", profile_serial, "Use the single-threaded reference kernel");
    profile_backend->attach(profile);
    profile_run->attach(profile);
    profile->set_config("--config");

    // gap
    auto* gap = app.add_subcommand("gap", "Detect imitation gaps in a saved profile");
    std::string gap_profile_path, gap_out = "decisions.jsonl", gap_peak_rule = "first_peak";
    double gap_epsilon = 0.25, gap_theta = -1.0;
    gap->add_option("--profile", gap_profile_path, "Input profile CSV")->required();
    gap->add_option("--out", gap_out, "Output decisions JSONL")->capture_default_str();
    gap->add_option("--epsilon", gap_epsilon, "Score drop that marks a gap")
        ->capture_default_str();
    gap->add_option("--theta", gap_theta, "Feasibility threshold (default 1/n_sim)")
        ->capture_default_str();
    gap->add_option("--peak-rule", gap_peak_rule, "first_peak or global_max")
        ->check(CLI::IsMember({"first_peak", "global_max"}))
        ->capture_default_str();

    // adapt
    auto* adapt = app.add_subcommand("adapt", "Run a full adaptation strategy over a corpus");
    std::string adapt_corpus_path, adapt_strategy = "adaptation_full", adapt_out_dir = "run";
    auto adapt_backend = std::make_shared<BackendOpts>();
    auto adapt_run = std::make_shared<RunOpts>();
    adapt->add_option("--corpus", adapt_corpus_path, "Input corpus JSONL")->required();
    adapt->add_option("--strategy", adapt_strategy,
                      "static, adaptation_first, adaptation_gap, adaptation_full")
        ->check(CLI::IsMember({"static", "adaptation_first", "adaptation_gap",
                               "adaptation_full"}))
        ->capture_default_str();
    adapt->add_option("--out-dir", adapt_out_dir, "Directory for run outputs")
        ->capture_default_str();
    adapt_backend->attach(adapt);
    adapt_run->attach(adapt);
    adapt->set_config("--config");

    // lexical
    auto* lexical = app.add_subcommand("lexical",
                                       "Compare step-opening keyword rates of two training sets");
    std::string lex_before, lex_after, lex_out;
    std::vector<std::string> lex_keywords;
    lexical->add_option("--before", lex_before, "Baseline training JSONL")->required();
    lexical->add_option("--after", lex_after, "Comparison training JSONL")->required();
    lexical->add_option("--keywords", lex_keywords, "Keywords to count")->delimiter(',');
    lexical->add_option("--out", lex_out, "Also write the CSV here");

    // report
    auto* report = app.add_subcommand("report", "Render a saved run report");
    std::string report_path;
    report->add_option("--in", report_path, "report.json path")->required();

    // serve-mock
    auto* serve = app.add_subcommand("serve-mock",
                                     "Serve the scripted student over the completions protocol");
    std::string serve_host = "127.0.0.1", serve_key;
    int serve_port = 8080;
    auto serve_backend = std::make_shared<BackendOpts>();
    serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
    serve->add_option("--port", serve_port, "Port (0 picks a free one)")->capture_default_str();
    serve->add_option("--require-key", serve_key, "Reject requests lacking this bearer token");
    serve_backend->attach(serve);

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return run_synth(synth_count, synth_seed, synth_out);
        if (profile->parsed()) {
            profile_run->sampler_seed_set = profile->count("--sampler-seed") > 0;
            return run_profile(profile_corpus_path, profile_out, *profile_backend, *profile_run,
                               profile_serial);
        }
        if (gap->parsed()) {
            return run_gap(gap_profile_path, gap_out, gap_epsilon, gap_theta, gap_peak_rule);
        }
        if (adapt->parsed()) {
            return run_adapt(adapt_corpus_path, adapt_strategy, adapt_out_dir, *adapt_backend,
                             *adapt_run, adapt);
        }
        if (lexical->parsed()) return run_lexical(lex_before, lex_after, lex_keywords, lex_out);
        if (report->parsed()) return run_report(report_path);
        if (serve->parsed()) {
            return run_serve_mock(*serve_backend, serve_host, serve_port, serve_key);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
