#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotadapt/adaptability.hpp"
#include "cotadapt/score_cache.hpp"
#include "cotadapt/sim.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cotadapt;
using testsupport::FixedHitsBackend;
using testsupport::make_record;
using testsupport::MarkerFailBackend;
using testsupport::TempDir;

namespace {

SamplingParams quad() {
    SamplingParams p;
    p.n = 4;
    p.temperature = 0.1;
    p.max_new_tokens = 4000;
    return p;
}

}  // namespace

TEST_CASE("simulation prompt renders question, prefix, and instruction exactly") {
    std::vector<Step> steps = {{0, "First I expand."}, {1, "Then I simplify.  "}};

    CHECK(render_simulation_prompt("What is 2+2?", std::span<const Step>(steps)) ==
          "Question: What is 2+2?\n"
          "Rationale so far: First I expand.\nThen I simplify.\n"
          "Continue reasoning step by step, and put your final answer within \\boxed{}.");

    CHECK(render_simulation_prompt("What is 2+2?",
                                   std::span<const Step>(steps).subspan(0, 1)) ==
          "Question: What is 2+2?\n"
          "Rationale so far: First I expand.\n"
          "Continue reasoning step by step, and put your final answer within \\boxed{}.");

    // Empty prefix still renders the scaffold so the student sees the task.
    CHECK(render_simulation_prompt("What is 2+2?", std::span<const Step>()) ==
          "Question: What is 2+2?\n"
          "Rationale so far: \n"
          "Continue reasoning step by step, and put your final answer within \\boxed{}.");
}

TEST_CASE("step score is the exact hit fraction over n rollouts") {
    auto rec = make_record("r1", "Compute.", "Work.\n\nAnswer \\boxed{42}.", "42");
    for (int hits = 0; hits <= 4; ++hits) {
        FixedHitsBackend backend("42", hits);
        CHECK(estimate_step_adaptability(rec, 0, quad(), backend) == hits / 4.0);
    }
}

TEST_CASE("hits are matched by answer equivalence, not string equality") {
    auto rec = make_record("r1", "Compute.", "Work.\n\nAnswer \\boxed{\\frac{1}{2}}.", "1/2");
    FixedHitsBackend same("1/2", 4);
    FixedHitsBackend fraction("\\frac{1}{2}", 4);
    FixedHitsBackend wrong("0.49", 4);
    CHECK(estimate_step_adaptability(rec, 0, quad(), same) == 1.0);
    CHECK(estimate_step_adaptability(rec, 0, quad(), fraction) == 1.0);
    CHECK(estimate_step_adaptability(rec, 0, quad(), wrong) == 0.0);
}

TEST_CASE("completions that errored out never count as hits") {
    class ErrorFinish : public StudentBackend {
    public:
        std::vector<Completion> sample_continuations(const std::string&,
                                                     const SamplingParams& params) override {
            std::vector<Completion> out(static_cast<size_t>(params.n));
            for (auto& c : out) {
                c.text = "The answer is \\boxed{42}.";
                c.finish_reason = FinishReason::error;
            }
            count_request(params.n);
            return out;
        }
        std::string fingerprint() const override { return "test-error-finish"; }
    };
    auto rec = make_record("r1", "Compute.", "Work.\n\nAnswer \\boxed{42}.", "42");
    ErrorFinish backend;
    CHECK(estimate_step_adaptability(rec, 0, quad(), backend) == 0.0);
}

TEST_CASE("scoring a step outside the record is refused") {
    auto rec = make_record("r1", "Compute.", "Work.\n\nAnswer \\boxed{42}.", "42");
    FixedHitsBackend backend("42", 4);
    CHECK_THROWS_AS(estimate_step_adaptability(rec, -1, quad(), backend), std::out_of_range);
    CHECK_THROWS_AS(estimate_step_adaptability(rec, 2, quad(), backend), std::out_of_range);
}

TEST_CASE("record profile scores every step with the inclusive prefix") {
    // The scripted student is position-aware, so scores must differ
    // across steps in the way the closed form predicts.
    auto corpus = generate_synthetic_corpus(1, 31);
    StudentModel m{.capacity = 0.2, .seed = 7};
    ScriptedStudent backend(m);
    SamplingParams params = quad();
    params.n = 64;

    auto profile = profile_record(corpus[0], params, backend);
    REQUIRE(profile.scores.size() == corpus[0].steps.size());
    CHECK(profile.record_id == corpus[0].id);
    CHECK(profile.n_sim == 64);
    // Values pinned from the deterministic backend (seed 7, corpus 31).
    CHECK(profile.scores.front() == doctest::Approx(0.234375));
    CHECK(profile.scores.back() == 1.0);

    SyntheticTask task = synthetic_task_for(31, 0);
    for (size_t t = 0; t < profile.scores.size(); ++t) {
        double p = analytic_success(task, static_cast<int>(t), m, params.temperature);
        double sigma = std::sqrt(p * (1 - p) / 64.0);
        CHECK(std::fabs(profile.scores[t] - p) <= 3 * sigma + 1e-12);
    }
}

TEST_CASE("parallel corpus scoring matches the serial reference exactly") {
    auto corpus = generate_synthetic_corpus(10, 5);
    ScriptedStudent parallel_backend(StudentModel{.capacity = 0.3, .seed = 11});
    ScriptedStudent serial_backend(StudentModel{.capacity = 0.3, .seed = 11});
    SamplingParams params = quad();
    params.n = 8;

    auto parallel = profile_corpus(corpus, params, parallel_backend, nullptr, 0);
    auto serial = profile_corpus_serial(corpus, params, serial_backend, nullptr);
    REQUIRE(parallel.size() == serial.size());
    for (size_t r = 0; r < parallel.size(); ++r) {
        CHECK(parallel[r].profile.record_id == serial[r].profile.record_id);
        CHECK(parallel[r].error == serial[r].error);
        CHECK(parallel[r].profile.scores == serial[r].profile.scores);
    }
    CHECK(parallel_backend.request_count() == serial_backend.request_count());
}

TEST_CASE("a record whose prompts fail is flagged without sinking the batch") {
    std::vector<ExpertRecord> corpus = {
        make_record("good1", "Q one.", "Alpha.\n\nAnswer \\boxed{1}.", "1"),
        make_record("bad", "POISON question.", "Beta.\n\nAnswer \\boxed{2}.", "2"),
        make_record("good2", "Q three.", "Gamma.\n\nAnswer \\boxed{3}.", "3"),
    };
    MarkerFailBackend backend("POISON", "1");
    auto outcomes = profile_corpus(corpus, quad(), backend, nullptr, 2);
    REQUIRE(outcomes.size() == 3);
    CHECK(outcomes[0].ok());
    CHECK_FALSE(outcomes[1].ok());
    CHECK(outcomes[1].error == "step 0: refusing prompt containing marker");
    CHECK(outcomes[2].ok());
    CHECK(outcomes[0].profile.scores == std::vector<double>{1.0, 1.0});
    // good2's answer is 3 but the backend always says 1.
    CHECK(outcomes[2].profile.scores == std::vector<double>{0.0, 0.0});
}

TEST_CASE("score cache eliminates repeat rollouts and survives reload") {
    TempDir dir;
    auto corpus = generate_synthetic_corpus(4, 9);
    SamplingParams params = quad();

    ScoreCache cache(dir.file("scores.tsv"));
    ScriptedStudent first(StudentModel{.capacity = 0.4, .seed = 3});
    auto baseline = profile_corpus(corpus, params, first, &cache, 0);
    uint64_t cold_requests = first.request_count();
    CHECK(cold_requests > 0);
    CHECK(cache.size() == cold_requests);  // one entry per (record, step)

    // Same backend identity, same params: everything is served from cache.
    ScriptedStudent second(StudentModel{.capacity = 0.4, .seed = 3});
    auto warm = profile_corpus(corpus, params, second, &cache, 0);
    CHECK(second.request_count() == 0);
    for (size_t r = 0; r < warm.size(); ++r) {
        CHECK(warm[r].profile.scores == baseline[r].profile.scores);
    }

    // Reloading the cache file serves the same scores.
    ScoreCache reloaded(dir.file("scores.tsv"));
    CHECK(reloaded.size() == cache.size());
    ScriptedStudent third(StudentModel{.capacity = 0.4, .seed = 3});
    auto from_disk = profile_corpus(corpus, params, third, &reloaded, 0);
    CHECK(third.request_count() == 0);
    for (size_t r = 0; r < from_disk.size(); ++r) {
        CHECK(from_disk[r].profile.scores == baseline[r].profile.scores);
    }

    // Different sampling parameters miss the cache.
    SamplingParams other = params;
    other.temperature = 0.7;
    ScriptedStudent fourth(StudentModel{.capacity = 0.4, .seed = 3});
    profile_corpus(corpus, other, fourth, &reloaded, 0);
    CHECK(fourth.request_count() == cold_requests);

    // Different backend identity misses the cache too.
    ScriptedStudent fifth(StudentModel{.capacity = 0.5, .seed = 3});
    profile_corpus(corpus, params, fifth, &reloaded, 0);
    CHECK(fifth.request_count() == cold_requests);
}

TEST_CASE("corrupt cache lines degrade to re-scoring, not wrong results") {
    TempDir dir;
    auto corpus = generate_synthetic_corpus(2, 9);
    SamplingParams params = quad();
    std::string path = dir.file("scores.tsv");
    {
        ScoreCache cache(path);
        ScriptedStudent backend(StudentModel{.capacity = 0.4, .seed = 3});
        profile_corpus(corpus, params, backend, &cache, 0);
    }
    {
        std::ofstream out(path, std::ios::app | std::ios::binary);
        out << "not\ta\tvalid\tline\n";
        out << "short\n";
        out << "trailing\tpartial\trow\twith\tbad\tnumbers\tx\ty\n";
        out << "truncated line without newl";
    }
    ScoreCache reloaded(path);
    ScriptedStudent backend(StudentModel{.capacity = 0.4, .seed = 3});
    auto outcomes = profile_corpus(corpus, params, backend, &reloaded, 0);
    CHECK(backend.request_count() == 0);  // valid lines all survived
    for (const auto& o : outcomes) CHECK(o.ok());

    // A cache file from some other tool is rewritten, not trusted.
    std::string alien = dir.file("alien.tsv");
    {
        std::ofstream out(alien, std::ios::binary);
        out << "some other format v9\nx\ty\n";
    }
    ScoreCache fresh(alien);
    CHECK(fresh.size() == 0);
    ScriptedStudent backend2(StudentModel{.capacity = 0.4, .seed = 3});
    profile_corpus(corpus, params, backend2, &fresh, 0);
    CHECK(backend2.request_count() > 0);
    ScoreCache round(alien);
    CHECK(round.size() == fresh.size());
}

TEST_CASE("profile CSV is exact, quotes awkward ids, and round-trips") {
    ProfileOutcome good;
    good.profile = AdaptabilityProfile{"plain", {0.0, 0.25, 1.0}, 4};
    ProfileOutcome quoted;
    quoted.profile = AdaptabilityProfile{"has,comma \"and\" quote", {0.5}, 4};
    ProfileOutcome failed;
    failed.profile = AdaptabilityProfile{"broken", {}, 4};
    failed.error = "step 0: backend down";

    std::vector<ProfileOutcome> outcomes = {good, quoted, failed};
    std::string csv = profiles_to_csv(outcomes);
    CHECK(csv ==
          "record_id,t,f_t,n_sim\n"
          "plain,0,0,4\n"
          "plain,1,0.25,4\n"
          "plain,2,1,4\n"
          "\"has,comma \"\"and\"\" quote\",0,0.5,4\n");

    TempDir dir;
    std::string path = dir.file("profile.csv");
    write_profile_csv(path, outcomes);
    auto back = read_profile_csv(path);
    REQUIRE(back.size() == 2);  // the failed record was never emitted
    CHECK(back[0].record_id == "plain");
    CHECK(back[0].scores == good.profile.scores);
    CHECK(back[0].n_sim == 4);
    CHECK(back[1].record_id == "has,comma \"and\" quote");
    CHECK(back[1].scores == quoted.profile.scores);
}

TEST_CASE("profile CSV survives fractions that are not exactly representable") {
    ProfileOutcome o;
    o.profile.record_id = "r";
    o.profile.n_sim = 3;
    o.profile.scores = {1.0 / 3.0, 2.0 / 3.0};
    TempDir dir;
    std::string path = dir.file("thirds.csv");
    write_profile_csv(path, std::vector<ProfileOutcome>{o});
    auto back = read_profile_csv(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].scores[0] == 1.0 / 3.0);  // bit-exact round trip
    CHECK(back[0].scores[1] == 2.0 / 3.0);
}
