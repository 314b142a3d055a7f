#include <stdexcept>
#include <string>
#include <vector>

#include "cotadapt/adaptability.hpp"
#include "cotadapt/explore.hpp"
#include "cotadapt/sim.hpp"
#include "cotadapt/util.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace cotadapt;
using testsupport::FixedHitsBackend;
using testsupport::make_record;

namespace {

// Captures prompts and always answers correctly.
class RecordingBackend : public StudentBackend {
public:
    explicit RecordingBackend(std::string correct) : correct_(std::move(correct)) {}

    std::vector<Completion> sample_continuations(const std::string& prompt,
                                                 const SamplingParams& params) override {
        prompts.push_back(prompt);
        std::vector<Completion> out(static_cast<size_t>(params.n));
        for (auto& c : out) c.text = "Answer: \\boxed{" + correct_ + "}.";
        count_request(params.n);
        return out;
    }
    std::string fingerprint() const override { return "test-recording"; }

    std::vector<std::string> prompts;

private:
    std::string correct_;
};

CandidateTrajectory cand(int index, std::string text, bool consistent, double repetition) {
    CandidateTrajectory c;
    c.record_id = "r";
    c.sample_index = index;
    c.continuation = std::move(text);
    if (consistent) c.extracted_answer = make_answer("42");
    c.consistent = consistent;
    c.repetition = repetition;
    return c;
}

}  // namespace

TEST_CASE("exploration prompt differs from the scoring prompt only in its label") {
    std::vector<Step> steps = {{0, "Alpha."}, {1, "Beta.  "}};
    std::string explore = render_exploration_prompt("Q?", steps);
    std::string sim = render_simulation_prompt("Q?", steps);

    CHECK(explore ==
          "Question: Q?\n"
          "Rationale before the gap: Alpha.\nBeta.\n"
          "Continue reasoning step by step, and put your final answer within \\boxed{}.");

    // Replacing the label yields the scoring prompt byte-for-byte.
    std::string relabeled = explore;
    size_t at = relabeled.find("Rationale before the gap: ");
    REQUIRE(at != std::string::npos);
    relabeled.replace(at, std::string("Rationale before the gap: ").size(), "Rationale so far: ");
    CHECK(relabeled == sim);
}

TEST_CASE("repetition ratio counts previously seen word 8-grams") {
    CHECK(repetition_ratio("") == 0.0);
    CHECK(repetition_ratio("too short to have any eight grams") == 0.0);  // 7 words
    CHECK(repetition_ratio("one two three four five six seven eight") == 0.0);
    CHECK(repetition_ratio("a b c d e f g h i j k l m n o p") == 0.0);

    // An 8-word sentence repeated 10 times: 80 words form 73 8-grams, of
    // which only the 8 cyclic rotations are distinct.
    std::string loop;
    for (int i = 0; i < 10; ++i) loop += "the same eight words repeat again and again ";
    CHECK(repetition_ratio(loop) == doctest::Approx(65.0 / 73.0));

    // Whitespace shape does not matter, only the word sequence.
    std::string reflowed;
    for (int i = 0; i < 10; ++i) reflowed += "the same eight\nwords   repeat again\nand again\n";
    CHECK(repetition_ratio(reflowed) == doctest::Approx(65.0 / 73.0));

    // Text followed by a copy of itself: only the gram that wraps back
    // to the start position repeats (9 grams, 1 repeat).
    std::string half = "alpha beta gamma delta epsilon zeta eta theta";
    double doubled = repetition_ratio(half + " " + half);
    CHECK(doubled == doctest::Approx(1.0 / 9.0));
}

TEST_CASE("scripted loop completions trip the repetition measure") {
    StudentModel m{.capacity = 1.0, .seed = 4, .slip = 0.0};
    m.loop_fraction = 1.0;
    ScriptedStudent student(m);
    auto corpus = generate_synthetic_corpus(1, 3);
    SamplingParams params;
    params.n = 4;
    params.temperature = 0.1;  // keep success certain so every sample loops
    params.max_new_tokens = 2000;
    auto result = explore_record(corpus[0], 1, params, student);
    for (const auto& c : result.candidates) {
        CHECK(c.consistent);
        CHECK(c.repetition > 0.5);
    }

    m.loop_fraction = 0.0;
    ScriptedStudent clean(m);
    auto tidy = explore_record(corpus[0], 1, params, clean);
    for (const auto& c : tidy.candidates) {
        CHECK(c.repetition < 0.5);
    }
}

TEST_CASE("explore grades each candidate for consistency and repetition") {
    auto rec = make_record("r1", "Compute.", "Seen step.\n\nAnswer \\boxed{42}.", "42");
    FixedHitsBackend backend("42", 2);
    SamplingParams params;
    params.n = 4;
    auto result = explore_record(rec, 1, params, backend);

    CHECK(result.record_id == "r1");
    CHECK(result.cut == 1);
    REQUIRE(result.candidates.size() == 4);
    for (int i = 0; i < 4; ++i) {
        const auto& c = result.candidates[static_cast<size_t>(i)];
        CHECK(c.sample_index == i);
        CHECK(c.finish_reason == FinishReason::stop);
        CHECK(c.repetition == 0.0);
        if (i < 2) {
            REQUIRE(c.extracted_answer.has_value());
            CHECK(c.extracted_answer->normalized == "42");
            CHECK(c.consistent);
        } else {
            CHECK_FALSE(c.extracted_answer.has_value());  // ramble has no boxed value
            CHECK_FALSE(c.consistent);
        }
    }
}

TEST_CASE("explore cut selects exactly the kept steps, including none") {
    auto rec = make_record("r1", "Compute.", "One.\n\nTwo.\n\nAnswer \\boxed{7}.", "7");
    RecordingBackend backend("7");
    SamplingParams params;
    params.n = 1;

    explore_record(rec, 0, params, backend);
    explore_record(rec, 2, params, backend);
    explore_record(rec, 3, params, backend);
    REQUIRE(backend.prompts.size() == 3);
    CHECK(backend.prompts[0].find("Rationale before the gap: \nContinue") != std::string::npos);
    CHECK(backend.prompts[1].find("Rationale before the gap: One.\nTwo.\nContinue") !=
          std::string::npos);
    CHECK(backend.prompts[2].find("One.\nTwo.\nAnswer \\boxed{7}.\nContinue") != std::string::npos);

    CHECK_THROWS_AS(explore_record(rec, -1, params, backend), std::out_of_range);
    CHECK_THROWS_AS(explore_record(rec, 4, params, backend), std::out_of_range);
}

TEST_CASE("selection keeps at most one eligible candidate per record") {
    auto rec = make_record("r1", "Compute.", "Kept.\n\nDropped \\boxed{42}.", "42");
    ExplorationResult exploration;
    exploration.record_id = "r1";
    exploration.cut = 1;
    exploration.candidates = {
        cand(0, "a long winding consistent continuation \\boxed{42}", true, 0.0),
        cand(1, "short \\boxed{42}", true, 0.0),
        cand(2, "x", false, 0.0),
        cand(3, "also short 42 \\boxed{42}", true, 0.6),
    };

    SUBCASE("shortest picks the fewest characters among eligible") {
        auto adapted = select_adapted(rec, exploration, 0.5, SelectionRule::shortest, 0);
        REQUIRE(adapted.has_value());
        CHECK(adapted->sample_index == 1);
        CHECK(adapted->provenance == "adapted");
        CHECK(adapted->cut == 1);
        CHECK(adapted->repetition == 0.0);
        CHECK(adapted->final_trajectory == "Kept.\n\nshort \\boxed{42}");
    }

    SUBCASE("repetition threshold widens the eligible pool") {
        auto strict = select_adapted(rec, exploration, 0.5, SelectionRule::first, 0);
        REQUIRE(strict.has_value());
        CHECK(strict->sample_index == 0);

        // At threshold 1.0 candidate 3 becomes eligible; some seed picks it.
        bool saw_three = false;
        for (uint64_t seed = 0; seed < 64 && !saw_three; ++seed) {
            auto pick = select_adapted(rec, exploration, 1.0, SelectionRule::random_seeded, seed);
            REQUIRE(pick.has_value());
            saw_three = pick->sample_index == 3;
        }
        CHECK(saw_three);

        // Below 0.5 it can never be chosen, whatever the seed.
        for (uint64_t seed = 0; seed < 64; ++seed) {
            auto pick = select_adapted(rec, exploration, 0.5, SelectionRule::random_seeded, seed);
            REQUIRE(pick.has_value());
            CHECK(pick->sample_index != 3);
        }
    }

    SUBCASE("shortest breaks ties toward the lower sample index") {
        ExplorationResult tie;
        tie.record_id = "r1";
        tie.cut = 1;
        tie.candidates = {
            cand(0, "aaaa \\boxed{42}", true, 0.0),
            cand(1, "bbbb \\boxed{42}", true, 0.0),
        };
        auto adapted = select_adapted(rec, tie, 0.5, SelectionRule::shortest, 0);
        REQUIRE(adapted.has_value());
        CHECK(adapted->sample_index == 0);
    }

    SUBCASE("random_seeded is deterministic in (seed, record id)") {
        auto a = select_adapted(rec, exploration, 1.0, SelectionRule::random_seeded, 99);
        auto b = select_adapted(rec, exploration, 1.0, SelectionRule::random_seeded, 99);
        REQUIRE(a.has_value());
        REQUIRE(b.has_value());
        CHECK(a->sample_index == b->sample_index);
        CHECK((a->sample_index == 0 || a->sample_index == 1 || a->sample_index == 3));
    }

    SUBCASE("no eligible candidate means the record is dropped") {
        CHECK_FALSE(select_adapted(rec, exploration, -0.1, SelectionRule::shortest, 0).has_value());
        ExplorationResult hopeless;
        hopeless.record_id = "r1";
        hopeless.cut = 1;
        hopeless.candidates = {cand(0, "nope", false, 0.0), cand(1, "nada", false, 0.0)};
        CHECK_FALSE(select_adapted(rec, hopeless, 1.0, SelectionRule::shortest, 0).has_value());
    }
}

TEST_CASE("tightening the repetition threshold never adds kept candidates") {
    auto rec = make_record("r1", "Compute.", "Kept.\n\nDropped \\boxed{42}.", "42");
    ExplorationResult exploration;
    exploration.record_id = "r1";
    exploration.cut = 1;
    for (int i = 0; i < 8; ++i) {
        exploration.candidates.push_back(
            cand(i, "text \\boxed{42}", i % 2 == 0, 0.125 * i));
    }
    int prev_eligible = 9;
    for (double thr = 1.0; thr >= -0.01; thr -= 0.125) {
        int eligible = 0;
        for (const auto& c : exploration.candidates) {
            if (c.consistent && c.repetition <= thr) ++eligible;
        }
        CHECK(eligible <= prev_eligible);
        bool kept = select_adapted(rec, exploration, thr, SelectionRule::shortest, 0).has_value();
        CHECK(kept == (eligible > 0));
        prev_eligible = eligible;
    }
}

TEST_CASE("final trajectories start with the kept expert steps byte-for-byte") {
    SUBCASE("blank-line solutions keep their joiner") {
        auto rec = make_record("r", "Q", "One.\n\nTwo.\n\nThree \\boxed{1}.", "1");
        REQUIRE(rec.step_joiner == "\n\n");
        CHECK(compose_final_trajectory(rec, 0, "CONT") == "CONT");
        CHECK(compose_final_trajectory(rec, 1, "CONT") == "One.\n\nCONT");
        CHECK(compose_final_trajectory(rec, 2, "CONT") == "One.\n\nTwo.\n\nCONT");
    }

    SUBCASE("sentence-fallback solutions concatenate directly") {
        auto rec = make_record("r", "Q", "First part. Second part. Third \\boxed{1}.", "1");
        REQUIRE(rec.step_joiner.empty());
        REQUIRE(rec.steps.size() == 3);
        // Each sentence keeps its trailing space, so plain concatenation
        // reproduces the original spacing.
        CHECK(compose_final_trajectory(rec, 1, "CONT") == "First part. CONT");
        CHECK(compose_final_trajectory(rec, 2, "CONT") == "First part. Second part. CONT");
    }

    SUBCASE("the kept prefix is verbatim from the raw solution at every cut") {
        auto corpus = generate_synthetic_corpus(3, 17);
        for (const auto& rec : corpus) {
            for (int cut = 0; cut <= static_cast<int>(rec.steps.size()); ++cut) {
                std::string composed = compose_final_trajectory(rec, cut, "XYZ");
                std::string kept = join_steps(
                    std::span<const Step>(rec.steps).subspan(0, static_cast<size_t>(cut)),
                    rec.step_joiner);
                CHECK(composed.rfind(kept, 0) == 0);
                CHECK(kept == rec.raw_solution.substr(0, kept.size()));
                CHECK(composed.substr(composed.size() - 3) == "XYZ");
            }
        }
    }
}

TEST_CASE("selection rule names round-trip and reject unknowns") {
    for (auto rule :
         {SelectionRule::shortest, SelectionRule::first, SelectionRule::random_seeded}) {
        auto back = selection_rule_from_name(selection_rule_name(rule));
        REQUIRE(back.has_value());
        CHECK(*back == rule);
    }
    CHECK_FALSE(selection_rule_from_name("longest").has_value());
    CHECK_FALSE(selection_rule_from_name("").has_value());
}
