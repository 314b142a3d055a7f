#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cotadapt/backend.hpp"
#include "cotadapt/trajectory.hpp"

namespace cotadapt {

// A synthetic arithmetic-chain task. Fully determined by (corpus_seed,
// index), so a scripted student can regenerate it from the id embedded
// in the question and needs no shared registry.
struct SyntheticTask {
    struct Op {
        char kind;          // '+', '-', '*'
        long long operand;
    };

    std::string id;
    long long start = 0;
    std::vector<Op> ops;
    // One entry per solution step: ops.size() op steps followed by the
    // final answer-reveal step (difficulty 0).
    std::vector<double> difficulty;
    long long answer = 0;
    std::vector<std::string> step_texts;
    std::string question;
    std::string solution;

    int step_count() const { return static_cast<int>(step_texts.size()); }
    int last_step_index() const { return step_count() - 1; }
    // Value after applying ops[0..u); value_after(0) == start.
    long long value_after(size_t u) const;
};

SyntheticTask synthetic_task_for(uint64_t corpus_seed, uint64_t index);

// Recovers (corpus_seed, index) from a task id like "sim-s7-i42", or
// from any text containing "Task <id>:".
std::optional<std::pair<uint64_t, uint64_t>> parse_task_ref(const std::string& text);

std::vector<ExpertRecord> generate_synthetic_corpus(int count, uint64_t corpus_seed);

// Knobs of the scripted student. `capacity` is the difficulty level the
// student handles cleanly; steps above it hurt. The remaining knobs
// shape how much they hurt:
//   slip          per-step failure chance on the student's own steps
//   solve_penalty extra per-step failure per unit of excess difficulty
//                 when the student must produce the step itself
//   derail        success damping per unit of excess difficulty when an
//                 over-capacity expert step is adopted into the prefix
//   temp_derail   extra per-step failure per unit of sampling
//                 temperature above the 0.1 reference
//   loop_fraction fraction of successful completions polluted with a
//                 repeated filler block (for repetition-filter tests)
struct StudentModel {
    double capacity = 0.5;
    uint64_t seed = 0;
    double slip = 0.1;
    double solve_penalty = 0.3;
    double derail = 1.6;
    double temp_derail = 0.75;
    double loop_fraction = 0.0;
};

// Closed-form success probability of the scripted student answering the
// task correctly after adopting expert steps 0..position (position = -1
// means no steps adopted). Position equal to the last step index means
// the boxed answer is already visible, so success is certain.
double analytic_success(const SyntheticTask& task, int position, const StudentModel& model,
                        double temperature);

// Deterministic backend: completions are a pure function of
// (prompt, params, model). Success of each sample is a hash-driven
// Bernoulli draw with probability analytic_success(...).
class ScriptedStudent : public StudentBackend {
public:
    explicit ScriptedStudent(StudentModel model) : model_(model) {}

    std::vector<Completion> sample_continuations(const std::string& prompt,
                                                 const SamplingParams& params) override;
    std::string fingerprint() const override;

    const StudentModel& model() const { return model_; }

private:
    StudentModel model_;
};

}  // namespace cotadapt
