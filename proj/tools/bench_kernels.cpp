#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "cotadapt/adaptability.hpp"
#include "cotadapt/pipeline.hpp"
#include "cotadapt/sim.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

using namespace cotadapt;

namespace {

template <typename Fn>
double time_ms(Fn&& fn) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

int main(int argc, char** argv) {
    int records = 48;
    int n_sim = 16;
    int repeats = 3;
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        auto next_int = [&](int fallback) {
            return i + 1 < argc ? std::atoi(argv[++i]) : fallback;
        };
        if (arg == "--records") records = next_int(records);
        else if (arg == "--n-sim") n_sim = next_int(n_sim);
        else if (arg == "--repeats") repeats = next_int(repeats);
        else {
            std::printf("usage: %s [--records N] [--n-sim N] [--repeats N]\n", argv[0]);
            return 2;
        }
    }

#if defined(_OPENMP)
    int max_threads = omp_get_max_threads();
#else
    int max_threads = 1;
#endif
    std::printf("corpus: %d records, n_sim=%d, repeats=%d, worker threads=%d\n", records, n_sim,
                repeats, max_threads);

    auto corpus = generate_synthetic_corpus(records, 99);
    StudentModel model;
    model.capacity = 0.35;
    model.seed = 7;
    ScriptedStudent student(model);

    SamplingParams params;
    params.n = n_sim;
    params.temperature = 0.1;
    params.max_new_tokens = 4000;

    // Scoring kernel: serial reference vs parallel.
    std::vector<ProfileOutcome> serial_out, parallel_out;
    double serial_best = 1e300, parallel_best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        serial_best = std::min(serial_best, time_ms([&] {
                                   serial_out =
                                       profile_corpus_serial(corpus, params, student, nullptr);
                               }));
        parallel_best = std::min(parallel_best, time_ms([&] {
                                     parallel_out =
                                         profile_corpus(corpus, params, student, nullptr, 0);
                                 }));
    }

    bool equal = serial_out.size() == parallel_out.size();
    for (size_t i = 0; equal && i < serial_out.size(); ++i) {
        equal = serial_out[i].profile.scores == parallel_out[i].profile.scores;
    }
    std::printf("scoring   serial   %8.2f ms\n", serial_best);
    std::printf("scoring   parallel %8.2f ms   speedup %.2fx   results %s\n",
                parallel_best, serial_best / parallel_best, equal ? "identical" : "DIFFER");

    // End-to-end pipeline at both thread settings.
    RunConfig config;
    config.strategy = Strategy::adaptation_full;
    config.n_sim = n_sim;

    AdaptOutput one, many;
    double one_best = 1e300, many_best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        config.threads = 1;
        one_best = std::min(one_best, time_ms([&] { one = adapt_corpus(corpus, config, student); }));
        config.threads = 0;
        many_best =
            std::min(many_best, time_ms([&] { many = adapt_corpus(corpus, config, student); }));
    }
    bool same = training_to_jsonl(one.dataset) == training_to_jsonl(many.dataset) &&
                report_to_json(one.report) == report_to_json(many.report);
    std::printf("pipeline  1 thread %8.2f ms\n", one_best);
    std::printf("pipeline  default  %8.2f ms   speedup %.2fx   results %s\n", many_best,
                one_best / many_best, same ? "identical" : "DIFFER");

    return (equal && same) ? 0 : 1;
}
