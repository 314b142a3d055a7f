#include "cotadapt/gap.hpp"

#include <stdexcept>

namespace cotadapt {

GapDecision detect_gap(std::span<const double> scores, double epsilon, PeakRule rule) {
    if (scores.empty()) throw std::invalid_argument("empty adaptability profile");
    if (epsilon < 0) throw std::invalid_argument("epsilon must be >= 0");

    GapDecision d;
    d.epsilon = epsilon;

    int best = 0;  // earliest index of the reference maximum so far
    if (rule == PeakRule::global_max) {
        for (size_t t = 1; t < scores.size(); ++t) {
            if (scores[t] > scores[static_cast<size_t>(best)]) best = static_cast<int>(t);
        }
        d.t_peak = best;
        d.f_peak = scores[static_cast<size_t>(best)];
        for (size_t t = static_cast<size_t>(best) + 1; t < scores.size(); ++t) {
            if (scores[t] < d.f_peak - epsilon) {
                d.t_gap = static_cast<int>(t);
                break;
            }
        }
        return d;
    }

    for (size_t t = 1; t < scores.size(); ++t) {
        if (scores[t] < scores[static_cast<size_t>(best)] - epsilon) {
            d.t_peak = best;
            d.f_peak = scores[static_cast<size_t>(best)];
            d.t_gap = static_cast<int>(t);
            return d;
        }
        if (scores[t] > scores[static_cast<size_t>(best)]) best = static_cast<int>(t);
    }
    // No qualifying drop: report the earliest global maximum as the peak.
    best = 0;
    for (size_t t = 1; t < scores.size(); ++t) {
        if (scores[t] > scores[static_cast<size_t>(best)]) best = static_cast<int>(t);
    }
    d.t_peak = best;
    d.f_peak = scores[static_cast<size_t>(best)];
    return d;
}

GapDecision detect_gap(const AdaptabilityProfile& profile, double epsilon, PeakRule rule) {
    return detect_gap(std::span<const double>(profile.scores), epsilon, rule);
}

std::optional<int> first_feasible(std::span<const double> scores, double theta) {
    for (size_t t = 0; t < scores.size(); ++t) {
        if (scores[t] >= theta) return static_cast<int>(t);
    }
    return std::nullopt;
}

std::optional<int> first_feasible(const AdaptabilityProfile& profile, double theta) {
    return first_feasible(std::span<const double>(profile.scores), theta);
}

double relative_position(int t, int last_index) {
    if (last_index <= 0) return 0.0;
    return static_cast<double>(t) / static_cast<double>(last_index);
}

}  // namespace cotadapt
