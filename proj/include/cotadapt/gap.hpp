#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cotadapt {

struct AdaptabilityProfile {
    std::string record_id;
    std::vector<double> scores;  // one per step, index == step index
    int n_sim = 0;
};

enum class PeakRule {
    first_peak,  // earliest index of the running maximum (default)
    global_max,  // earliest index attaining the global maximum
};

struct GapDecision {
    int t_peak = 0;
    std::optional<int> t_gap;  // absent when no step falls far enough
    double f_peak = 0.0;
    double epsilon = 0.0;
};

// Finds the earliest step whose score drops more than epsilon below the
// best score seen before it. With first_peak, the peak is the running
// maximum at the moment of the drop (earliest index on ties); with
// global_max, only drops measured against the profile-wide maximum
// count. When no drop qualifies, t_gap is absent and t_peak reports the
// earliest index of the global maximum.
GapDecision detect_gap(std::span<const double> scores, double epsilon,
                       PeakRule rule = PeakRule::first_peak);
GapDecision detect_gap(const AdaptabilityProfile& profile, double epsilon,
                       PeakRule rule = PeakRule::first_peak);

// Earliest step with score >= theta, if any.
std::optional<int> first_feasible(std::span<const double> scores, double theta);
std::optional<int> first_feasible(const AdaptabilityProfile& profile, double theta);

// Position t as a fraction of the last step index; 0 when the profile
// has a single step.
double relative_position(int t, int last_index);

}  // namespace cotadapt
