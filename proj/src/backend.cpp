#include "cotadapt/backend.hpp"

#include "cotadapt/util.hpp"

namespace cotadapt {

void SamplingParams::validate() const {
    if (n < 1) throw std::invalid_argument("sampling n must be >= 1");
    if (temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
    if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
}

std::string SamplingParams::fingerprint() const {
    std::string fp = "n=" + std::to_string(n);
    fp += ";t=" + format_double(temperature);
    fp += ";m=" + std::to_string(max_new_tokens);
    fp += ";stop=";
    for (size_t i = 0; i < stop.size(); ++i) {
        if (i) fp += '|';
        fp += stop[i];
    }
    fp += ";seed=";
    fp += seed ? std::to_string(*seed) : "none";
    return fp;
}

const char* finish_reason_name(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

FinishReason finish_reason_from_name(const std::string& name) {
    if (name == "stop") return FinishReason::stop;
    if (name == "length") return FinishReason::length;
    return FinishReason::error;
}

}  // namespace cotadapt
