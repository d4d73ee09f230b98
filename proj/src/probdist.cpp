#include "blueprint/probdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace blueprint::probdist {

namespace {

// Neumaier summation.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double t = sum + x;
        carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

}  // namespace

ConcentrationCurve concentration_curve(const std::vector<corpus::DistributionTrace>& traces, std::size_t max_rank) {
    if (max_rank < 1) throw Error("max rank K must be at least 1");
    ConcentrationCurve curve;
    std::vector<CompensatedSum> sums(max_rank);
    std::vector<double> lo(max_rank, std::numeric_limits<double>::infinity());
    std::vector<double> hi(max_rank, -std::numeric_limits<double>::infinity());
    CompensatedSum tail;
    for (const auto& trace : traces)
        for (const auto& step : trace.steps) {
            if (step.sorted_probs.empty()) throw Error("trace step without probabilities");
            double running = 0.0;
            for (std::size_t k = 0; k < max_rank; ++k) {
                if (k < step.sorted_probs.size()) running += step.sorted_probs[k];
                sums[k].add(running);
                lo[k] = std::min(lo[k], running);
                hi[k] = std::max(hi[k], running);
            }
            tail.add(step.tail_mass);
            ++curve.steps;
        }
    if (curve.steps == 0) throw Error("no trace steps to average");
    const auto n = static_cast<double>(curve.steps);
    curve.cumulative.resize(max_rank);
    // A mean never leaves the range of its terms; the clamp only absorbs rounding.
    for (std::size_t k = 0; k < max_rank; ++k) curve.cumulative[k] = std::clamp(sums[k].value() / n, lo[k], hi[k]);
    curve.mean_tail_mass = tail.value() / n;
    return curve;
}

double mean_nonnegligible(const std::vector<corpus::DistributionTrace>& traces) {
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto& trace : traces)
        for (const auto& step : trace.steps) {
            total += static_cast<double>(step.nonnegligible_count);
            ++steps;
        }
    if (steps == 0) throw Error("no trace steps to average");
    return total / static_cast<double>(steps);
}

PerplexityReport perplexity(const std::vector<corpus::DistributionTrace>& traces) {
    PerplexityReport report;
    double logprob_sum = 0.0;
    bool first = true;
    for (const auto& trace : traces) {
        if (first) {
            report.source = trace.source;
            first = false;
        } else if (trace.source != report.source) {
            throw Error("cannot pool gold and self-generated traces into one perplexity");
        }
        for (const auto& step : trace.steps) {
            if (!std::isfinite(step.realized_logprob))
                throw Error(fmt::format("non-finite logprob at token {}", report.token_count));
            logprob_sum += step.realized_logprob;
            ++report.token_count;
        }
    }
    if (report.token_count == 0) throw Error("no trace steps to score");
    report.ppl = std::exp(-logprob_sum / static_cast<double>(report.token_count));
    return report;
}

PerplexityDelta perplexity_delta(const PerplexityReport& base, const PerplexityReport& adapted) {
    if (!(base.ppl > 0.0)) throw Error("base perplexity must be positive");
    if (base.source != adapted.source) throw Error("perplexities were measured on different sources");
    const double abs = adapted.ppl - base.ppl;
    return {abs, abs / base.ppl};
}

}  // namespace blueprint::probdist
