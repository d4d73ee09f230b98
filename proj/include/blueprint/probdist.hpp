#pragma once

// Probability-concentration and perplexity metrics over distribution traces.
// All averages pool timesteps across traces (micro-average); logs are natural.

#include <cstddef>
#include <vector>

#include "blueprint/corpus.hpp"

namespace blueprint::probdist {

struct ConcentrationCurve {
    /// cumulative[k-1]: mean over steps of the top-k probability mass.
    std::vector<double> cumulative;
    /// Mean mass folded into the dump-time tail (not attributed to any rank).
    double mean_tail_mass = 0.0;
    std::size_t steps = 0;

    std::size_t max_rank() const { return cumulative.size(); }
};

ConcentrationCurve concentration_curve(const std::vector<corpus::DistributionTrace>& traces, std::size_t max_rank);

double mean_nonnegligible(const std::vector<corpus::DistributionTrace>& traces);

struct PerplexityReport {
    double ppl = 1.0;
    std::size_t token_count = 0;
    corpus::TraceSource source = corpus::TraceSource::gold;
};

PerplexityReport perplexity(const std::vector<corpus::DistributionTrace>& traces);

struct PerplexityDelta {
    double absolute = 0.0;
    double relative = 0.0;
};

/// adapted - base, absolute and relative to base.
PerplexityDelta perplexity_delta(const PerplexityReport& base, const PerplexityReport& adapted);

}  // namespace blueprint::probdist
