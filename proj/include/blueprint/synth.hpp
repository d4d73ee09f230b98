#pragma once

// Seeded synthetic corpora standing in for real model dumps. The fixture
// tool writes these to disk; tests rebuild them in memory from the same seeds.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "blueprint/corpus.hpp"

namespace blueprint::synth {

struct PlantedSpan {
    std::string text;  // the sentence, without the spaces around it
    std::vector<int> support;  // sample indices, ascending
};

struct PlantedPrompt {
    corpus::GenerationSet set;
    std::vector<PlantedSpan> planted;  // in text order
};

/// Templated continuations: every generation opens and closes with a shared
/// sentence, a third sentence appears mid-text in 60-90% of them, and the
/// filler between is a random subsequence of a per-prompt word template.
std::vector<PlantedPrompt> rlhf_like(std::uint64_t seed, std::size_t prompts = 80, std::size_t per_prompt = 100);

/// Independent filler text from an open-ended pseudo-word vocabulary.
std::vector<corpus::GenerationSet> base_like(std::uint64_t seed, std::size_t prompts = 80,
                                             std::size_t per_prompt = 100);

/// `rows` strings = random 40-char prefix + shared core + random 40-char
/// suffix. The characters touching the core differ between rows.
struct CoreFixture {
    std::vector<std::string> rows;
    std::string core;
};
CoreFixture planted_core(std::uint64_t seed, std::size_t rows = 10, std::size_t core_length = 35);

/// Steps whose top token carries exactly `top_mass`, the rest spread over a
/// few tokens.
corpus::DistributionTrace concentrated_trace(std::uint64_t seed, std::size_t steps, std::int64_t vocab,
                                             double top_mass = 0.9);

/// Step t reports nonnegligible_count = t + 1.
corpus::DistributionTrace arithmetic_count_trace(std::size_t steps, std::int64_t vocab);

/// Every step uniform over the vocabulary.
corpus::DistributionTrace uniform_trace(std::size_t steps, std::int64_t vocab);

/// Every realized token has probability `realized_prob` (perplexity 1/p).
corpus::DistributionTrace constant_prob_trace(std::size_t steps, std::int64_t vocab, double realized_prob,
                                              corpus::TraceSource source);

/// Hidden states = token embedding + noise. Low entropy: the token stream is
/// a chain of fixed templates; otherwise tokens are i.i.d. uniform.
corpus::HiddenStateDataset hidden_fixture(std::uint64_t seed, std::size_t tokens = 1000, std::size_t dim = 16,
                                          std::int64_t vocab = 32, bool low_entropy = true);

}  // namespace blueprint::synth
