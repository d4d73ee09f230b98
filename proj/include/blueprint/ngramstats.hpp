#pragma once

// N-gram sharing and diversity statistics over the generations of a prompt.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "blueprint/corpus.hpp"

namespace blueprint::ngrams {

/// A token is either a model token id or, when ids are missing, a
/// whitespace-delimited word.
using Token = std::variant<std::int64_t, std::string>;

std::vector<Token> tokenize(const corpus::Generation& g);

/// Token sequences of every generation, with tokens interned to dense ids
/// shared across the set.
std::vector<std::vector<std::uint32_t>> encode(const corpus::GenerationSet& gs);

/// Distinct n-grams of a set of sequences, with per-generation containment
/// counts. Keys are 64-bit rolling hashes; colliding keys are resolved by
/// comparing the underlying tokens.
class NgramTable {
public:
    NgramTable(const std::vector<std::vector<std::uint32_t>>& sequences, std::size_t n);

    std::size_t distinct() const { return entries_.size(); }
    std::size_t occurrences() const { return occurrences_; }
    /// Largest number of generations containing one n-gram (0 if none).
    std::size_t max_support() const;
    /// bin -> number of distinct n-grams contained in exactly `bin` generations.
    std::map<std::size_t, std::size_t> support_histogram() const;

private:
    struct Entry {
        std::size_t seq = 0;
        std::size_t pos = 0;
        std::size_t support = 0;
        std::size_t last_seq = 0;
    };
    std::vector<Entry> entries_;
    std::size_t occurrences_ = 0;
};

std::size_t max_ngram_support(const corpus::GenerationSet& gs, std::size_t n);
double unique_ngram_fraction(const corpus::GenerationSet& gs, std::size_t n);
std::map<std::size_t, std::size_t> sharing_histogram(const corpus::GenerationSet& gs, std::size_t n = 10);

struct NgramConfig {
    std::vector<std::size_t> support_ns{5, 10, 25, 50};
    std::vector<std::size_t> unique_ns{1, 2, 3, 4};
    std::size_t histogram_n = 10;
};

struct NgramReport {
    /// n -> max support averaged over the prompts that have an n-gram.
    std::map<std::size_t, double> max_support;
    /// n -> unique fraction averaged over the prompts that have an n-gram.
    std::map<std::size_t, double> unique_fraction;
    /// Histogram summed over prompts, and its per-prompt mean.
    std::map<std::size_t, std::size_t> sharing_histogram;
    std::map<std::size_t, double> sharing_histogram_mean;
    std::size_t prompts = 0;
};

NgramReport ngram_report(const std::vector<corpus::GenerationSet>& sets, const NgramConfig& config = {});

/// The p whose diversity is closest to `target`; ties go to the smaller p.
double match_diversity(const std::map<double, double>& table, double target);

}  // namespace blueprint::ngrams
