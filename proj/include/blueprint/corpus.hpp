#pragma once

// On-disk data model for dumped language-model artifacts: sampled
// continuations, per-token distribution traces and hidden-state matrices.
// Everything returned by the loaders is validated and immutable afterwards.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blueprint/error.hpp"

namespace blueprint::corpus {

enum class SamplingMethod { nucleus, greedy, other };

std::string to_string(SamplingMethod m);
SamplingMethod sampling_method_from_string(const std::string& s);

struct Generation {
    int sample_index = 0;
    std::string text;
    std::optional<std::vector<std::int64_t>> token_ids;

    bool operator==(const Generation&) const = default;
};

struct GenerationSet {
    std::string prompt_id;
    std::string prompt_text;
    std::string model_label;
    SamplingMethod sampling_method = SamplingMethod::other;
    std::optional<double> nucleus_p;
    /// Sorted by sample_index, so generations[k].sample_index == k.
    std::vector<Generation> generations;

    std::size_t size() const { return generations.size(); }
    bool operator==(const GenerationSet&) const = default;
};

/// Checks the GenerationSet invariants, throwing Error on violation.
void validate(const GenerationSet& gs);

/// All prompts of a generations.jsonl file, in order of first appearance.
/// An empty file yields an empty vector.
std::vector<GenerationSet> load_generation_sets(const std::filesystem::path& path);

/// The single prompt of a generations.jsonl file. Errors on an empty file or a
/// file holding more than one prompt_id.
GenerationSet load_generation_set(const std::filesystem::path& path);

void write_generation_sets(const std::filesystem::path& path, std::span<const GenerationSet> sets);

// ---------------------------------------------------------------------------

enum class TraceSource { gold, self_generated };

std::string to_string(TraceSource s);
TraceSource trace_source_from_string(const std::string& s);

/// Probability below which dumps truncate sorted_probs. Entries under it are
/// folded into tail_mass.
inline constexpr double kDumpFloor = 1e-9;
/// Threshold used for nonnegligible_count at dump time.
inline constexpr double kNonNegligibleThreshold = 1e-8;

struct TraceStep {
    std::int64_t realized_token = 0;
    double realized_logprob = 0.0;  // natural log
    std::vector<double> sorted_probs;
    double tail_mass = 0.0;
    std::int64_t nonnegligible_count = 1;

    bool operator==(const TraceStep&) const = default;
};

struct DistributionTrace {
    std::vector<TraceStep> steps;
    std::int64_t vocab_size = 1;
    TraceSource source = TraceSource::gold;

    bool operator==(const DistributionTrace&) const = default;
};

/// Validates one step against a vocabulary size; never repairs input.
void validate(const TraceStep& step, std::int64_t vocab_size);
void validate(const DistributionTrace& trace);

DistributionTrace load_trace(const std::filesystem::path& path);
void write_trace(const std::filesystem::path& path, const DistributionTrace& trace);

/// Builds a step from a full (untruncated) distribution: sorts, truncates at
/// `floor`, counts entries above kNonNegligibleThreshold. Used by dump
/// producers and fixtures.
TraceStep make_step(std::span<const double> full_distribution, std::int64_t realized_token,
                    double floor = kDumpFloor);

// ---------------------------------------------------------------------------

struct HiddenStateDataset {
    std::size_t hidden_dim = 0;
    int layer_index = 0;
    std::int64_t vocab_size = 0;
    std::vector<std::int64_t> token_ids;
    /// Row-major T x d activations; shared so probe datasets can view rows
    /// without copying.
    std::shared_ptr<const std::vector<float>> rows;

    std::size_t size() const { return token_ids.size(); }
    std::span<const float> row(std::size_t t) const {
        return {rows->data() + t * hidden_dim, hidden_dim};
    }
};

void validate(const HiddenStateDataset& h);

HiddenStateDataset load_hidden_states(const std::filesystem::path& meta_path,
                                      const std::filesystem::path& matrix_path);
void write_hidden_states(const std::filesystem::path& meta_path,
                         const std::filesystem::path& matrix_path, const HiddenStateDataset& h);

/// Raw little-endian float32 I/O, shared with probe serialization.
std::vector<float> read_f32_le(const std::filesystem::path& path);
void write_f32_le(const std::filesystem::path& path, std::span<const float> values);

}  // namespace blueprint::corpus
