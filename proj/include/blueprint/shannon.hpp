#pragma once

// Shannon-game evaluation: ranking quality of next-token predictions,
// independent of how probability mass is calibrated.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blueprint/error.hpp"

namespace blueprint::shannon {

struct ShannonInstance {
    /// (token_id, score), sorted by score descending then token id ascending.
    std::vector<std::pair<std::int64_t, double>> ranked_scores;
    std::vector<std::int64_t> gold_tokens;
    std::vector<std::int64_t> predicted_tokens;
    /// Only needed for string-level EM/F1.
    std::optional<std::string> gold_text;
    std::optional<std::string> predicted_text;
};

/// Sorts ranked_scores into canonical order and checks the invariants.
void normalize(ShannonInstance& inst);

enum class TieRule {
    strict,    // only strictly higher scores are incorrect guesses
    inclusive  // equal scores count as incorrect guesses too
};

enum class Granularity { token, string };

/// Number of tokens ranked above the first gold token.
std::size_t incorrect_guesses(const ShannonInstance& inst, TieRule rule = TieRule::strict);

struct ShannonReport {
    double em = 0.0;
    double f1 = 0.0;
    double avg_guesses = 0.0;
    std::size_t instances = 0;
};

/// Multiset F1 of two sequences (1 when both are empty).
template <typename T>
double multiset_f1(const std::vector<T>& predicted, const std::vector<T>& gold) {
    if (predicted.empty() && gold.empty()) return 1.0;
    if (predicted.empty() || gold.empty()) return 0.0;
    std::map<T, std::size_t> remaining;
    for (const auto& g : gold) ++remaining[g];
    std::size_t common = 0;
    for (const auto& p : predicted)
        if (auto it = remaining.find(p); it != remaining.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(predicted.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

ShannonReport shannon_report(const std::vector<ShannonInstance>& instances, TieRule rule = TieRule::strict,
                             Granularity granularity = Granularity::token);

std::vector<ShannonInstance> load_instances(const std::filesystem::path& path);

}  // namespace blueprint::shannon
