#pragma once

// Character-level progressive multiple sequence alignment of the sampled
// continuations of one prompt, and the per-position overlap curve built on
// top of it.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "blueprint/corpus.hpp"

namespace blueprint::align {

inline constexpr char kGapChar = '-';
inline constexpr std::size_t kDefaultLengthCap = 8000;
inline constexpr int kDefaultKmer = 6;

struct ScoringScheme {
    double match = 2.0;
    double mismatch = -1.0;
    double gap_open = -3.0;    // cost of a gap of length 1
    double gap_extend = -1.0;  // cost of each further gap position

    /// Throws Error unless match > mismatch and gap_open <= gap_extend < 0.
    void validate() const;
    double pair(unsigned char a, unsigned char b) const { return a == b ? match : mismatch; }
    double gap(std::size_t length) const {
        return length == 0 ? 0.0 : gap_open + static_cast<double>(length - 1) * gap_extend;
    }
};

struct PairwiseAlignment {
    double score = 0.0;
    std::string aligned_a;
    std::string aligned_b;
};

/// Optimal global alignment with affine gaps (three-state Gotoh recurrence).
/// Gaps are rendered as kGapChar, which therefore may not occur in the input.
PairwiseAlignment pairwise_align(std::string_view a, std::string_view b, const ScoringScheme& scheme = {},
                                 std::size_t length_cap = kDefaultLengthCap);

/// 1 - Jaccard similarity of the k-mer sets. Two empty sets are at distance 0.
double kmer_distance(std::string_view a, std::string_view b, int k);

struct GuideTree {
    struct Merge {
        int left = 0;
        int right = 0;
        double height = 0.0;  // UPGMA distance at which the merge happened
        bool operator==(const Merge& o) const { return left == o.left && right == o.right; }
    };
    /// Leaves are 0..N-1; merge t creates node N+t.
    std::size_t leaf_count = 0;
    std::vector<Merge> merges;
};

/// UPGMA over a symmetric distance matrix; ties go to the lexicographically
/// smallest (i, j) pair of live node ids.
GuideTree upgma(const std::vector<std::vector<double>>& distances);

GuideTree build_guide_tree(const std::vector<std::string>& seqs, int k = kDefaultKmer);

/// Alignment symbol: a byte value, or kGap.
using Symbol = std::int16_t;
inline constexpr Symbol kGap = -1;

struct Msa {
    std::size_t columns = 0;
    std::vector<std::vector<Symbol>> rows;  // all of length `columns`
    std::vector<int> row_ids;               // sample index of each row

    std::size_t size() const { return rows.size(); }
    bool is_gap(std::size_t row, std::size_t col) const { return rows[row][col] == kGap; }
    /// Row content with gaps removed.
    std::string degap(std::size_t row) const;
    /// Row rendered with kGapChar for gaps.
    std::string render(std::size_t row) const;
};

/// Builds an Msa from equal-length strings using kGapChar as the gap.
Msa msa_from_strings(const std::vector<std::string>& rows);

/// Sum over row pairs of the affine-gap pairwise score of the induced
/// pairwise alignment (columns gapped in both rows dropped).
double sum_of_pairs_score(const Msa& msa, const ScoringScheme& scheme = {});

struct MsaOptions {
    ScoringScheme scheme;
    int kmer = kDefaultKmer;
    std::size_t length_cap = kDefaultLengthCap;
};

/// Progressive alignment along a UPGMA guide tree using profile-profile affine
/// gap dynamic programming. Existing gaps are never removed.
Msa progressive_msa(const std::vector<std::string>& texts, const MsaOptions& options = {});
Msa progressive_msa(const corpus::GenerationSet& gs, const MsaOptions& options = {});

// ---------------------------------------------------------------------------

enum class OverlapMetric { pairwise_match, aligned_with_at_least_5 };

std::string to_string(OverlapMetric m);
OverlapMetric overlap_metric_from_string(const std::string& s);

inline constexpr std::size_t kCurveLength = 100;

struct OverlapCurve {
    std::vector<double> values;  // kCurveLength entries in [0, 1]
    OverlapMetric metric = OverlapMetric::pairwise_match;
    double smoothing_sigma = 2.0;
};

struct OverlapOptions {
    OverlapMetric metric = OverlapMetric::pairwise_match;
    int min_support = 5;
    double sigma = 2.0;
};

/// Raw per-column metric for every column (no filtering).
double column_overlap(const Msa& msa, std::size_t col, OverlapMetric metric);

/// Averages `values` into `buckets` equal-width buckets; each column is a unit
/// interval and contributes to a bucket in proportion to the covered width.
std::vector<double> downsample(const std::vector<double>& values, std::size_t buckets = kCurveLength);

/// Discrete Gaussian smoothing with radius ceil(4 sigma), renormalized where
/// the kernel is cut by the boundary. sigma == 0 returns the input.
std::vector<double> gaussian_filter(const std::vector<double>& values, double sigma);

OverlapCurve overlap_curve(const Msa& msa, const OverlapOptions& options = {});

/// Position-wise mean of several curves (all must share the metric).
OverlapCurve mean_curve(const std::vector<OverlapCurve>& curves);

}  // namespace blueprint::align
