#pragma once

// Anchor spans: verbatim substrings that sit at the same alignment columns in
// a sizeable fraction of the generations for one prompt, and the flow graph
// describing how generations pass through them in order.

#include <cstddef>
#include <string>
#include <vector>

#include "blueprint/align.hpp"

namespace blueprint::anchors {

struct AnchorOptions {
    std::size_t min_length = 30;  // characters
    double threshold = 0.20;      // fraction of generations
    std::size_t max_spans = 6;
};

/// Smallest support a span needs: ceil(threshold * N).
std::size_t min_support(std::size_t n, double threshold);

struct AnchorSpan {
    std::size_t col_start = 0;
    std::size_t col_end = 0;  // exclusive
    std::string text;
    std::vector<int> support;  // row indices, ascending
    std::size_t length_chars = 0;

    bool overlaps(const AnchorSpan& o) const { return col_start < o.col_end && o.col_start < col_end; }
    bool operator==(const AnchorSpan&) const = default;
};

/// All maximal spans: the support is every row carrying the content, and the
/// span cannot grow left or right without losing a supporting row.
std::vector<AnchorSpan> enumerate_candidate_spans(const align::Msa& msa, const AnchorOptions& options = {});

/// Greedy pick by (support desc, length desc, col_start asc), removing from
/// overlapping unpicked candidates the generations already counted.
std::vector<AnchorSpan> select_anchor_spans(std::vector<AnchorSpan> candidates, std::size_t n_rows,
                                            const AnchorOptions& options = {});

struct SankeyNode {
    int id = 0;
    std::string label;
    std::size_t col_start = 0;
    std::size_t col_end = 0;
    std::size_t support = 0;
};

struct SankeyLink {
    int source = 0;
    int target = 0;
    std::size_t value = 0;
    bool operator==(const SankeyLink&) const = default;
};

struct SankeyGraph {
    static constexpr int kSource = 0;
    /// Nodes: SOURCE (id 0), anchors in column order (ids 1..k), SINK (id k+1).
    std::vector<SankeyNode> nodes;
    std::vector<SankeyLink> links;  // sorted by (source, target)

    int sink() const { return static_cast<int>(nodes.size()) - 1; }
    std::size_t link_value(int source, int target) const;
    std::size_t outflow(int node) const;
    std::size_t inflow(int node) const;
};

/// Spans must be pairwise column-disjoint. Each generation contributes one
/// path SOURCE -> its anchors in column order -> SINK.
SankeyGraph build_sankey(std::size_t n_rows, const std::vector<AnchorSpan>& spans);

/// Display label: text truncated to 60 characters.
std::string display_label(const std::string& text);

}  // namespace blueprint::anchors
