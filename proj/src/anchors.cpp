#include "blueprint/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace blueprint::anchors {

using align::kGap;
using align::Msa;
using align::Symbol;

namespace {

struct Enumerator {
    const Msa& msa;
    std::size_t min_length;
    std::size_t min_rows;
    std::vector<AnchorSpan>* out;

    // True when every row of `group` carries the same residue just left of
    // `start`, i.e. the span could grow leftwards with the same support.
    bool left_extendable(const std::vector<int>& group, std::size_t start) const {
        if (start == 0) return false;
        const Symbol first = msa.rows[group.front()][start - 1];
        if (first == kGap) return false;
        return std::all_of(group.begin(), group.end(),
                           [&](int r) { return msa.rows[r][start - 1] == first; });
    }

    void emit(const std::vector<int>& group, std::size_t start, std::size_t end) const {
        if (end - start < min_length || left_extendable(group, start)) return;
        AnchorSpan span;
        span.col_start = start;
        span.col_end = end;
        span.support = group;
        span.length_chars = end - start;
        span.text.reserve(span.length_chars);
        for (std::size_t c = start; c < end; ++c)
            span.text.push_back(static_cast<char>(static_cast<unsigned char>(msa.rows[group.front()][c])));
        out->push_back(std::move(span));
    }

    // `group` rows agree, gap-free, on [start, end). Extend rightwards, emitting
    // whenever the group would split.
    void extend(std::vector<int> group, std::size_t start, std::size_t end) const {
        while (true) {
            if (end == msa.columns) {
                emit(group, start, end);
                return;
            }
            const Symbol first = msa.rows[group.front()][end];
            const bool unanimous = first != kGap && std::all_of(group.begin(), group.end(), [&](int r) {
                                       return msa.rows[r][end] == first;
                                   });
            if (!unanimous) break;
            ++end;
        }
        emit(group, start, end);
        for (auto& sub : partition(group, end)) extend(std::move(sub), start, end + 1);
    }

    // Rows of `group` split by their residue at `col`; gaps and classes below
    // the support threshold are dropped.
    std::vector<std::vector<int>> partition(const std::vector<int>& group, std::size_t col) const {
        std::map<Symbol, std::vector<int>> classes;
        for (int r : group)
            if (const Symbol s = msa.rows[r][col]; s != kGap) classes[s].push_back(r);
        std::vector<std::vector<int>> result;
        for (auto& [sym, rows] : classes)
            if (rows.size() >= min_rows) result.push_back(std::move(rows));
        return result;
    }
};

bool ranks_before(const AnchorSpan& a, const AnchorSpan& b) {
    if (a.support.size() != b.support.size()) return a.support.size() > b.support.size();
    if (a.length_chars != b.length_chars) return a.length_chars > b.length_chars;
    if (a.col_start != b.col_start) return a.col_start < b.col_start;
    if (a.col_end != b.col_end) return a.col_end < b.col_end;
    return a.support < b.support;
}

}  // namespace

std::size_t min_support(std::size_t n, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("anchor threshold must be in (0, 1]");
    // Guard against 0.2 * 10 landing a hair above 2.
    const double raw = threshold * static_cast<double>(n);
    const auto rounded = std::round(raw);
    const double need = std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw);
    return std::max<std::size_t>(1, static_cast<std::size_t>(need));
}

std::vector<AnchorSpan> enumerate_candidate_spans(const Msa& msa, const AnchorOptions& options) {
    std::vector<AnchorSpan> spans;
    if (msa.size() == 0 || msa.columns == 0) return spans;
    const Enumerator en{msa, std::max<std::size_t>(options.min_length, 1), min_support(msa.size(), options.threshold),
                        &spans};
    std::vector<int> all(msa.size());
    for (std::size_t r = 0; r < all.size(); ++r) all[r] = static_cast<int>(r);
    for (std::size_t start = 0; start < msa.columns; ++start)
        for (auto& group : en.partition(all, start)) {
            // Every subset of a left-extendable group is left-extendable too.
            if (en.left_extendable(group, start)) continue;
            en.extend(std::move(group), start, start + 1);
        }
    std::sort(spans.begin(), spans.end(), [](const AnchorSpan& a, const AnchorSpan& b) {
        if (a.col_start != b.col_start) return a.col_start < b.col_start;
        if (a.col_end != b.col_end) return a.col_end < b.col_end;
        return a.support < b.support;
    });
    return spans;
}

std::vector<AnchorSpan> select_anchor_spans(std::vector<AnchorSpan> candidates, std::size_t n_rows,
                                            const AnchorOptions& options) {
    const std::size_t need = min_support(n_rows, options.threshold);
    std::erase_if(candidates, [need](const AnchorSpan& s) { return s.support.size() < need; });

    std::vector<AnchorSpan> picked;
    while (picked.size() < options.max_spans && !candidates.empty()) {
        auto top = std::min_element(candidates.begin(), candidates.end(), ranks_before);
        AnchorSpan chosen = std::move(*top);
        candidates.erase(top);

        for (auto& c : candidates) {
            if (!c.overlaps(chosen)) continue;
            std::vector<int> remaining;
            std::set_difference(c.support.begin(), c.support.end(), chosen.support.begin(), chosen.support.end(),
                                std::back_inserter(remaining));
            c.support = std::move(remaining);
        }
        std::erase_if(candidates, [need](const AnchorSpan& s) { return s.support.size() < need; });
        picked.push_back(std::move(chosen));
    }
    return picked;
}

std::size_t SankeyGraph::link_value(int source, int target) const {
    for (const auto& l : links)
        if (l.source == source && l.target == target) return l.value;
    return 0;
}

std::size_t SankeyGraph::outflow(int node) const {
    std::size_t total = 0;
    for (const auto& l : links)
        if (l.source == node) total += l.value;
    return total;
}

std::size_t SankeyGraph::inflow(int node) const {
    std::size_t total = 0;
    for (const auto& l : links)
        if (l.target == node) total += l.value;
    return total;
}

std::string display_label(const std::string& text) {
    constexpr std::size_t kMax = 60;
    if (text.size() <= kMax) return text;
    return text.substr(0, kMax - 3) + "...";
}

SankeyGraph build_sankey(std::size_t n_rows, const std::vector<AnchorSpan>& spans) {
    std::vector<const AnchorSpan*> ordered;
    for (const auto& s : spans) {
        for (int r : s.support)
            if (r < 0 || static_cast<std::size_t>(r) >= n_rows)
                throw Error(fmt::format("anchor support row {} out of range", r));
        ordered.push_back(&s);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](const AnchorSpan* a, const AnchorSpan* b) {
        if (a->col_start != b->col_start) return a->col_start < b->col_start;
        return a->length_chars > b->length_chars;
    });
    // Column-overlapping spans may only coexist when no generation visits both.
    for (std::size_t i = 0; i < ordered.size(); ++i)
        for (std::size_t j = i + 1; j < ordered.size(); ++j) {
            if (!ordered[i]->overlaps(*ordered[j])) continue;
            std::vector<int> shared;
            std::set_intersection(ordered[i]->support.begin(), ordered[i]->support.end(),
                                  ordered[j]->support.begin(), ordered[j]->support.end(),
                                  std::back_inserter(shared));
            if (!shared.empty())
                throw Error(fmt::format("spans not disjoint in columns: [{}, {}) and [{}, {}) share generation {}",
                                        ordered[i]->col_start, ordered[i]->col_end, ordered[j]->col_start,
                                        ordered[j]->col_end, shared.front()));
        }

    SankeyGraph g;
    g.nodes.push_back({SankeyGraph::kSource, "SOURCE", 0, 0, n_rows});
    for (std::size_t k = 0; k < ordered.size(); ++k) {
        const auto& s = *ordered[k];
        g.nodes.push_back({static_cast<int>(k + 1), display_label(s.text), s.col_start, s.col_end, s.support.size()});
    }
    const int sink = static_cast<int>(ordered.size() + 1);
    const std::size_t last_col = ordered.empty() ? 0 : ordered.back()->col_end;
    g.nodes.push_back({sink, "SINK", last_col, last_col, n_rows});

    std::map<std::pair<int, int>, std::size_t> flow;
    for (std::size_t r = 0; r < n_rows; ++r) {
        int at = SankeyGraph::kSource;
        for (std::size_t k = 0; k < ordered.size(); ++k)
            if (std::binary_search(ordered[k]->support.begin(), ordered[k]->support.end(), static_cast<int>(r))) {
                ++flow[{at, static_cast<int>(k + 1)}];
                at = static_cast<int>(k + 1);
            }
        ++flow[{at, sink}];
    }
    for (const auto& [edge, value] : flow) g.links.push_back({edge.first, edge.second, value});
    return g;
}

}  // namespace blueprint::anchors
