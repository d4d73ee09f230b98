#include "blueprint/ngramstats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace blueprint::ngrams {

std::vector<Token> tokenize(const corpus::Generation& g) {
    std::vector<Token> out;
    if (g.token_ids) {
        out.assign(g.token_ids->begin(), g.token_ids->end());
        return out;
    }
    std::istringstream in(g.text);
    std::string word;
    while (in >> word) out.emplace_back(std::move(word));
    return out;
}

std::vector<std::vector<std::uint32_t>> encode(const corpus::GenerationSet& gs) {
    std::map<Token, std::uint32_t> vocab;
    std::vector<std::vector<std::uint32_t>> out;
    out.reserve(gs.size());
    for (const auto& g : gs.generations) {
        std::vector<std::uint32_t> seq;
        for (auto& tok : tokenize(g)) {
            auto [it, inserted] = vocab.try_emplace(std::move(tok), static_cast<std::uint32_t>(vocab.size()));
            seq.push_back(it->second);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

NgramTable::NgramTable(const std::vector<std::vector<std::uint32_t>>& sequences, std::size_t n) {
    if (n == 0) throw Error("n-gram length must be positive");
    constexpr std::uint64_t kBase = 0x100000001b3ULL;
    std::uint64_t top_power = 1;  // kBase^(n-1)
    for (std::size_t i = 1; i < n; ++i) top_power *= kBase;

    std::unordered_map<std::uint64_t, std::vector<std::size_t>> index;
    auto same = [&](const Entry& e, std::size_t seq, std::size_t pos) {
        return std::equal(sequences[e.seq].begin() + static_cast<std::ptrdiff_t>(e.pos),
                          sequences[e.seq].begin() + static_cast<std::ptrdiff_t>(e.pos + n),
                          sequences[seq].begin() + static_cast<std::ptrdiff_t>(pos));
    };

    for (std::size_t s = 0; s < sequences.size(); ++s) {
        const auto& seq = sequences[s];
        if (seq.size() < n) continue;
        std::uint64_t h = 0;
        for (std::size_t i = 0; i < n; ++i) h = h * kBase + (seq[i] + 1);
        for (std::size_t pos = 0;; ++pos) {
            ++occurrences_;
            auto& bucket = index[h];
            auto hit = std::find_if(bucket.begin(), bucket.end(),
                                    [&](std::size_t e) { return same(entries_[e], s, pos); });
            if (hit == bucket.end()) {
                bucket.push_back(entries_.size());
                entries_.push_back({s, pos, 1, s});
            } else if (Entry& e = entries_[*hit]; e.last_seq != s) {
                ++e.support;
                e.last_seq = s;
            }
            if (pos + n >= seq.size()) break;
            h = (h - (seq[pos] + 1) * top_power) * kBase + (seq[pos + n] + 1);
        }
    }
}

std::size_t NgramTable::max_support() const {
    std::size_t best = 0;
    for (const auto& e : entries_) best = std::max(best, e.support);
    return best;
}

std::map<std::size_t, std::size_t> NgramTable::support_histogram() const {
    std::map<std::size_t, std::size_t> hist;
    for (const auto& e : entries_) ++hist[e.support];
    return hist;
}

namespace {

NgramTable checked_table(const corpus::GenerationSet& gs, std::size_t n) {
    NgramTable table(encode(gs), n);
    if (table.occurrences() == 0)
        throw Error(fmt::format("n too large: no generation of prompt '{}' has {} tokens", gs.prompt_id, n));
    return table;
}

}  // namespace

std::size_t max_ngram_support(const corpus::GenerationSet& gs, std::size_t n) {
    return checked_table(gs, n).max_support();
}

double unique_ngram_fraction(const corpus::GenerationSet& gs, std::size_t n) {
    const auto table = checked_table(gs, n);
    return static_cast<double>(table.distinct()) / static_cast<double>(table.occurrences());
}

std::map<std::size_t, std::size_t> sharing_histogram(const corpus::GenerationSet& gs, std::size_t n) {
    return checked_table(gs, n).support_histogram();
}

NgramReport ngram_report(const std::vector<corpus::GenerationSet>& sets, const NgramConfig& config) {
    NgramReport report;
    report.prompts = sets.size();
    std::map<std::size_t, std::size_t> support_count, unique_count;
    for (const auto& gs : sets) {
        const auto seqs = encode(gs);
        for (auto n : config.support_ns) {
            NgramTable t(seqs, n);
            if (t.occurrences() == 0) continue;
            report.max_support[n] += static_cast<double>(t.max_support());
            ++support_count[n];
        }
        for (auto n : config.unique_ns) {
            NgramTable t(seqs, n);
            if (t.occurrences() == 0) continue;
            report.unique_fraction[n] += static_cast<double>(t.distinct()) / static_cast<double>(t.occurrences());
            ++unique_count[n];
        }
        NgramTable h(seqs, config.histogram_n);
        for (const auto& [bin, count] : h.support_histogram()) report.sharing_histogram[bin] += count;
    }
    for (auto& [n, v] : report.max_support) v /= static_cast<double>(support_count[n]);
    for (auto& [n, v] : report.unique_fraction) v /= static_cast<double>(unique_count[n]);
    if (!sets.empty())
        for (const auto& [bin, count] : report.sharing_histogram)
            report.sharing_histogram_mean[bin] = static_cast<double>(count) / static_cast<double>(sets.size());
    return report;
}

double match_diversity(const std::map<double, double>& table, double target) {
    if (table.empty()) throw Error("diversity table is empty");
    constexpr double kTieTolerance = 1e-12;
    double best_p = table.begin()->first;
    double best_gap = std::abs(table.begin()->second - target);
    for (const auto& [p, fraction] : table) {
        const double gap = std::abs(fraction - target);
        if (gap < best_gap - kTieTolerance) {  // map order makes ties keep the smaller p
            best_gap = gap;
            best_p = p;
        }
    }
    return best_p;
}

}  // namespace blueprint::ngrams
