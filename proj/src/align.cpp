#include "blueprint/align.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

namespace blueprint::align {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Op : std::uint8_t { both, a_only, b_only };

// States of the affine-gap recurrence. Order doubles as tie preference.
enum State : std::uint8_t { kMatch = 0, kGapB = 1, kGapA = 2 };

struct Best {
    double value;
    std::uint8_t state;
};

inline Best best_of(double m, double x, double y) {
    Best b{m, kMatch};
    if (x > b.value) b = {x, kGapB};
    if (y > b.value) b = {y, kGapA};
    return b;
}

// Global affine-gap alignment of two abstract sequences of lengths n and m.
// `row_scores(i, out)` fills out[j-1] with the score of pairing element i-1 of
// the first sequence with element j-1 of the second. kGapB consumes an
// element of the first sequence only, kGapA one of the second.
template <typename RowScores>
std::pair<double, std::vector<Op>> gotoh(std::size_t n, std::size_t m, double open, double extend,
                                         RowScores&& row_scores) {
    const std::size_t width = m + 1;
    // Traceback: bits 0-1 previous state for M, 2-3 for X (gap in b), 4-5 for Y.
    std::vector<std::uint8_t> trace((n + 1) * width, 0);
    std::vector<double> prev_m(width, kNegInf), prev_x(width, kNegInf), prev_y(width, kNegInf);
    std::vector<double> cur_m(width), cur_x(width), cur_y(width);
    std::vector<double> scores(m);

    prev_m[0] = 0.0;
    for (std::size_t j = 1; j <= m; ++j) {
        const Best y = best_of(prev_m[j - 1] + open, prev_x[j - 1] + open, prev_y[j - 1] + extend);
        prev_y[j] = y.value;
        trace[j] = static_cast<std::uint8_t>(y.state << 4);
    }

    for (std::size_t i = 1; i <= n; ++i) {
        row_scores(i - 1, scores);
        std::uint8_t* tr = trace.data() + i * width;
        cur_m[0] = kNegInf;
        cur_y[0] = kNegInf;
        {
            const Best x = best_of(prev_m[0] + open, prev_x[0] + extend, prev_y[0] + open);
            cur_x[0] = x.value;
            tr[0] = static_cast<std::uint8_t>(x.state << 2);
        }
        for (std::size_t j = 1; j <= m; ++j) {
            const Best mm = best_of(prev_m[j - 1], prev_x[j - 1], prev_y[j - 1]);
            const Best x = best_of(prev_m[j] + open, prev_x[j] + extend, prev_y[j] + open);
            const Best y = best_of(cur_m[j - 1] + open, cur_x[j - 1] + open, cur_y[j - 1] + extend);
            cur_m[j] = mm.value + scores[j - 1];
            cur_x[j] = x.value;
            cur_y[j] = y.value;
            tr[j] = static_cast<std::uint8_t>(mm.state | (x.state << 2) | (y.state << 4));
        }
        std::swap(prev_m, cur_m);
        std::swap(prev_x, cur_x);
        std::swap(prev_y, cur_y);
    }

    Best end = best_of(prev_m[m], prev_x[m], prev_y[m]);
    if (n == 0 && m == 0) end = {0.0, kMatch};

    std::vector<Op> ops;
    ops.reserve(n + m);
    std::size_t i = n, j = m;
    std::uint8_t state = end.state;
    while (i > 0 || j > 0) {
        const std::uint8_t cell = trace[i * width + j];
        switch (state) {
            case kMatch:
                ops.push_back(Op::both);
                state = cell & 3u;
                --i;
                --j;
                break;
            case kGapB:
                ops.push_back(Op::a_only);
                state = (cell >> 2) & 3u;
                --i;
                break;
            default:
                ops.push_back(Op::b_only);
                state = (cell >> 4) & 3u;
                --j;
                break;
        }
    }
    std::reverse(ops.begin(), ops.end());
    return {end.value, std::move(ops)};
}

// An aligned block of rows, the unit merged at each guide-tree node.
struct Profile {
    std::vector<int> members;
    std::vector<std::vector<Symbol>> rows;
    std::size_t columns() const { return rows.empty() ? 0 : rows.front().size(); }
};

// Column frequency matrix (columns x alphabet) plus non-gap fractions.
struct ProfileStats {
    Eigen::MatrixXd freq;
    Eigen::VectorXd occupancy;
};

ProfileStats profile_stats(const Profile& p, const std::array<int, 256>& code, int alphabet) {
    const auto cols = static_cast<Eigen::Index>(p.columns());
    ProfileStats s{Eigen::MatrixXd::Zero(cols, alphabet), Eigen::VectorXd::Zero(cols)};
    const double w = 1.0 / static_cast<double>(p.rows.size());
    for (const auto& row : p.rows)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (const Symbol sym = row[static_cast<std::size_t>(c)]; sym != kGap) {
                s.freq(c, code[static_cast<unsigned char>(sym)]) += w;
                s.occupancy(c) += w;
            }
    return s;
}

Profile merge_profiles(const Profile& a, const Profile& b, const ScoringScheme& scheme,
                       const std::array<int, 256>& code, int alphabet) {
    const ProfileStats sa = profile_stats(a, code, alphabet);
    const ProfileStats sb = profile_stats(b, code, alphabet);
    const Eigen::MatrixXd fb_t = sb.freq.transpose();
    const double diff = scheme.match - scheme.mismatch;

    // Expected pair score of two columns: pairs involving a gap contribute 0.
    constexpr Eigen::Index kBlock = 128;
    Eigen::MatrixXd block;
    Eigen::Index block_start = -kBlock;
    auto row_scores = [&](std::size_t i, std::vector<double>& out) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (ii >= block_start + kBlock) {
            block_start = ii;
            const Eigen::Index rows = std::min<Eigen::Index>(kBlock, sa.freq.rows() - ii);
            block.noalias() = diff * (sa.freq.middleRows(ii, rows) * fb_t);
            block.noalias() += scheme.mismatch * (sa.occupancy.segment(ii, rows) * sb.occupancy.transpose());
        }
        const Eigen::Index r = ii - block_start;
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = block(r, static_cast<Eigen::Index>(j));
    };

    auto [score, ops] = gotoh(a.columns(), b.columns(), scheme.gap_open, scheme.gap_extend, row_scores);
    (void)score;

    Profile merged;
    merged.members = a.members;
    merged.members.insert(merged.members.end(), b.members.begin(), b.members.end());
    merged.rows.assign(a.rows.size() + b.rows.size(), {});
    for (auto& r : merged.rows) r.reserve(ops.size());
    std::size_t i = 0, j = 0;
    for (Op op : ops) {
        const bool take_a = op != Op::b_only;
        const bool take_b = op != Op::a_only;
        for (std::size_t r = 0; r < a.rows.size(); ++r) merged.rows[r].push_back(take_a ? a.rows[r][i] : kGap);
        for (std::size_t r = 0; r < b.rows.size(); ++r)
            merged.rows[a.rows.size() + r].push_back(take_b ? b.rows[r][j] : kGap);
        i += take_a;
        j += take_b;
    }
    return merged;
}

std::vector<std::string_view> kmer_set(std::string_view s, int k) {
    std::vector<std::string_view> out;
    const auto kk = static_cast<std::size_t>(k);
    if (s.size() < kk) return out;
    out.reserve(s.size() - kk + 1);
    for (std::size_t i = 0; i + kk <= s.size(); ++i) out.push_back(s.substr(i, kk));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double jaccard_distance(const std::vector<std::string_view>& a, const std::vector<std::string_view>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t shared = 0;
    for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++shared;
            ++i;
            ++j;
        }
    }
    const auto unite = a.size() + b.size() - shared;
    return 1.0 - static_cast<double>(shared) / static_cast<double>(unite);
}

}  // namespace

void ScoringScheme::validate() const {
    if (!(match > mismatch)) throw Error("scoring scheme: match must exceed mismatch");
    if (!(gap_open < 0.0 && gap_extend < 0.0 && gap_open <= gap_extend))
        throw Error("scoring scheme: need gap_open <= gap_extend < 0");
}

PairwiseAlignment pairwise_align(std::string_view a, std::string_view b, const ScoringScheme& scheme,
                                 std::size_t length_cap) {
    scheme.validate();
    if (a.find(kGapChar) != std::string_view::npos || b.find(kGapChar) != std::string_view::npos)
        throw Error(fmt::format("input contains the gap symbol '{}'", kGapChar));
    if (a.size() > length_cap || b.size() > length_cap)
        throw Error(fmt::format("sequence length exceeds cap of {}", length_cap));

    auto row_scores = [&](std::size_t i, std::vector<double>& out) {
        const auto ca = static_cast<unsigned char>(a[i]);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = scheme.pair(ca, static_cast<unsigned char>(b[j]));
    };
    auto [score, ops] = gotoh(a.size(), b.size(), scheme.gap_open, scheme.gap_extend, row_scores);

    PairwiseAlignment result;
    result.score = score;
    std::size_t i = 0, j = 0;
    for (Op op : ops) {
        result.aligned_a.push_back(op == Op::b_only ? kGapChar : a[i++]);
        result.aligned_b.push_back(op == Op::a_only ? kGapChar : b[j++]);
    }
    return result;
}

double kmer_distance(std::string_view a, std::string_view b, int k) {
    if (k < 1) throw Error("k-mer length must be at least 1");
    return jaccard_distance(kmer_set(a, k), kmer_set(b, k));
}

GuideTree upgma(const std::vector<std::vector<double>>& distances) {
    const std::size_t n = distances.size();
    if (n < 2) throw Error("guide tree needs at least 2 sequences");
    const std::size_t total = 2 * n - 1;
    std::vector<std::vector<double>> d(total, std::vector<double>(total, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (distances[i].size() != n) throw Error("distance matrix is not square");
        for (std::size_t j = 0; j < n; ++j) d[i][j] = distances[i][j];
    }
    std::vector<std::size_t> size(total, 1);
    std::vector<int> live(n);
    std::iota(live.begin(), live.end(), 0);

    GuideTree tree;
    tree.leaf_count = n;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        // `live` stays sorted ascending, so the first strict minimum found is
        // the lexicographically smallest pair.
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t x = 0; x < live.size(); ++x)
            for (std::size_t y = x + 1; y < live.size(); ++y)
                if (d[live[x]][live[y]] < best) {
                    best = d[live[x]][live[y]];
                    bi = x;
                    bj = y;
                }
        const int a = live[bi], b = live[bj];
        const int node = static_cast<int>(n + t);
        size[node] = size[a] + size[b];
        const double wa = static_cast<double>(size[a]), wb = static_cast<double>(size[b]);
        for (int other : live) {
            if (other == a || other == b) continue;
            const double v = (wa * d[a][other] + wb * d[b][other]) / (wa + wb);
            d[node][other] = d[other][node] = v;
        }
        tree.merges.push_back({a, b, best});
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(bj));
        live.erase(live.begin() + static_cast<std::ptrdiff_t>(bi));
        live.push_back(node);
    }
    return tree;
}

GuideTree build_guide_tree(const std::vector<std::string>& seqs, int k) {
    if (seqs.size() < 2) throw Error("guide tree needs at least 2 sequences");
    if (k < 1) throw Error("k-mer length must be at least 1");
    std::vector<std::vector<std::string_view>> sets;
    sets.reserve(seqs.size());
    for (const auto& s : seqs) sets.push_back(kmer_set(s, k));
    std::vector<std::vector<double>> dist(seqs.size(), std::vector<double>(seqs.size(), 0.0));
    for (std::size_t i = 0; i < seqs.size(); ++i)
        for (std::size_t j = i + 1; j < seqs.size(); ++j) dist[i][j] = dist[j][i] = jaccard_distance(sets[i], sets[j]);
    return upgma(dist);
}

std::string Msa::degap(std::size_t row) const {
    std::string out;
    for (Symbol s : rows[row])
        if (s != kGap) out.push_back(static_cast<char>(static_cast<unsigned char>(s)));
    return out;
}

std::string Msa::render(std::size_t row) const {
    std::string out;
    out.reserve(columns);
    for (Symbol s : rows[row]) out.push_back(s == kGap ? kGapChar : static_cast<char>(static_cast<unsigned char>(s)));
    return out;
}

Msa msa_from_strings(const std::vector<std::string>& rows) {
    Msa msa;
    msa.columns = rows.empty() ? 0 : rows.front().size();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != msa.columns) throw Error("alignment rows differ in length");
        std::vector<Symbol> row;
        row.reserve(msa.columns);
        for (char c : rows[r]) row.push_back(c == kGapChar ? kGap : static_cast<Symbol>(static_cast<unsigned char>(c)));
        msa.rows.push_back(std::move(row));
        msa.row_ids.push_back(static_cast<int>(r));
    }
    return msa;
}

double sum_of_pairs_score(const Msa& msa, const ScoringScheme& scheme) {
    double total = 0.0;
    for (std::size_t p = 0; p < msa.size(); ++p) {
        for (std::size_t q = p + 1; q < msa.size(); ++q) {
            // 0: no gap run open, 1: run of gaps in p, 2: run of gaps in q
            int run = 0;
            for (std::size_t c = 0; c < msa.columns; ++c) {
                const Symbol a = msa.rows[p][c], b = msa.rows[q][c];
                if (a == kGap && b == kGap) continue;
                if (a != kGap && b != kGap) {
                    total += scheme.pair(static_cast<unsigned char>(a), static_cast<unsigned char>(b));
                    run = 0;
                } else {
                    const int kind = a == kGap ? 1 : 2;
                    total += run == kind ? scheme.gap_extend : scheme.gap_open;
                    run = kind;
                }
            }
        }
    }
    return total;
}

Msa progressive_msa(const std::vector<std::string>& texts, const MsaOptions& options) {
    options.scheme.validate();
    const std::size_t n = texts.size();
    if (n < 2) throw Error("progressive alignment needs at least 2 sequences");
    std::array<int, 256> code{};
    code.fill(-1);
    int alphabet = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (texts[k].empty()) throw Error(fmt::format("generation {} is empty", k));
        if (texts[k].size() > options.length_cap)
            throw Error(fmt::format("generation {} has {} characters, over the cap of {}", k, texts[k].size(),
                                    options.length_cap));
        for (unsigned char c : texts[k])
            if (code[c] < 0) code[c] = alphabet++;
    }

    const GuideTree tree = build_guide_tree(texts, options.kmer);
    std::vector<Profile> nodes(2 * n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        nodes[k].members = {static_cast<int>(k)};
        std::vector<Symbol> row;
        row.reserve(texts[k].size());
        for (unsigned char c : texts[k]) row.push_back(static_cast<Symbol>(c));
        nodes[k].rows = {std::move(row)};
    }
    for (std::size_t t = 0; t < tree.merges.size(); ++t) {
        const auto& mg = tree.merges[t];
        nodes[n + t] = merge_profiles(nodes[mg.left], nodes[mg.right], options.scheme, code, alphabet);
        nodes[mg.left] = {};
        nodes[mg.right] = {};
    }

    Profile& root = nodes.back();
    Msa msa;
    msa.columns = root.columns();
    msa.rows.resize(n);
    msa.row_ids.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const int id = root.members[r];
        msa.rows[id] = std::move(root.rows[r]);
        msa.row_ids[id] = id;
    }
    return msa;
}

Msa progressive_msa(const corpus::GenerationSet& gs, const MsaOptions& options) {
    std::vector<std::string> texts;
    texts.reserve(gs.size());
    for (const auto& g : gs.generations) texts.push_back(g.text);
    Msa msa = progressive_msa(texts, options);
    for (std::size_t r = 0; r < msa.size(); ++r) msa.row_ids[r] = gs.generations[r].sample_index;
    return msa;
}

// ---------------------------------------------------------------------------

std::string to_string(OverlapMetric m) {
    return m == OverlapMetric::pairwise_match ? "pairwise_match" : "aligned_with_at_least_5";
}

OverlapMetric overlap_metric_from_string(const std::string& s) {
    if (s == "pairwise_match") return OverlapMetric::pairwise_match;
    if (s == "aligned_with_at_least_5") return OverlapMetric::aligned_with_at_least_5;
    throw Error(fmt::format("unknown overlap metric '{}'", s));
}

double column_overlap(const Msa& msa, std::size_t col, OverlapMetric metric) {
    const std::size_t n = msa.size();
    if (n < 2) throw Error("overlap needs at least 2 rows");
    std::array<std::size_t, 256> counts{};
    for (const auto& row : msa.rows)
        if (row[col] != kGap) ++counts[static_cast<unsigned char>(row[col])];
    if (metric == OverlapMetric::pairwise_match) {
        double pairs = 0.0;
        for (auto c : counts) pairs += static_cast<double>(c) * static_cast<double>(c - (c > 0)) / 2.0;
        return pairs / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
    }
    std::size_t aligned = 0;
    for (auto c : counts)
        if (c >= 6) aligned += c;  // the row plus at least five others
    return static_cast<double>(aligned) / static_cast<double>(n);
}

std::vector<double> downsample(const std::vector<double>& values, std::size_t buckets) {
    if (values.empty()) throw Error("cannot downsample an empty sequence");
    const double m = static_cast<double>(values.size());
    const double width = m / static_cast<double>(buckets);
    std::vector<double> out(buckets, 0.0);
    for (std::size_t b = 0; b < buckets; ++b) {
        const double lo = static_cast<double>(b) * m / static_cast<double>(buckets);
        const double hi = static_cast<double>(b + 1) * m / static_cast<double>(buckets);
        const auto first = static_cast<std::size_t>(std::floor(lo));
        const auto last = std::min(values.size(), static_cast<std::size_t>(std::ceil(hi)));
        double acc = 0.0;
        for (std::size_t c = first; c < last; ++c) {
            const double cover = std::min(hi, static_cast<double>(c + 1)) - std::max(lo, static_cast<double>(c));
            if (cover > 0.0) acc += values[c] * cover;
        }
        out[b] = acc / width;
    }
    return out;
}

std::vector<double> gaussian_filter(const std::vector<double>& values, double sigma) {
    if (sigma < 0.0) throw Error("sigma must be non-negative");
    if (sigma == 0.0) return values;
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (std::ptrdiff_t k = -radius; k <= radius; ++k)
        kernel[static_cast<std::size_t>(k + radius)] = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));

    const auto n = static_cast<std::ptrdiff_t>(values.size());
    std::vector<double> out(values.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0, norm = 0.0;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - radius); j <= std::min(n - 1, i + radius); ++j) {
            const double w = kernel[static_cast<std::size_t>(j - i + radius)];
            acc += w * values[static_cast<std::size_t>(j)];
            norm += w;
        }
        out[static_cast<std::size_t>(i)] = acc / norm;
    }
    return out;
}

OverlapCurve overlap_curve(const Msa& msa, const OverlapOptions& options) {
    if (msa.size() < 2) throw Error("overlap curve needs at least 2 rows");
    if (options.min_support < 1) throw Error("min_support must be at least 1");
    std::vector<double> per_column;
    for (std::size_t c = 0; c < msa.columns; ++c) {
        int occupied = 0;
        for (const auto& row : msa.rows) occupied += row[c] != kGap;
        if (occupied >= options.min_support) per_column.push_back(column_overlap(msa, c, options.metric));
    }
    if (per_column.empty())
        throw Error(fmt::format("no alignment column is shared by at least {} sequences", options.min_support));

    OverlapCurve curve;
    curve.metric = options.metric;
    curve.smoothing_sigma = options.sigma;
    curve.values = gaussian_filter(downsample(per_column, kCurveLength), options.sigma);
    for (double& v : curve.values) v = std::clamp(v, 0.0, 1.0);
    return curve;
}

OverlapCurve mean_curve(const std::vector<OverlapCurve>& curves) {
    if (curves.empty()) throw Error("no curves to average");
    OverlapCurve out = curves.front();
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (const auto& c : curves) {
        if (c.metric != out.metric || c.values.size() != out.values.size())
            throw Error("curves disagree on metric or length");
        for (std::size_t i = 0; i < c.values.size(); ++i) out.values[i] += c.values[i];
    }
    for (double& v : out.values) v /= static_cast<double>(curves.size());
    return out;
}

}  // namespace blueprint::align
