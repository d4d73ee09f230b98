#include <doctest.h>

#include <random>

#include "blueprint/ngramstats.hpp"
#include "blueprint/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace blueprint;
using ngrams::Token;

namespace {

corpus::GenerationSet set_of(const std::vector<std::string>& texts) {
    corpus::GenerationSet gs;
    gs.prompt_id = "p";
    for (std::size_t i = 0; i < texts.size(); ++i) gs.generations.push_back({static_cast<int>(i), texts[i], {}});
    return gs;
}

corpus::GenerationSet id_set(const std::vector<std::vector<std::int64_t>>& ids) {
    corpus::GenerationSet gs;
    gs.prompt_id = "p";
    for (std::size_t i = 0; i < ids.size(); ++i) gs.generations.push_back({static_cast<int>(i), "", ids[i]});
    return gs;
}

std::vector<oracle::Seq> oracle_view(const corpus::GenerationSet& gs) {
    std::vector<oracle::Seq> out;
    for (const auto& g : gs.generations) {
        if (g.token_ids) {
            oracle::Seq s;
            for (auto id : *g.token_ids) s.push_back("#" + std::to_string(id));
            out.push_back(s);
        } else {
            out.push_back(oracle::words(g.text));
        }
    }
    return out;
}

std::string counting_text(std::size_t length, std::size_t offset = 0) {
    std::string out;
    for (std::size_t i = 0; i < length; ++i) out += (i ? " w" : "w") + std::to_string(i + offset);
    return out;
}

/// Small sets in both tokenizations.
std::vector<corpus::GenerationSet> small_fixtures() {
    std::vector<corpus::GenerationSet> out;
    for (const auto& p : synth::rlhf_like(21, 3, 20)) out.push_back(p.set);
    for (const auto& gs : synth::base_like(22, 3, 20)) out.push_back(gs);
    std::mt19937_64 rng(23);
    for (int k = 0; k < 4; ++k) {
        std::vector<std::vector<std::int64_t>> ids(1 + rng() % 20);
        for (auto& seq : ids) {
            seq.resize(rng() % 200);
            for (auto& t : seq) t = static_cast<std::int64_t>(rng() % (2 + k * 3));
        }
        ids[0].resize(std::max<std::size_t>(ids[0].size(), 30), 1);
        out.push_back(id_set(ids));
    }
    return out;
}

}  // namespace

TEST_CASE("tokenize") {
    CHECK(ngrams::tokenize({0, "ignored text", std::vector<std::int64_t>{5, 9, 9}}) ==
          std::vector<Token>{std::int64_t{5}, std::int64_t{9}, std::int64_t{9}});
    CHECK(ngrams::tokenize({0, "a b  c", {}}) == std::vector<Token>{"a", "b", "c"});
    CHECK(ngrams::tokenize({0, "", {}}).empty());
    CHECK(ngrams::tokenize({0, "\ta\nb ", {}}) == std::vector<Token>{"a", "b"});
}

TEST_CASE("encode interns tokens across the set") {
    const auto seqs = ngrams::encode(set_of({"x y x", "y z"}));
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0][0] == seqs[0][2]);
    CHECK(seqs[0][1] == seqs[1][0]);
    CHECK(seqs[1][1] != seqs[0][0]);
    // an id token never equals a word token even with the same spelling
    auto mixed = set_of({"5"});
    mixed.generations.push_back({1, "", std::vector<std::int64_t>{5}});
    const auto m = ngrams::encode(mixed);
    CHECK(m[0][0] != m[1][0]);
}

TEST_CASE("max support examples") {
    const auto same = set_of(std::vector<std::string>(100, counting_text(40)));
    for (std::size_t n : {1, 5, 10, 25, 40}) CHECK(ngrams::max_ngram_support(same, n) == 100);

    std::vector<std::string> disjoint;
    for (std::size_t g = 0; g < 100; ++g) disjoint.push_back(counting_text(30, g * 1000));
    for (std::size_t n : {1, 5, 10, 25}) CHECK(ngrams::max_ngram_support(set_of(disjoint), n) == 1);

    CHECK_THROWS_WITH_AS(ngrams::max_ngram_support(same, 41), doctest::Contains("n too large"), Error);
    CHECK_THROWS_WITH_AS(ngrams::max_ngram_support(set_of({"", ""}), 1), doctest::Contains("n too large"), Error);
    CHECK_THROWS_AS(ngrams::max_ngram_support(same, 0), Error);
}

TEST_CASE("containment counts once per generation") {
    const auto gs = set_of({"a a a a", "b a"});
    CHECK(ngrams::max_ngram_support(gs, 1) == 2);
    CHECK(ngrams::sharing_histogram(gs, 1) == std::map<std::size_t, std::size_t>{{1, 1}, {2, 1}});
}

TEST_CASE("unique fraction examples") {
    const auto text = counting_text(50);
    for (std::size_t n : {1, 2, 3, 4}) {
        CHECK(ngrams::unique_ngram_fraction(set_of(std::vector<std::string>(100, text)), n) == doctest::Approx(0.01));
        CHECK(ngrams::unique_ngram_fraction(set_of({text}), n) == 1.0);
    }
    // distinct / occurrences, not distinct / positions in the longest generation
    CHECK(ngrams::unique_ngram_fraction(set_of({"a b a", "a"}), 1) == doctest::Approx(2.0 / 4.0));
    CHECK(ngrams::unique_ngram_fraction(set_of({"a b a", "a"}), 2) == doctest::Approx(2.0 / 2.0));
}

TEST_CASE("sharing histogram examples") {
    const auto text = counting_text(30);
    const auto all = ngrams::sharing_histogram(set_of(std::vector<std::string>(100, text)));
    CHECK(all == std::map<std::size_t, std::size_t>{{100, 21}});

    std::vector<std::string> disjoint;
    for (std::size_t g = 0; g < 100; ++g) disjoint.push_back(counting_text(30, g * 1000));
    CHECK(ngrams::sharing_histogram(set_of(disjoint)) == std::map<std::size_t, std::size_t>{{1, 2100}});
}

TEST_CASE("all statistics equal the nested-loop oracle on small sets") {
    for (const auto& gs : small_fixtures()) {
        const auto view = oracle_view(gs);
        const auto seqs = ngrams::encode(gs);
        for (std::size_t n : {1, 2, 3, 4, 5, 7, 10, 12, 25}) {
            const auto facts = oracle::naive_ngrams(view, n);
            const ngrams::NgramTable table(seqs, n);
            CHECK(table.occurrences() == facts.occurrences);
            CHECK(table.distinct() == facts.distinct.size());
            if (facts.occurrences == 0) {
                CHECK_THROWS_AS(ngrams::max_ngram_support(gs, n), Error);
                continue;
            }
            std::map<std::size_t, std::size_t> hist;
            std::size_t best = 0;
            for (auto s : facts.support) {
                ++hist[s];
                best = std::max(best, s);
            }
            CHECK(ngrams::max_ngram_support(gs, n) == best);
            CHECK(ngrams::sharing_histogram(gs, n) == hist);
            CHECK(ngrams::unique_ngram_fraction(gs, n) ==
                  static_cast<double>(facts.distinct.size()) / static_cast<double>(facts.occurrences));
        }
    }
}

TEST_CASE("monotonicity in n on fixtures") {
    auto fixtures = small_fixtures();
    for (const auto& gs : corpus::load_generation_sets(testutil::fixture("rlhf_small.jsonl"))) fixtures.push_back(gs);
    for (const auto& gs : corpus::load_generation_sets(testutil::fixture("base_small.jsonl"))) fixtures.push_back(gs);
    for (const auto& gs : fixtures) {
        const auto seqs = ngrams::encode(gs);
        std::size_t prev_support = gs.size();
        double prev_fraction = 0.0;
        for (std::size_t n = 1; n <= 12; ++n) {
            const ngrams::NgramTable t(seqs, n);
            if (t.occurrences() == 0) break;
            CHECK(t.max_support() <= prev_support);
            const double fraction = static_cast<double>(t.distinct()) / static_cast<double>(t.occurrences());
            CHECK(fraction >= prev_fraction);
            prev_support = t.max_support();
            prev_fraction = fraction;
        }
    }
}

TEST_CASE("histogram mass balance") {
    for (const auto& gs : small_fixtures()) {
        const auto view = oracle_view(gs);
        if (oracle::naive_ngrams(view, 10).occurrences == 0) continue;
        std::size_t weighted = 0;
        for (const auto& [bin, count] : ngrams::sharing_histogram(gs)) weighted += bin * count;
        std::size_t per_generation = 0;
        for (const auto& g : view) per_generation += oracle::naive_ngrams({g}, 10).distinct.size();
        CHECK(weighted == per_generation);
    }
}

TEST_CASE("report averages per prompt") {
    const auto sets = small_fixtures();
    ngrams::NgramConfig cfg;
    cfg.support_ns = {5, 25};
    cfg.unique_ns = {1, 3};
    const auto r = ngrams::ngram_report(sets, cfg);
    CHECK(r.prompts == sets.size());
    for (auto n : cfg.support_ns) {
        double total = 0;
        std::size_t count = 0;
        for (const auto& gs : sets) {
            const auto f = oracle::naive_ngrams(oracle_view(gs), n);
            if (f.occurrences == 0) continue;
            total += static_cast<double>(*std::max_element(f.support.begin(), f.support.end()));
            ++count;
        }
        CHECK(r.max_support.at(n) == doctest::Approx(total / static_cast<double>(count)));
    }
    for (auto n : cfg.unique_ns) {
        double total = 0;
        for (const auto& gs : sets) total += ngrams::unique_ngram_fraction(gs, n);
        CHECK(r.unique_fraction.at(n) == doctest::Approx(total / static_cast<double>(sets.size())));
    }
    std::map<std::size_t, std::size_t> summed;
    for (const auto& gs : sets)
        if (oracle::naive_ngrams(oracle_view(gs), 10).occurrences)
            for (const auto& [bin, count] : ngrams::sharing_histogram(gs)) summed[bin] += count;
    CHECK(r.sharing_histogram == summed);
    for (const auto& [bin, count] : summed)
        CHECK(r.sharing_histogram_mean.at(bin) == doctest::Approx(static_cast<double>(count) / sets.size()));
}

TEST_CASE("templated fixture shares long n-grams widely") {
    const auto sets = corpus::load_generation_sets(testutil::fixture("rlhf_like.jsonl"));
    REQUIRE(sets.size() == 80);
    double total = 0;
    for (const auto& gs : sets) total += static_cast<double>(ngrams::max_ngram_support(gs, 10));
    CHECK(total / 80.0 >= 60.0);
    const auto base = corpus::load_generation_sets(testutil::fixture("base_like.jsonl"));
    for (std::size_t i = 0; i < 5; ++i) CHECK(ngrams::max_ngram_support(base[i], 10) < 5);
}

TEST_CASE("diversity matching") {
    // Published 1-gram unique fractions: base at p=0.7 and 0.9, RLHF at p=0.9.
    CHECK(ngrams::match_diversity({{0.7, 0.0512}, {0.9, 0.0920}}, 0.0433) == 0.7);
    CHECK(ngrams::match_diversity({{0.5, 0.3}}, 0.9) == 0.5);
    CHECK(ngrams::match_diversity({{0.6, 0.10}, {0.8, 0.20}}, 0.15) == 0.6);
    CHECK(ngrams::match_diversity({{0.6, 0.10}, {0.8, 0.20}, {0.95, 0.40}}, 0.39) == 0.95);
    CHECK_THROWS_WITH_AS(ngrams::match_diversity({}, 0.1), doctest::Contains("empty"), Error);
}
