#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "blueprint/shannon.hpp"
#include "test_util.hpp"

using namespace blueprint;
using shannon::ShannonInstance;
using shannon::TieRule;

namespace {

ShannonInstance instance(std::vector<std::pair<std::int64_t, double>> scores, std::vector<std::int64_t> gold,
                         std::vector<std::int64_t> predicted = {}) {
    ShannonInstance inst{std::move(scores), std::move(gold), std::move(predicted), {}, {}};
    if (inst.predicted_tokens.empty()) inst.predicted_tokens = inst.gold_tokens;
    return inst;
}

/// Over every ordering of the tokens that lists scores in non-increasing
/// order, the earliest and latest position the gold token can take.
std::pair<std::size_t, std::size_t> gold_position_range(const std::vector<std::pair<std::int64_t, double>>& scores,
                                                        std::int64_t gold) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t lo = scores.size(), hi = 0;
    do {
        bool descending = true;
        for (std::size_t i = 1; i < order.size(); ++i)
            descending = descending && scores[order[i - 1]].second >= scores[order[i]].second;
        if (!descending) continue;
        for (std::size_t i = 0; i < order.size(); ++i)
            if (scores[order[i]].first == gold) {
                lo = std::min(lo, i);
                hi = std::max(hi, i);
            }
    } while (std::next_permutation(order.begin(), order.end()));
    return {lo, hi};
}

}  // namespace

TEST_CASE("incorrect guesses examples") {
    CHECK(shannon::incorrect_guesses(instance({{1, 5.0}, {2, 3.0}}, {1})) == 0);
    CHECK(shannon::incorrect_guesses(instance({{10, 3.0}, {11, 2.0}, {12, 1.0}}, {12})) == 2);
    // a tie with the gold token is not an incorrect guess unless the rule says so
    CHECK(shannon::incorrect_guesses(instance({{10, 2.0}, {12, 2.0}, {11, 1.0}}, {12})) == 0);
    CHECK(shannon::incorrect_guesses(instance({{10, 2.0}, {12, 2.0}, {11, 1.0}}, {12}), TieRule::inclusive) == 1);
    CHECK(shannon::incorrect_guesses(instance({{10, 3.0}, {11, 2.0}, {12, 2.0}}, {12}), TieRule::inclusive) == 2);
    // only the first gold token is ranked
    CHECK(shannon::incorrect_guesses(instance({{1, 5.0}, {2, 3.0}}, {2, 1})) == 1);
}

TEST_CASE("incorrect guesses errors") {
    CHECK_THROWS_WITH_AS(shannon::incorrect_guesses(instance({{1, 5.0}}, {9})), doctest::Contains("absent"), Error);
    CHECK_THROWS_AS(shannon::incorrect_guesses(instance({{1, 5.0}}, {})), Error);
}

TEST_CASE("tie rules agree with every ordering of four scored tokens") {
    const std::array<double, 4> levels{-1.5, 0.0, 0.25, 7.0};
    std::size_t checked = 0;
    for (int code = 0; code < 256; ++code) {
        std::vector<std::pair<std::int64_t, double>> scores;
        for (int t = 0; t < 4; ++t) scores.emplace_back(100 + t, levels[static_cast<std::size_t>(code >> (2 * t) & 3)]);
        for (std::int64_t gold = 100; gold < 104; ++gold) {
            const auto [first, last] = gold_position_range(scores, gold);
            auto listed = scores;
            std::sort(listed.begin(), listed.end());
            do {
                const auto inst = instance(listed, {gold});
                CHECK(shannon::incorrect_guesses(inst, TieRule::strict) == first);
                CHECK(shannon::incorrect_guesses(inst, TieRule::inclusive) == last);
                ++checked;
            } while (std::next_permutation(listed.begin(), listed.end()));
        }
    }
    CHECK(checked == 256 * 4 * 24);
}

TEST_CASE("incorrect guesses is a rank statistic") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> score(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<std::int64_t, double>> scores;
        const std::size_t vocab = 2 + rng() % 50;
        for (std::size_t t = 0; t < vocab; ++t) {
            const double s = rng() % 5 == 0 && t ? scores.back().second : score(rng);
            scores.emplace_back(static_cast<std::int64_t>(t), s);
        }
        const auto gold = static_cast<std::int64_t>(rng() % vocab);
        auto transformed = scores;
        for (auto& [tok, s] : transformed) s = std::exp(s);
        for (auto rule : {TieRule::strict, TieRule::inclusive})
            CHECK(shannon::incorrect_guesses(instance(scores, {gold}), rule) ==
                  shannon::incorrect_guesses(instance(transformed, {gold}), rule));
    }
}

TEST_CASE("normalize sorts and validates") {
    auto inst = instance({{3, 1.0}, {1, 2.0}, {2, 1.0}}, {1});
    shannon::normalize(inst);
    CHECK(inst.ranked_scores == std::vector<std::pair<std::int64_t, double>>{{1, 2.0}, {2, 1.0}, {3, 1.0}});
    auto dup = instance({{1, 1.0}, {1, 2.0}}, {1});
    CHECK_THROWS_WITH_AS(shannon::normalize(dup), doctest::Contains("twice"), Error);
    auto nan = instance({{1, NAN}}, {1});
    CHECK_THROWS_AS(shannon::normalize(nan), Error);
    auto no_gold = instance({{1, 1.0}}, {});
    CHECK_THROWS_AS(shannon::normalize(no_gold), Error);
}

TEST_CASE("multiset F1") {
    CHECK(shannon::multiset_f1<std::int64_t>({7, 8}, {7, 9}) == 0.5);
    CHECK(shannon::multiset_f1<std::int64_t>({7, 7}, {7}) == doctest::Approx(2.0 / 3.0));
    CHECK(shannon::multiset_f1<std::int64_t>({1}, {2}) == 0.0);
    CHECK(shannon::multiset_f1<std::int64_t>({}, {}) == 1.0);
    CHECK(shannon::multiset_f1<std::int64_t>({}, {1}) == 0.0);
    CHECK(shannon::multiset_f1<std::int64_t>({3, 2, 1}, {1, 2, 3}) == 1.0);
}

TEST_CASE("report examples") {
    std::vector<ShannonInstance> exact;
    for (std::int64_t g = 0; g < 5; ++g) exact.push_back(instance({{g, 9.0}, {g + 100, 1.0}}, {g, g + 1}));
    const auto r = shannon::shannon_report(exact);
    CHECK(r.em == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(r.avg_guesses == 0.0);
    CHECK(r.instances == 5);

    const auto one = shannon::shannon_report({instance({{7, 1.0}, {8, 2.0}}, {7, 9}, {7, 8})});
    CHECK(one.em == 0.0);
    CHECK(one.f1 == 0.5);
    CHECK(one.avg_guesses == 1.0);

    CHECK_THROWS_AS(shannon::shannon_report({}), Error);
}

TEST_CASE("string granularity compares whitespace words") {
    auto inst = instance({{1, 1.0}}, {1}, {2});
    inst.gold_text = " New  York";
    inst.predicted_text = "New York ";
    const auto r = shannon::shannon_report({inst}, TieRule::strict, shannon::Granularity::string);
    CHECK(r.em == 1.0);
    CHECK(r.f1 == 1.0);
    CHECK(shannon::shannon_report({inst}).em == 0.0);
    inst.predicted_text.reset();
    CHECK_THROWS_AS(shannon::shannon_report({inst}, TieRule::strict, shannon::Granularity::string), Error);
}

TEST_CASE("exact match implies full F1 on random instances") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::int64_t> gold(1 + rng() % 4), predicted(1 + rng() % 4);
        for (auto& g : gold) g = static_cast<std::int64_t>(rng() % 4);
        for (auto& p : predicted) p = static_cast<std::int64_t>(rng() % 4);
        if (rng() % 3 == 0) predicted = gold;
        const auto r = shannon::shannon_report({instance({{0, 1.0}, {1, 0.5}, {2, 0.2}, {3, 0.1}}, gold, predicted)});
        if (r.em == 1.0) CHECK(r.f1 == 1.0);
        CHECK(r.em <= r.f1 + 1e-9);
    }
}

TEST_CASE("random unique scores give about (V-1)/2 guesses") {
    std::mt19937_64 rng(41);
    constexpr std::int64_t V = 11;
    std::vector<ShannonInstance> trials;
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> values(V);
        std::iota(values.begin(), values.end(), 0.0);
        std::shuffle(values.begin(), values.end(), rng);
        std::vector<std::pair<std::int64_t, double>> scores;
        for (std::int64_t tok = 0; tok < V; ++tok) scores.emplace_back(tok, values[static_cast<std::size_t>(tok)]);
        trials.push_back(instance(scores, {static_cast<std::int64_t>(rng() % V)}));
    }
    CHECK(std::abs(shannon::shannon_report(trials).avg_guesses - 5.0) <= 0.5);
}

TEST_CASE("loading instances") {
    const auto dir = testutil::scratch_dir("shannon");
    testutil::write_file(dir / "ok.jsonl",
                         "{\"ranked_scores\": [[2, 0.5], [1, 1.5]], \"gold_tokens\": [2], \"predicted_tokens\": [1]}\n"
                         "\n"
                         "{\"ranked_scores\": [[4, 1]], \"gold_tokens\": [4], \"predicted_tokens\": [4],"
                         " \"gold_text\": \"x\", \"predicted_text\": null}\n");
    const auto loaded = shannon::load_instances(dir / "ok.jsonl");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].ranked_scores.front().first == 1);
    CHECK(shannon::incorrect_guesses(loaded[0]) == 1);
    CHECK(loaded[1].gold_text == "x");
    CHECK(!loaded[1].predicted_text);

    testutil::write_file(dir / "bad.jsonl", "{\"ranked_scores\": [[1, 1]], \"gold_tokens\": [1]}\n");
    CHECK_THROWS_WITH_AS(shannon::load_instances(dir / "bad.jsonl"), doctest::Contains("bad.jsonl:1"), Error);
    testutil::write_file(dir / "pair.jsonl",
                         "{\"ranked_scores\": [[1, 1]], \"gold_tokens\": [1], \"predicted_tokens\": []}\n"
                         "{\"ranked_scores\": [[1]], \"gold_tokens\": [1], \"predicted_tokens\": []}\n");
    CHECK_THROWS_WITH_AS(shannon::load_instances(dir / "pair.jsonl"), doctest::Contains("pair.jsonl:2"), Error);
    CHECK_THROWS_AS(shannon::load_instances(dir / "missing.jsonl"), Error);

    const auto fixture = shannon::load_instances(testutil::fixture("shannon.jsonl"));
    CHECK(fixture.size() == 40);
    const auto r = shannon::shannon_report(fixture);
    CHECK(r.em <= r.f1);
    CHECK(r.avg_guesses <= 49.0);
}
