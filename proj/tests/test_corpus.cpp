#include <doctest.h>

#include <cmath>

#include "blueprint/corpus.hpp"
#include "blueprint/synth.hpp"
#include "test_util.hpp"

using namespace blueprint;
using testutil::write_file;

namespace {

std::string trace_file(const std::string& steps, std::int64_t vocab = 4) {
    return R"({"vocab_size":)" + std::to_string(vocab) + R"(,"source":"gold"})" + "\n" + steps;
}

}  // namespace

TEST_CASE("a single minimal record loads as one generation") {
    const auto dir = testutil::scratch_dir("corpus_min");
    const auto gs = corpus::load_generation_set(write_file(dir / "g.jsonl", R"({"prompt_id":"p0","text":"hello"})"
                                                                             "\n"));
    CHECK(gs.prompt_id == "p0");
    REQUIRE(gs.size() == 1);
    CHECK(gs.generations[0].text == "hello");
    CHECK(gs.generations[0].sample_index == 0);
}

TEST_CASE("duplicate explicit sample indices are rejected") {
    const auto dir = testutil::scratch_dir("corpus_dup");
    const auto path = write_file(dir / "g.jsonl",
                                 R"({"prompt_id":"p0","sample_index":0,"text":"a"})"
                                 "\n"
                                 R"({"prompt_id":"p0","sample_index":0,"text":"b"})"
                                 "\n");
    CHECK_THROWS_WITH_AS(corpus::load_generation_set(path), doctest::Contains("duplicate sample_index"), Error);
}

TEST_CASE("malformed lines report their line number") {
    const auto dir = testutil::scratch_dir("corpus_bad");
    const auto path = write_file(dir / "g.jsonl",
                                 R"({"prompt_id":"p0","text":"a"})"
                                 "\n{not json\n");
    CHECK_THROWS_WITH_AS(corpus::load_generation_sets(path), doctest::Contains(":2:"), Error);
}

TEST_CASE("an empty generation file") {
    const auto dir = testutil::scratch_dir("corpus_empty");
    const auto path = write_file(dir / "g.jsonl", "");
    CHECK(corpus::load_generation_sets(path).empty());
    CHECK_THROWS_WITH_AS(corpus::load_generation_set(path), doctest::Contains("empty file"), Error);
}

TEST_CASE("absent indices are assigned in arrival order") {
    const auto dir = testutil::scratch_dir("corpus_order");
    const auto path = write_file(dir / "g.jsonl",
                                 R"({"prompt_id":"p0","text":"first"})"
                                 "\n"
                                 R"({"prompt_id":"p0","text":"second"})"
                                 "\n"
                                 R"({"prompt_id":"p0","text":"third"})"
                                 "\n");
    const auto gs = corpus::load_generation_set(path);
    REQUIRE(gs.size() == 3);
    CHECK(gs.generations[0].text == "first");
    CHECK(gs.generations[1].text == "second");
    CHECK(gs.generations[2].text == "third");
}

TEST_CASE("explicit indices reorder records") {
    const auto dir = testutil::scratch_dir("corpus_idx");
    const auto path = write_file(dir / "g.jsonl",
                                 R"({"prompt_id":"p0","sample_index":1,"text":"b"})"
                                 "\n"
                                 R"({"prompt_id":"p0","sample_index":0,"text":"a"})"
                                 "\n");
    const auto gs = corpus::load_generation_set(path);
    CHECK(gs.generations[0].text == "a");
    CHECK(gs.generations[1].text == "b");
}

TEST_CASE("bundled rlhf_like fixture has 80 prompts of 100 generations") {
    const auto sets = corpus::load_generation_sets(testutil::fixture("rlhf_like.jsonl"));
    CHECK(sets.size() == 80);
    for (const auto& gs : sets) {
        CHECK(gs.size() == 100);
        CHECK(gs.sampling_method == corpus::SamplingMethod::nucleus);
        CHECK(gs.nucleus_p == doctest::Approx(0.9));
    }
}

TEST_CASE("generation sets round-trip through the writer") {
    const auto dir = testutil::scratch_dir("corpus_rt");
    auto prompts = synth::rlhf_like(9, 2, 5);
    std::vector<corpus::GenerationSet> sets{prompts[0].set, prompts[1].set};
    sets[1].generations[2].token_ids = std::vector<std::int64_t>{4, 5, 6};
    sets[1].nucleus_p.reset();
    sets[1].sampling_method = corpus::SamplingMethod::greedy;
    corpus::write_generation_sets(dir / "a.jsonl", sets);
    const auto once = corpus::load_generation_sets(dir / "a.jsonl");
    CHECK(once == sets);
    corpus::write_generation_sets(dir / "b.jsonl", once);
    CHECK(corpus::load_generation_sets(dir / "b.jsonl") == once);
    CHECK(testutil::read_file(dir / "a.jsonl") == testutil::read_file(dir / "b.jsonl"));
}

TEST_CASE("point-mass trace step is valid") {
    const auto dir = testutil::scratch_dir("trace_point");
    const auto t = corpus::load_trace(write_file(
        dir / "t.jsonl",
        trace_file(R"({"realized_token":0,"realized_logprob":0,"sorted_probs":[1.0],"tail_mass":0,"nonnegligible_count":1})"
                   "\n")));
    CHECK(t.steps.size() == 1);
    CHECK(t.vocab_size == 4);
}

TEST_CASE("probabilities summing past tolerance are rejected") {
    const auto dir = testutil::scratch_dir("trace_sum");
    const auto path = write_file(
        dir / "t.jsonl",
        trace_file(R"({"realized_token":0,"realized_logprob":-0.6,"sorted_probs":[0.6,0.5],"tail_mass":0,"nonnegligible_count":2})"
                   "\n"));
    CHECK_THROWS_WITH_AS(corpus::load_trace(path), doctest::Contains("probability sum out of tolerance"), Error);
}

TEST_CASE("realized log-probability of a non-top token") {
    const auto dir = testutil::scratch_dir("trace_ln");
    // ln(0.3) = -1.2039728043259361
    const auto t = corpus::load_trace(write_file(
        dir / "t.jsonl",
        trace_file(
            R"({"realized_token":2,"realized_logprob":-1.2039728043259361,"sorted_probs":[0.5,0.3,0.2],"tail_mass":0,"nonnegligible_count":3})"
            "\n")));
    CHECK(t.steps[0].realized_logprob == doctest::Approx(std::log(0.3)).epsilon(1e-15));
}

TEST_CASE("trace invariants are enforced, never repaired") {
    const auto dir = testutil::scratch_dir("trace_bad");
    auto load = [&](const std::string& step) {
        return corpus::load_trace(write_file(dir / "t.jsonl", trace_file(step + "\n")));
    };
    CHECK_THROWS_WITH_AS(
        load(R"({"realized_token":0,"realized_logprob":-1,"sorted_probs":[0.4,0.6],"tail_mass":0,"nonnegligible_count":2})"),
        doctest::Contains("not non-increasing"), Error);
    CHECK_THROWS_WITH_AS(
        load(R"({"realized_token":0,"realized_logprob":0,"sorted_probs":[1.0],"tail_mass":0,"nonnegligible_count":5})"),
        doctest::Contains("nonnegligible_count out of range"), Error);
    CHECK_THROWS_WITH_AS(
        load(R"({"realized_token":0,"realized_logprob":0,"sorted_probs":[1.0],"tail_mass":0,"nonnegligible_count":0})"),
        doctest::Contains("nonnegligible_count out of range"), Error);
    CHECK_THROWS_WITH_AS(
        load(R"({"realized_token":9,"realized_logprob":0,"sorted_probs":[1.0],"tail_mass":0,"nonnegligible_count":1})"),
        doctest::Contains("realized_token out of range"), Error);
    CHECK_THROWS_WITH_AS(
        load(R"({"realized_token":0,"realized_logprob":-0.1,"sorted_probs":[0.5,0.5],"tail_mass":0,"nonnegligible_count":2})"),
        doctest::Contains("exceeds the top probability"), Error);
}

TEST_CASE("tail mass counts toward normalization") {
    corpus::TraceStep s;
    s.sorted_probs = {0.7, 0.2};
    s.tail_mass = 0.1;
    s.realized_logprob = std::log(0.2);
    s.nonnegligible_count = 3;
    CHECK_NOTHROW(corpus::validate(s, 10));
    s.tail_mass = 0.1 + 2e-6;
    CHECK_THROWS_AS(corpus::validate(s, 10), Error);
}

TEST_CASE("make_step truncates below the dump floor into the tail") {
    const std::vector<double> full{0.1, 0.6, 5e-10, 0.3 - 5e-10 - 2e-9, 2e-9};
    const auto s = corpus::make_step(full, 1);
    CHECK(s.sorted_probs.size() == 4);
    CHECK(s.sorted_probs[0] == 0.6);
    CHECK(s.tail_mass == 5e-10);
    CHECK(s.nonnegligible_count == 3);
    CHECK(s.realized_logprob == std::log(0.6));
    CHECK_NOTHROW(corpus::validate(s, 5));
}

TEST_CASE("traces round-trip") {
    const auto dir = testutil::scratch_dir("trace_rt");
    const auto t = synth::concentrated_trace(3, 40, 64);
    corpus::write_trace(dir / "t.jsonl", t);
    CHECK(corpus::load_trace(dir / "t.jsonl") == t);
}

TEST_CASE("steps out of order are rejected") {
    const auto dir = testutil::scratch_dir("trace_step");
    const auto path = write_file(
        dir / "t.jsonl",
        trace_file(R"({"step":1,"realized_token":0,"realized_logprob":0,"sorted_probs":[1.0],"tail_mass":0,"nonnegligible_count":1})"
                   "\n"));
    CHECK_THROWS_WITH_AS(corpus::load_trace(path), doctest::Contains("out of order"), Error);
}

TEST_CASE("minimal hidden-state dump") {
    const auto dir = testutil::scratch_dir("hidden_min");
    write_file(dir / "h.meta.json", R"({"T":2,"d":3,"V":10,"layer_index":28,"token_ids":[1,2]})");
    corpus::write_f32_le(dir / "h.f32", std::vector<float>{1, 2, 3, 4, 5, 6});
    const auto h = corpus::load_hidden_states(dir / "h.meta.json", dir / "h.f32");
    CHECK(h.size() == 2);
    CHECK(h.hidden_dim == 3);
    CHECK(h.layer_index == 28);
    CHECK(h.row(1)[0] == 4.0f);
    CHECK(h.row(1)[2] == 6.0f);
}

TEST_CASE("hidden-state errors") {
    const auto dir = testutil::scratch_dir("hidden_bad");
    write_file(dir / "h.meta.json", R"({"T":2,"d":3,"V":10,"layer_index":28,"token_ids":[1,2]})");
    write_file(dir / "short.f32", std::string(23, '\0'));
    CHECK_THROWS_WITH_AS(corpus::load_hidden_states(dir / "h.meta.json", dir / "short.f32"),
                         doctest::Contains("size mismatch"), Error);

    write_file(dir / "oob.meta.json", R"({"T":2,"d":3,"V":2,"layer_index":28,"token_ids":[1,2]})");
    corpus::write_f32_le(dir / "ok.f32", std::vector<float>(6, 0.0f));
    CHECK_THROWS_WITH_AS(corpus::load_hidden_states(dir / "oob.meta.json", dir / "ok.f32"),
                         doctest::Contains("out of range"), Error);

    std::vector<float> bad(6, 0.0f);
    bad[5] = std::numeric_limits<float>::quiet_NaN();
    corpus::write_f32_le(dir / "nan.f32", bad);
    CHECK_THROWS_WITH_AS(corpus::load_hidden_states(dir / "h.meta.json", dir / "nan.f32"),
                         doctest::Contains("non-finite"), Error);
}

TEST_CASE("fixture hidden-state dump matches the generator") {
    const auto h = corpus::load_hidden_states(testutil::fixture("hidden_low.meta.json"),
                                              testutil::fixture("hidden_low.f32"));
    const auto ref = synth::hidden_fixture(5, 1000, 16, 32, true);
    REQUIRE(h.size() == 1000);
    CHECK(h.hidden_dim == 16);
    CHECK(h.vocab_size == 32);
    CHECK(h.token_ids == ref.token_ids);
    for (std::size_t j = 0; j < 16; ++j) CHECK(h.row(0)[j] == ref.row(0)[j]);
}

TEST_CASE("float32 files are little-endian") {
    const auto dir = testutil::scratch_dir("f32");
    corpus::write_f32_le(dir / "x.f32", std::vector<float>{1.0f});
    const auto bytes = testutil::read_file(dir / "x.f32");
    REQUIRE(bytes.size() == 4);
    // 1.0f = 0x3f800000
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x00);
    CHECK(static_cast<unsigned char>(bytes[3]) == 0x3f);
}
