#include "blueprint/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace blueprint::synth {

namespace {

constexpr std::array<const char*, 48> kSentenceWords = {
    "PYTHON",   "JAVASCRIPT", "LANGUAGE", "TYPING",    "DYNAMIC",  "STATIC",   "BROWSER", "SERVER",
    "SYNTAX",   "LIBRARY",    "RUNTIME",  "COMPILER",  "MODULE",   "CLASSES",  "OBJECTS", "FUNCTIONS",
    "SCRIPTS",  "DEVELOPERS", "PROJECTS", "COMMUNITY", "POPULAR",  "FLEXIBLE", "SIMPLE",  "POWERFUL",
    "USED",     "FOR",        "AND",      "THE",       "WITH",     "IS",       "ARE",     "BOTH",
    "MANY",     "DATA",       "SCIENCE",  "WEB",       "APPS",     "TOOLS",    "EASY",    "READ",
    "WRITE",    "FAST",       "CODE",     "SUPPORT",   "FEATURES", "MEMORY",   "THREADS", "EVENTS",
};

constexpr std::string_view kConsonants = "bcdfghjklmnprstvwz";
constexpr std::string_view kVowels = "aeiou";

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string pseudo_word(std::mt19937_64& rng) {
    const std::size_t len = pick(rng, 2, 8);
    std::string w;
    for (std::size_t i = 0; i < len; ++i)
        w.push_back(i % 2 == 0 ? kConsonants[pick(rng, 0, kConsonants.size() - 1)]
                               : kVowels[pick(rng, 0, kVowels.size() - 1)]);
    return w;
}

std::string sentence(std::mt19937_64& rng) {
    const std::size_t words = pick(rng, 10, 12);
    std::string s;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) s.push_back(' ');
        s += kSentenceWords[pick(rng, 0, kSentenceWords.size() - 1)];
    }
    s.push_back('.');
    return s;
}

// Each word of the template survives with probability one half, so fillers
// share vocabulary and order but rarely a long verbatim run.
std::string filler(std::mt19937_64& rng, const std::vector<std::string>& words) {
    std::bernoulli_distribution keep(0.5);
    std::string s;
    for (const auto& w : words)
        if (keep(rng)) {
            if (!s.empty()) s.push_back(' ');
            s += w;
        }
    return s.empty() ? words[pick(rng, 0, words.size() - 1)] : s;
}

corpus::GenerationSet empty_set(std::string id, std::string label, double p) {
    corpus::GenerationSet gs;
    gs.prompt_id = std::move(id);
    gs.prompt_text = fmt::format("Synthetic prompt {}", gs.prompt_id);
    gs.model_label = std::move(label);
    gs.sampling_method = corpus::SamplingMethod::nucleus;
    gs.nucleus_p = p;
    return gs;
}

}  // namespace

std::vector<PlantedPrompt> rlhf_like(std::uint64_t seed, std::size_t prompts, std::size_t per_prompt) {
    std::mt19937_64 rng(seed);
    std::vector<PlantedPrompt> out;
    for (std::size_t p = 0; p < prompts; ++p) {
        PlantedPrompt pp;
        pp.set = empty_set(fmt::format("p{}", p), "rlhf_like", 0.9);
        const std::string opening = sentence(rng), middle = sentence(rng), closing = sentence(rng);
        std::vector<std::string> early(14), late(14);
        for (auto& w : early) w = pseudo_word(rng);
        for (auto& w : late) w = pseudo_word(rng);

        std::vector<int> order(per_prompt);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const auto lo = static_cast<std::size_t>(std::ceil(0.6 * static_cast<double>(per_prompt)));
        const auto hi = static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(per_prompt)));
        std::vector<int> with_middle(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pick(rng, lo, hi)));
        std::sort(with_middle.begin(), with_middle.end());

        for (std::size_t k = 0; k < per_prompt; ++k) {
            const bool has_middle = std::binary_search(with_middle.begin(), with_middle.end(), static_cast<int>(k));
            std::string text = opening + " " + filler(rng, early);
            if (has_middle) text += " " + middle;
            text += " " + filler(rng, late) + " " + closing;
            pp.set.generations.push_back({static_cast<int>(k), std::move(text), std::nullopt});
        }
        std::vector<int> everyone(per_prompt);
        std::iota(everyone.begin(), everyone.end(), 0);
        pp.planted = {{opening, everyone}, {middle, with_middle}, {closing, everyone}};
        out.push_back(std::move(pp));
    }
    return out;
}

std::vector<corpus::GenerationSet> base_like(std::uint64_t seed, std::size_t prompts, std::size_t per_prompt) {
    std::mt19937_64 rng(seed);
    std::vector<corpus::GenerationSet> out;
    for (std::size_t p = 0; p < prompts; ++p) {
        auto gs = empty_set(fmt::format("p{}", p), "base_like", 0.7);
        for (std::size_t k = 0; k < per_prompt; ++k) {
            std::string text;
            const std::size_t words = pick(rng, 50, 62);
            for (std::size_t i = 0; i < words; ++i) {
                if (i) text.push_back(' ');
                text += pseudo_word(rng);
            }
            gs.generations.push_back({static_cast<int>(k), std::move(text), std::nullopt});
        }
        out.push_back(std::move(gs));
    }
    return out;
}

CoreFixture planted_core(std::uint64_t seed, std::size_t rows, std::size_t core_length) {
    if (rows > 26) throw Error("planted core supports at most 26 rows");
    std::mt19937_64 rng(seed);
    constexpr std::string_view lower = "abcdefghijklmnopqrstuvwxyz";
    constexpr std::string_view upper = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    auto random_from = [&](std::string_view alphabet, std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[pick(rng, 0, alphabet.size() - 1)]);
        return s;
    };
    CoreFixture f;
    f.core = random_from(upper, core_length);
    std::string left(lower), right(lower);
    std::shuffle(left.begin(), left.end(), rng);
    std::shuffle(right.begin(), right.end(), rng);
    for (std::size_t r = 0; r < rows; ++r) {
        std::string prefix = random_from(lower, 39) + left[r];
        std::string suffix = right[r] + random_from(lower, 39);
        f.rows.push_back(prefix + f.core + suffix);
    }
    return f;
}

corpus::DistributionTrace concentrated_trace(std::uint64_t seed, std::size_t steps, std::int64_t vocab,
                                             double top_mass) {
    if (vocab < 8) throw Error("concentrated trace needs a vocabulary of at least 8");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.5, 1.5);
    corpus::DistributionTrace trace;
    trace.vocab_size = vocab;
    trace.source = corpus::TraceSource::self_generated;
    std::vector<std::int64_t> ids(static_cast<std::size_t>(vocab));
    std::iota(ids.begin(), ids.end(), 0);
    for (std::size_t t = 0; t < steps; ++t) {
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::size_t others = pick(rng, 3, 6);
        std::vector<double> full(static_cast<std::size_t>(vocab), 0.0);
        full[static_cast<std::size_t>(ids[0])] = top_mass;
        std::vector<double> w(others);
        for (double& x : w) x = unit(rng);
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < others; ++i)
            full[static_cast<std::size_t>(ids[i + 1])] = (1.0 - top_mass) * w[i] / total;
        const auto realized = ids[pick(rng, 0, others)];
        trace.steps.push_back(corpus::make_step(full, realized));
    }
    corpus::validate(trace);
    return trace;
}

corpus::DistributionTrace arithmetic_count_trace(std::size_t steps, std::int64_t vocab) {
    if (static_cast<std::int64_t>(steps) > vocab) throw Error("vocabulary too small for the step count");
    corpus::DistributionTrace trace;
    trace.vocab_size = vocab;
    trace.source = corpus::TraceSource::gold;
    for (std::size_t t = 0; t < steps; ++t) {
        corpus::TraceStep s;
        s.realized_token = 0;
        s.realized_logprob = 0.0;
        s.sorted_probs = {1.0};
        s.tail_mass = 0.0;
        s.nonnegligible_count = static_cast<std::int64_t>(t + 1);
        trace.steps.push_back(std::move(s));
    }
    corpus::validate(trace);
    return trace;
}

corpus::DistributionTrace uniform_trace(std::size_t steps, std::int64_t vocab) {
    corpus::DistributionTrace trace;
    trace.vocab_size = vocab;
    trace.source = corpus::TraceSource::gold;
    const double p = 1.0 / static_cast<double>(vocab);
    for (std::size_t t = 0; t < steps; ++t) {
        corpus::TraceStep s;
        s.realized_token = static_cast<std::int64_t>(t) % vocab;
        s.realized_logprob = -std::log(static_cast<double>(vocab));
        s.sorted_probs.assign(static_cast<std::size_t>(vocab), p);
        s.nonnegligible_count = vocab;
        trace.steps.push_back(std::move(s));
    }
    corpus::validate(trace);
    return trace;
}

corpus::DistributionTrace constant_prob_trace(std::size_t steps, std::int64_t vocab, double realized_prob,
                                              corpus::TraceSource source) {
    if (vocab < 2 || !(realized_prob > 0.0 && realized_prob <= 1.0)) throw Error("bad constant-probability trace");
    corpus::DistributionTrace trace;
    trace.vocab_size = vocab;
    trace.source = source;
    std::vector<double> full(static_cast<std::size_t>(vocab), (1.0 - realized_prob) / static_cast<double>(vocab - 1));
    full[0] = realized_prob;
    for (std::size_t t = 0; t < steps; ++t) {
        auto step = corpus::make_step(full, 0);
        step.realized_logprob = std::log(realized_prob);
        trace.steps.push_back(std::move(step));
    }
    corpus::validate(trace);
    return trace;
}

corpus::HiddenStateDataset hidden_fixture(std::uint64_t seed, std::size_t tokens, std::size_t dim,
                                          std::int64_t vocab, bool low_entropy) {
    constexpr std::size_t kTemplates = 4;
    if (vocab < static_cast<std::int64_t>(kTemplates)) throw Error("hidden fixture needs at least 4 tokens");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto v = static_cast<std::size_t>(vocab);

    std::vector<float> embedding(v * dim);
    for (float& x : embedding) x = static_cast<float>(normal(rng));

    std::vector<std::int64_t> stream;
    stream.reserve(tokens);
    if (low_entropy) {
        std::vector<std::int64_t> perm(v);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const std::size_t width = v / kTemplates;
        while (stream.size() < tokens) {
            const std::size_t t = pick(rng, 0, kTemplates - 1);
            for (std::size_t i = 0; i < width && stream.size() < tokens; ++i) stream.push_back(perm[t * width + i]);
        }
    } else {
        while (stream.size() < tokens) stream.push_back(static_cast<std::int64_t>(pick(rng, 0, v - 1)));
    }

    std::vector<float> rows(tokens * dim);
    for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t j = 0; j < dim; ++j)
            rows[t * dim + j] = embedding[static_cast<std::size_t>(stream[t]) * dim + j] +
                                static_cast<float>(0.1 * normal(rng));

    corpus::HiddenStateDataset h;
    h.hidden_dim = dim;
    h.layer_index = 28;
    h.vocab_size = vocab;
    h.token_ids = std::move(stream);
    h.rows = std::make_shared<const std::vector<float>>(std::move(rows));
    return h;
}

}  // namespace blueprint::synth
