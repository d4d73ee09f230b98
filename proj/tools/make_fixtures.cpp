// Writes the seeded synthetic fixture corpus used by the tests and the
// example manifest.
//
//   make_fixtures <output-dir>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <nlohmann/json.hpp>

#include "blueprint/planner.hpp"
#include "blueprint/synth.hpp"

namespace fs = std::filesystem;
using namespace blueprint;

namespace {

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw Error(path.string() + ": write failed");
}

std::vector<corpus::GenerationSet> sets_of(const std::vector<synth::PlantedPrompt>& prompts) {
    std::vector<corpus::GenerationSet> out;
    for (const auto& p : prompts) out.push_back(p.set);
    return out;
}

void write_shannon(const fs::path& path, std::uint64_t seed, std::size_t count) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> token(0, 49);
    std::normal_distribution<double> score(0.0, 2.0);
    std::ofstream out(path);
    for (std::size_t i = 0; i < count; ++i) {
        nlohmann::ordered_json rec;
        nlohmann::json ranked = nlohmann::json::array();
        for (std::int64_t t = 0; t < 50; ++t) ranked.push_back({t, score(rng)});
        std::vector<std::int64_t> gold(3), predicted(3);
        for (auto& g : gold) g = token(rng);
        for (std::size_t k = 0; k < 3; ++k) predicted[k] = std::bernoulli_distribution(0.6)(rng) ? gold[k] : token(rng);
        rec["ranked_scores"] = ranked;
        rec["gold_tokens"] = gold;
        rec["predicted_tokens"] = predicted;
        out << rec.dump() << "\n";
    }
}

void write_mdp(const fs::path& path, const planner::Mdp& m) {
    write_json(path, {{"S", m.states}, {"A", m.actions}, {"gamma", m.gamma}, {"R", m.reward}, {"P", m.transition}});
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixtures <output-dir>\n";
        return 2;
    }
    try {
        const fs::path dir = argv[1];
        fs::create_directories(dir);

        const auto rlhf = synth::rlhf_like(1, 80, 100);
        const auto base = synth::base_like(2, 80, 100);
        corpus::write_generation_sets(dir / "rlhf_like.jsonl", sets_of(rlhf));
        corpus::write_generation_sets(dir / "base_like.jsonl", base);
        corpus::write_generation_sets(dir / "rlhf_small.jsonl", sets_of(synth::rlhf_like(1, 3, 100)));
        corpus::write_generation_sets(dir / "base_small.jsonl", synth::base_like(2, 3, 100));
        corpus::write_generation_sets(dir / "rlhf_n20.jsonl", sets_of(synth::rlhf_like(8, 5, 20)));
        corpus::write_generation_sets(dir / "base_n20.jsonl", synth::base_like(9, 5, 20));
        std::ofstream(dir / "empty.jsonl").flush();

        nlohmann::ordered_json planted = nlohmann::ordered_json::array();
        for (const auto& p : rlhf)
            for (const auto& span : p.planted)
                planted.push_back({{"prompt_id", p.set.prompt_id}, {"text", span.text}, {"support", span.support}});
        write_json(dir / "rlhf_like.planted.json", planted);

        corpus::write_trace(dir / "rlhf_self.trace.jsonl", synth::concentrated_trace(3, 200, 64, 0.9));
        corpus::write_trace(dir / "base_self.trace.jsonl", synth::concentrated_trace(4, 200, 64, 0.4));
        corpus::write_trace(dir / "rlhf_gold.trace.jsonl",
                            synth::constant_prob_trace(50, 64, 0.25, corpus::TraceSource::gold));
        corpus::write_trace(dir / "base_gold.trace.jsonl",
                            synth::constant_prob_trace(50, 64, 0.5, corpus::TraceSource::gold));
        corpus::write_trace(dir / "arithmetic.trace.jsonl", synth::arithmetic_count_trace(100, 128));
        corpus::write_trace(dir / "uniform.trace.jsonl", synth::uniform_trace(3, 32000));

        corpus::write_hidden_states(dir / "hidden_low.meta.json", dir / "hidden_low.f32",
                                    synth::hidden_fixture(5, 1000, 16, 32, true));
        corpus::write_hidden_states(dir / "hidden_high.meta.json", dir / "hidden_high.f32",
                                    synth::hidden_fixture(6, 1000, 16, 32, false));

        write_shannon(dir / "shannon.jsonl", 7, 40);
        write_mdp(dir / "mdp.json", planner::random_mdp(11, 8, 3));

        write_json(dir / "expected.json", {{"rlhf_gold_ppl", 4.0},
                                           {"base_gold_ppl", 2.0},
                                           {"gold_delta_absolute", 2.0},
                                           {"gold_delta_relative", 1.0},
                                           {"arithmetic_mean_nonnegligible", 50.5},
                                           {"uniform_ppl", 32000.0}});

        write_json(dir / "manifest.json",
                   {{"models",
                     {{{"label", "rlhf_like"},
                       {"generations", "rlhf_small.jsonl"},
                       {"traces", {"rlhf_self.trace.jsonl", "rlhf_gold.trace.jsonl"}},
                       {"hidden_states", {{"meta", "hidden_low.meta.json"}, {"matrix", "hidden_low.f32"}}}},
                      {{"label", "base_like"},
                       {"generations", "base_small.jsonl"},
                       {"traces", {"base_self.trace.jsonl", "base_gold.trace.jsonl"}},
                       {"hidden_states", {{"meta", "hidden_high.meta.json"}, {"matrix", "hidden_high.f32"}}}}}},
                    {"baseline", "base_like"},
                    {"shannon", "shannon.jsonl"},
                    {"bellman", true}});
    } catch (const std::exception& e) {
        std::cerr << "make_fixtures: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
