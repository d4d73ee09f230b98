#include "blueprint/shannon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace blueprint::shannon {

namespace {

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

}  // namespace

void normalize(ShannonInstance& inst) {
    if (inst.gold_tokens.empty()) throw Error("shannon instance has no gold tokens");
    if (inst.ranked_scores.empty()) throw Error("shannon instance has no ranked scores");
    std::set<std::int64_t> seen;
    for (const auto& [tok, score] : inst.ranked_scores) {
        if (!std::isfinite(score)) throw Error(fmt::format("non-finite score for token {}", tok));
        if (!seen.insert(tok).second) throw Error(fmt::format("token {} ranked twice", tok));
    }
    std::sort(inst.ranked_scores.begin(), inst.ranked_scores.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
}

std::size_t incorrect_guesses(const ShannonInstance& inst, TieRule rule) {
    if (inst.gold_tokens.empty()) throw Error("shannon instance has no gold tokens");
    const auto gold = inst.gold_tokens.front();
    auto it = std::find_if(inst.ranked_scores.begin(), inst.ranked_scores.end(),
                           [gold](const auto& e) { return e.first == gold; });
    if (it == inst.ranked_scores.end()) throw Error(fmt::format("gold token {} absent from ranked_scores", gold));
    const double gold_score = it->second;
    std::size_t count = 0;
    for (const auto& [tok, score] : inst.ranked_scores) {
        if (tok == gold) continue;
        if (score > gold_score || (rule == TieRule::inclusive && score == gold_score)) ++count;
    }
    return count;
}

ShannonReport shannon_report(const std::vector<ShannonInstance>& instances, TieRule rule, Granularity granularity) {
    if (instances.empty()) throw Error("no shannon instances");
    ShannonReport r;
    r.instances = instances.size();
    double em = 0.0, f1 = 0.0, guesses = 0.0;
    for (const auto& inst : instances) {
        if (granularity == Granularity::token) {
            em += inst.predicted_tokens == inst.gold_tokens ? 1.0 : 0.0;
            f1 += multiset_f1(inst.predicted_tokens, inst.gold_tokens);
        } else {
            if (!inst.gold_text || !inst.predicted_text)
                throw Error("string-level scoring needs gold_text and predicted_text");
            const auto pw = words(*inst.predicted_text), gw = words(*inst.gold_text);
            em += pw == gw ? 1.0 : 0.0;
            f1 += multiset_f1(pw, gw);
        }
        guesses += static_cast<double>(incorrect_guesses(inst, rule));
    }
    const auto n = static_cast<double>(instances.size());
    r.em = em / n;
    r.f1 = f1 / n;
    r.avg_guesses = guesses / n;
    return r;
}

std::vector<ShannonInstance> load_instances(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("{}: cannot open file", path.string()));
    std::vector<ShannonInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            ShannonInstance inst;
            for (const auto& pair : rec.at("ranked_scores")) {
                if (!pair.is_array() || pair.size() != 2) throw Error("ranked_scores entries must be [token_id, score]");
                inst.ranked_scores.emplace_back(pair[0].get<std::int64_t>(), pair[1].get<double>());
            }
            inst.gold_tokens = rec.at("gold_tokens").get<std::vector<std::int64_t>>();
            inst.predicted_tokens = rec.at("predicted_tokens").get<std::vector<std::int64_t>>();
            if (auto it = rec.find("gold_text"); it != rec.end() && !it->is_null()) inst.gold_text = it->get<std::string>();
            if (auto it = rec.find("predicted_text"); it != rec.end() && !it->is_null())
                inst.predicted_text = it->get<std::string>();
            normalize(inst);
            out.push_back(std::move(inst));
        } catch (const nlohmann::json::exception& e) {
            throw Error(fmt::format("{}:{}: malformed record: {}", path.string(), lineno, e.what()));
        } catch (const Error& e) {
            throw Error(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    return out;
}

}  // namespace blueprint::shannon
