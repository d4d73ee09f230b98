#include "blueprint/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace blueprint::planner {

namespace {

constexpr std::size_t kMaxSweeps = 10'000'000;

double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

double q_value(const Mdp& m, std::size_t a, std::size_t s, const std::vector<double>& v) {
    double acc = 0.0;
    const auto& row = m.transition[a][s];
    for (std::size_t t = 0; t < m.states; ++t) acc += row[t] * v[t];
    return m.reward[a][s] + m.gamma * acc;
}

template <typename Backup>
ValueFunction iterate(const Mdp& m, double tol, Backup&& backup) {
    m.validate();
    if (!(tol > 0.0)) throw Error("tolerance must be positive");
    // Half the contraction threshold leaves room for rounding accumulated over
    // long runs when gamma is close to 1.
    const double stop = 0.5 * tol * (1.0 - m.gamma) / m.gamma;
    ValueFunction vf;
    vf.values.assign(m.states, 0.0);
    while (true) {
        auto next = backup(vf.values);
        const double delta = sup_distance(next, vf.values);
        vf.values = std::move(next);
        vf.deltas.push_back(delta);
        ++vf.iterations;
        if (delta <= stop) break;
        if (vf.iterations >= kMaxSweeps)
            throw Error(fmt::format("value iteration did not reach tolerance {} in {} sweeps", tol, kMaxSweeps));
    }
    vf.residual = sup_distance(backup(vf.values), vf.values);
    return vf;
}

}  // namespace

void Mdp::validate() const {
    if (states == 0 || actions == 0) throw Error("MDP needs at least one state and one action");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie strictly inside (0, 1)");
    if (reward.size() != actions || transition.size() != actions) throw Error("MDP tables disagree with action count");
    for (std::size_t a = 0; a < actions; ++a) {
        if (reward[a].size() != states || transition[a].size() != states)
            throw Error("MDP tables disagree with state count");
        for (std::size_t s = 0; s < states; ++s) {
            if (!std::isfinite(reward[a][s])) throw Error(fmt::format("non-finite reward R({}, {})", s, a));
            const auto& row = transition[a][s];
            if (row.size() != states) throw Error("transition row has the wrong length");
            double sum = 0.0;
            for (double p : row) {
                if (!(p >= 0.0)) throw Error(fmt::format("negative transition probability from state {}", s));
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw Error(fmt::format("P(.|{}, {}) sums to {:.12g}, not 1", s, a, sum));
        }
    }
}

std::vector<double> bellman_backup(const Mdp& m, const std::vector<double>& v) {
    std::vector<double> out(m.states, -std::numeric_limits<double>::infinity());
    for (std::size_t s = 0; s < m.states; ++s)
        for (std::size_t a = 0; a < m.actions; ++a) out[s] = std::max(out[s], q_value(m, a, s, v));
    return out;
}

ValueFunction value_iteration(const Mdp& m, double tol) {
    return iterate(m, tol, [&](const std::vector<double>& v) { return bellman_backup(m, v); });
}

ValueFunction evaluate_policy(const Mdp& m, const std::vector<std::size_t>& policy, double tol) {
    if (policy.size() != m.states) throw Error("policy must assign an action to every state");
    for (auto a : policy)
        if (a >= m.actions) throw Error("policy action out of range");
    return iterate(m, tol, [&](const std::vector<double>& v) {
        std::vector<double> out(m.states);
        for (std::size_t s = 0; s < m.states; ++s) out[s] = q_value(m, policy[s], s, v);
        return out;
    });
}

std::vector<std::size_t> reachable_set(const Mdp& m, std::size_t s) {
    if (s >= m.states) throw Error("state out of range");
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < m.states; ++t)
        for (std::size_t a = 0; a < m.actions; ++a)
            if (m.transition[a][s][t] > 0.0) {
                out.push_back(t);
                break;
            }
    return out;
}

Mdp deterministic_counterpart(const Mdp& m) {
    m.validate();
    std::vector<std::vector<std::size_t>> successors(m.states);
    std::size_t width = 1;
    for (std::size_t s = 0; s < m.states; ++s) {
        successors[s] = reachable_set(m, s);
        width = std::max(width, successors[s].size());
    }

    Mdp d;
    d.states = m.states;
    d.actions = width;
    d.gamma = m.gamma;
    d.reward.assign(width, std::vector<double>(m.states, 0.0));
    d.transition.assign(width, std::vector<std::vector<double>>(m.states, std::vector<double>(m.states, 0.0)));
    for (std::size_t s = 0; s < m.states; ++s) {
        const auto& succ = successors[s];
        for (std::size_t a = 0; a < width; ++a) {
            const std::size_t target = succ[std::min(a, succ.size() - 1)];
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t orig = 0; orig < m.actions; ++orig)
                if (m.transition[orig][s][target] > 0.0) best = std::max(best, m.reward[orig][s]);
            d.reward[a][s] = best;
            d.transition[a][s][target] = 1.0;
        }
    }
    return d;
}

PenaltyReport verify_stochasticity_penalty(const Mdp& m, double tol) {
    const auto stoch = value_iteration(m, tol);
    const auto det = value_iteration(deterministic_counterpart(m), tol);
    PenaltyReport r;
    r.worst_gap = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < m.states; ++s) r.worst_gap = std::min(r.worst_gap, det.values[s] - stoch.values[s]);
    r.holds = r.worst_gap >= -10.0 * tol;
    r.iterations = stoch.iterations + det.iterations;
    r.stochastic_values = stoch.values;
    r.deterministic_values = det.values;
    return r;
}

Mdp random_mdp(std::uint64_t seed, std::size_t max_states, std::size_t max_actions) {
    if (max_states < 1 || max_actions < 1) throw Error("random MDP bounds must be positive");
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Mdp m;
    m.states = uniform_int(1, max_states);
    m.actions = uniform_int(1, max_actions);
    m.gamma = 0.5 + 0.45 * unit(rng);
    m.reward.assign(m.actions, std::vector<double>(m.states));
    m.transition.assign(m.actions, std::vector<std::vector<double>>(m.states, std::vector<double>(m.states, 0.0)));
    std::vector<std::size_t> order(m.states);
    for (std::size_t a = 0; a < m.actions; ++a)
        for (std::size_t s = 0; s < m.states; ++s) {
            m.reward[a][s] = 2.0 * unit(rng) - 1.0;
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            const std::size_t support = uniform_int(1, m.states);
            double total = 0.0;
            auto& row = m.transition[a][s];
            for (std::size_t k = 0; k < support; ++k) {
                row[order[k]] = 0.05 + unit(rng);
                total += row[order[k]];
            }
            for (double& p : row) p /= total;
        }
    m.validate();
    return m;
}

Mdp load_mdp(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("{}: cannot open file", path.string()));
    Mdp m;
    try {
        const auto j = nlohmann::json::parse(in);
        m.states = j.at("S").get<std::size_t>();
        m.actions = j.at("A").get<std::size_t>();
        m.gamma = j.at("gamma").get<double>();
        m.reward = j.at("R").get<std::vector<std::vector<double>>>();
        m.transition = j.at("P").get<std::vector<std::vector<std::vector<double>>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(fmt::format("{}: malformed MDP: {}", path.string(), e.what()));
    }
    try {
        m.validate();
    } catch (const Error& e) {
        throw Error(fmt::format("{}: {}", path.string(), e.what()));
    }
    return m;
}

}  // namespace blueprint::planner
