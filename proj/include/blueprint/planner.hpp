#pragma once

// Finite-MDP value iteration, and a check that granting full control over the
// successor state (same connectivity, no stochasticity) never lowers the
// optimal value of any state.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "blueprint/error.hpp"

namespace blueprint::planner {

struct Mdp {
    std::size_t states = 0;
    std::size_t actions = 0;
    double gamma = 0.9;
    /// reward[a][s]
    std::vector<std::vector<double>> reward;
    /// transition[a][s][s'] = P(s' | s, a)
    std::vector<std::vector<std::vector<double>>> transition;

    void validate() const;
};

struct ValueFunction {
    std::vector<double> values;
    std::size_t iterations = 0;
    /// sup-norm Bellman residual of `values`
    double residual = 0.0;
    /// sup-norm change of each sweep
    std::vector<double> deltas;
};

/// One Bellman optimality backup of `v`.
std::vector<double> bellman_backup(const Mdp& m, const std::vector<double>& v);

/// Iterates from V = 0 until the sweep change drops to tol (1 - gamma) / (2 gamma),
/// which bounds the distance to the optimal values by tol/2 before rounding.
ValueFunction value_iteration(const Mdp& m, double tol);

/// Iterative evaluation of a stationary deterministic policy with the same
/// stopping rule as value_iteration.
ValueFunction evaluate_policy(const Mdp& m, const std::vector<std::size_t>& policy, double tol);

/// States with non-zero probability under some action from `s`, ascending.
std::vector<std::size_t> reachable_set(const Mdp& m, std::size_t s);

/// Same states and connectivity, but from every s one action per reachable
/// s' that lands there with probability 1. Its reward is the best reward of
/// an original action that can reach s'. States with fewer successors than
/// the widest state repeat their last action.
Mdp deterministic_counterpart(const Mdp& m);

struct PenaltyReport {
    bool holds = true;
    double worst_gap = 0.0;  // min over states of V_det - V_stoch
    std::size_t iterations = 0;
    std::vector<double> stochastic_values;
    std::vector<double> deterministic_values;
};

PenaltyReport verify_stochasticity_penalty(const Mdp& m, double tol);

/// Random MDP with S in [1, max_states], A in [1, max_actions], sparse
/// transitions and rewards in [-1, 1].
Mdp random_mdp(std::uint64_t seed, std::size_t max_states = 10, std::size_t max_actions = 4);

Mdp load_mdp(const std::filesystem::path& path);

}  // namespace blueprint::planner
