#pragma once

// Exact machinery for small discrete BAMDPs: exhaustive Bayes-optimal
// expectimax over histories, root-sampling BAMCP, and the statistical check
// that root sampling reproduces the exact posterior at every history.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "bamcts/rng.hpp"

namespace bamcts {

// K candidate MDPs over shared finite state/action sets. Rewards are
// per-model expectations R_k[s][a] in [0, 1]; beliefs are updated from
// observed next states.
struct DiscreteBamdp {
    int num_states = 0;
    int num_actions = 0;
    int num_models = 0;
    std::vector<double> transitions;  // [(k * S + s) * A + a] * S + s'
    std::vector<double> rewards;      // (k * S + s) * A + a
    std::vector<double> prior;
    double gamma = 1.0;
    int horizon = 1;
    int start_state = 0;

    DiscreteBamdp() = default;
    DiscreteBamdp(int states, int actions, int models);

    double p(int k, int s, int a, int next) const {
        return transitions[((static_cast<std::size_t>(k) * num_states + s) * num_actions + a) * num_states + next];
    }
    double& p(int k, int s, int a, int next) {
        return transitions[((static_cast<std::size_t>(k) * num_states + s) * num_actions + a) * num_states + next];
    }
    double r(int k, int s, int a) const {
        return rewards[(static_cast<std::size_t>(k) * num_states + s) * num_actions + a];
    }
    double& r(int k, int s, int a) {
        return rewards[(static_cast<std::size_t>(k) * num_states + s) * num_actions + a];
    }

    // Throws ContractError on non-distributions, ConfigError on bad sizes/discount.
    void validate() const;

    // Line-oriented text format; see data/*.bamdp.
    static DiscreteBamdp parse(std::istream& in);
    static DiscreteBamdp load_file(const std::string& path);
    std::string to_text() const;
};

// Two-candidate bandit: arm A (action 0) pays 1 under model 0 and 0 under
// model 1, arm B (action 1) always pays 0.6. Pulling A reveals the model
// through the next state. Uniform prior, gamma 1, horizon 2.
DiscreteBamdp make_bandit_bamdp();

// Two states, two actions, two models with informative but overlapping
// transitions; every depth-2 history has probability >= 0.09.
DiscreteBamdp make_two_model_bamdp();

// A history alternates states and actions: s0 a0 s1 a1 s2 ...
using History = std::vector<int>;

std::vector<double> exact_posterior(const DiscreteBamdp& m, const std::vector<double>& prior, const History& h);

struct HistoryNode {
    History history;
    std::vector<double> posterior;
    int depth = 0;
    double value = 0.0;                // V* = max_a Q*
    std::vector<double> q;             // empty at the horizon
    std::vector<int> optimal_actions;  // ties within 1e-12
    std::vector<int> children;         // [a * S + s'] -> node index, -1 if unreachable
};

struct OracleTree {
    std::vector<HistoryNode> nodes;  // nodes[0] is the root
    int num_states = 0;

    const HistoryNode& root() const { return nodes.front(); }
    int child(int node, int action, int next_state) const {
        const auto& c = nodes[node].children;
        return c.empty() ? -1 : c[action * num_states + next_state];
    }
};

// Exhaustive expectimax from the start state with the model's prior.
OracleTree bayes_optimal_tree(const DiscreteBamdp& m, int horizon, std::size_t node_budget = 10'000'000);
OracleTree bayes_optimal_tree(const DiscreteBamdp& m, int horizon, int root_state, const std::vector<double>& belief,
                              std::size_t node_budget = 10'000'000);

using DiscreteRollout = std::function<int(int state, Rng& rng)>;

struct BamcpResult {
    int action = 0;
    std::vector<double> q;
    std::vector<int> visits;
};

// Root-sampling BAMCP: one model per simulation, UCT in the tree, a single
// rollout from each newly visited node. An empty rollout policy means uniform.
BamcpResult bamcp_search(const DiscreteBamdp& m, int root_state, const std::vector<double>& belief, int simulations,
                         int max_depth, double exploration, const DiscreteRollout& rollout, Rng& rng);

struct RootSamplingHistogram {
    std::map<History, std::vector<double>> counts;  // history -> per-model tallies

    std::vector<double> frequencies(const History& h) const;
    double visits(const History& h) const;
};

// Samples a model from the prior at the root, follows the forced actions
// under it, and tallies which model reached each realized history prefix
// (including the root).
RootSamplingHistogram root_sampling_histogram(const DiscreteBamdp& m, const std::vector<int>& forced_actions,
                                              std::size_t samples, Rng& rng);

double total_variation(const std::vector<double>& p, const std::vector<double>& q);

struct RootSamplingCheck {
    struct Row {
        History history;
        double visits = 0.0;
        double tv = 0.0;
        bool powered = false;
    };
    std::vector<Row> rows;
    double max_tv = 0.0;     // over powered rows
    bool underpowered = false;  // at least one row lacked samples for the tolerance
    bool passed = false;        // every powered row within tolerance
};

// Compares root-sampling frequencies against exact posteriors at every
// history of depth <= max_depth. A history is powered when its visit count
// makes a tolerance-sized deviation at least a 3-sigma event.
RootSamplingCheck check_root_sampling(const DiscreteBamdp& m, const std::vector<int>& forced_actions,
                                      std::size_t samples, std::uint64_t seed, double tolerance = 0.02,
                                      int max_depth = 2);

}  // namespace bamcts
