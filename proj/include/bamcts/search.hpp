#pragma once

// Continuous Bayes-adaptive MCTS: double progressive widening over actions
// and sampled outcomes, UCT on tree-normalized values, penalized rewards,
// and root exploration noise. Returns visit-count policies and values.

#include <memory>
#include <string>
#include <vector>

#include "bamcts/discrete_bamdp.hpp"
#include "bamcts/ensemble.hpp"
#include "bamcts/space.hpp"

namespace bamcts {

// When a simulation continues below a freshly sampled outcome instead of
// bootstrapping with V at the child.
enum class ExpandRule {
    parent_visited,  // N((s,h)) > 1
    edge_visited,    // N((s,h),a) > 1
    child_visited,   // N(child) > 0
};

struct SearchConfig {
    int simulations = 50;
    int max_depth = 5;
    double gamma = 0.99;
    double alpha = 0.5;
    double beta = 0.5;
    double exploration = 1.0;
    double root_noise = 0.1;  // eta
    // Per-dimension Beta(c, c) over the action box; 1 is uniform.
    double dirichlet_concentration = 1.0;
    int max_actions = 20;   // n_a
    int max_outcomes = 1;   // n_s
    double lambda = 1.0;
    bool penalty_includes_reward = true;
    ExpandRule expand_rule = ExpandRule::parent_visited;
    bool retain_tree = false;

    void validate() const;
};

// The dynamics a search plans in: one information-state transition plus its
// penalized reward.
class SearchModel {
  public:
    virtual ~SearchModel() = default;
    virtual PenalizedStep step(const Vector& state, const Belief& belief, const Vector& action, Rng& rng) const = 0;
};

class EnsembleSearchModel final : public SearchModel {
  public:
    EnsembleSearchModel(const Ensemble& ensemble, double lambda, bool include_reward)
        : ensemble_(ensemble), lambda_(lambda), include_reward_(include_reward) {}
    PenalizedStep step(const Vector& state, const Belief& belief, const Vector& action, Rng& rng) const override;

  private:
    const Ensemble& ensemble_;
    double lambda_;
    bool include_reward_;
};

// States and actions are 1-vectors holding an index. Rewards are those of the
// sampled model; beliefs update from next states. No penalty.
class DiscreteSearchModel final : public SearchModel {
  public:
    explicit DiscreteSearchModel(const DiscreteBamdp& m) : m_(m) {}
    PenalizedStep step(const Vector& state, const Belief& belief, const Vector& action, Rng& rng) const override;

  private:
    const DiscreteBamdp& m_;
};

struct Outcome {
    double reward = 0.0;
    double penalized_reward = 0.0;  // cached at creation with the parent belief
    int child = -1;
    int visits = 0;
};

struct ActionChild {
    Vector action;
    int visits = 0;
    double q = 0.0;
    std::vector<Outcome> outcomes;
};

struct DecisionNode {
    Vector state;
    Belief belief;
    int depth = 0;
    int visits = 0;
    std::vector<ActionChild> actions;
};

// Running min/max over every Q value the tree has held.
struct QBounds {
    double min = 0.0;
    double max = 0.0;
    bool seen = false;

    void observe(double q);
    // (q - min) / (max - min), or 0.5 while the range is empty.
    double normalize(double q) const;
};

struct SearchTree {
    std::vector<DecisionNode> nodes;  // nodes[0] is the root
    QBounds bounds;

    // One line per node and per action edge.
    std::string dump() const;
};

// UCT on normalized values; unvisited children first, lowest index on ties.
int select_uct(const DecisionNode& node, const QBounds& bounds, double exploration);

// Least-visited outcome of an edge, lowest index on ties.
int least_visited_outcome(const ActionChild& edge);

// floor(n^exponent) with a guard against pow rounding just below an integer.
int widening_limit(int visits, double exponent);

struct SearchResult {
    std::vector<Vector> actions;  // C(root)
    std::vector<double> policy;   // pi_ret = N(root, a) / N(root)
    std::vector<int> visits;
    std::vector<double> q;
    double value = 0.0;  // v_ret
    int root_visits = 0;
    std::shared_ptr<const SearchTree> tree;  // set when cfg.retain_tree

    int modal_action() const;  // most visited, lowest index on ties
};

// Assembles pi_ret and v_ret from a root's statistics.
SearchResult summarize_root(const DecisionNode& root);

struct SearchInputs {
    ActionSampler policy;
    ValueFn value;
    ActionBox box;  // root-noise support
};

SearchResult search(const Vector& root_state, const Belief& root_belief, const SearchConfig& cfg,
                    const SearchInputs& inputs, const SearchModel& model, Rng& rng);

SearchResult search(const Vector& root_state, const Belief& root_belief, const SearchConfig& cfg,
                    const SearchInputs& inputs, const Ensemble& ensemble, Rng& rng);

// Widening bounds and count conservation; returns a description per violation.
std::vector<std::string> audit_tree(const SearchTree& tree, const SearchConfig& cfg);

}  // namespace bamcts
