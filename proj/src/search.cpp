#include "bamcts/search.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "bamcts/errors.hpp"

namespace bamcts {

void SearchConfig::validate() const {
    if (simulations < 1) throw ConfigError("search needs at least one simulation");
    if (max_depth < 0) throw ConfigError("search depth must be non-negative");
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
        throw ConfigError("widening exponents must lie in (0, 1)");
    if (!(root_noise >= 0.0 && root_noise <= 1.0)) throw ConfigError("root noise mix rate must lie in [0, 1]");
    if (max_actions < 1 || max_outcomes < 1) throw ConfigError("widening caps must be at least 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
    if (!(exploration >= 0.0)) throw ConfigError("exploration constant must be non-negative");
    if (!(lambda >= 0.0)) throw ConfigError("penalty coefficient must be non-negative");
    if (!(dirichlet_concentration > 0.0)) throw ConfigError("noise concentration must be positive");
}

PenalizedStep EnsembleSearchModel::step(const Vector& state, const Belief& belief, const Vector& action,
                                        Rng& rng) const {
    return bamdp_step(ensemble_, belief, state, action, lambda_, include_reward_, rng);
}

PenalizedStep DiscreteSearchModel::step(const Vector& state, const Belief& belief, const Vector& action,
                                        Rng& rng) const {
    const int s = static_cast<int>(state[0]);
    const int a = static_cast<int>(action[0]);
    const int k = static_cast<int>(rng.categorical(belief.span()));
    std::vector<double> row(m_.num_states);
    for (int n = 0; n < m_.num_states; ++n) row[n] = m_.p(k, s, a, n);
    const int next = static_cast<int>(rng.categorical(row));
    std::vector<double> post(belief.size());
    double sum = 0.0;
    for (int j = 0; j < m_.num_models; ++j) {
        post[j] = belief[j] * m_.p(j, s, a, next);
        sum += post[j];
    }
    for (double& x : post) x /= sum;
    PenalizedStep out;
    out.reward = m_.r(k, s, a);
    out.penalized = out.reward;
    out.next_state = Vector::Constant(1, next);
    out.belief = Belief(std::move(post));
    return out;
}

void QBounds::observe(double q) {
    if (!seen) {
        min = max = q;
        seen = true;
        return;
    }
    min = std::min(min, q);
    max = std::max(max, q);
}

double QBounds::normalize(double q) const {
    if (!seen || max <= min) return 0.5;
    return (q - min) / (max - min);
}

int widening_limit(int visits, double exponent) {
    return static_cast<int>(std::floor(std::pow(static_cast<double>(visits), exponent) + 1e-9));
}

int select_uct(const DecisionNode& node, const QBounds& bounds, double exploration) {
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    const double log_n = std::log(static_cast<double>(std::max(node.visits, 1)));
    for (int i = 0; i < static_cast<int>(node.actions.size()); ++i) {
        const auto& child = node.actions[i];
        const double score = child.visits == 0
                                 ? std::numeric_limits<double>::infinity()
                                 : bounds.normalize(child.q) + exploration * std::sqrt(log_n / child.visits);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

int SearchResult::modal_action() const {
    int best = 0;
    for (int i = 1; i < static_cast<int>(visits.size()); ++i)
        if (visits[i] > visits[best]) best = i;
    return best;
}

SearchResult summarize_root(const DecisionNode& root) {
    SearchResult r;
    r.root_visits = root.visits;
    for (const auto& child : root.actions) {
        r.actions.push_back(child.action);
        r.visits.push_back(child.visits);
        r.q.push_back(child.q);
    }
    const double n = static_cast<double>(root.visits);
    for (std::size_t i = 0; i < r.actions.size(); ++i) {
        const double w = n > 0.0 ? r.visits[i] / n : 1.0 / static_cast<double>(r.actions.size());
        r.policy.push_back(w);
        r.value += w * r.q[i];
    }
    return r;
}

int least_visited_outcome(const ActionChild& edge) {
    if (edge.outcomes.empty()) throw ContractError("edge has no outcomes");
    int best = 0;
    for (int i = 1; i < static_cast<int>(edge.outcomes.size()); ++i)
        if (edge.outcomes[i].visits < edge.outcomes[best].visits) best = i;
    return best;
}

namespace {

class Searcher {
  public:
    Searcher(const SearchConfig& cfg, const SearchInputs& in, const SearchModel& model, Rng& rng)
        : cfg_(cfg), in_(in), model_(model), rng_(rng) {}

    SearchTree tree;

    double simulate(int node_id, int depth) {
        if (depth == 0) return in_.value(tree.nodes[node_id].state);
        const int a = action_pw(node_id);
        const int o = state_pw(node_id, a);
        int child;
        double penalized;
        bool recurse;
        {
            auto& node = tree.nodes[node_id];
            auto& edge = node.actions[a];
            auto& outcome = edge.outcomes[o];
            node.visits += 1;
            edge.visits += 1;
            outcome.visits += 1;
            child = outcome.child;
            penalized = outcome.penalized_reward;
            switch (cfg_.expand_rule) {
                case ExpandRule::parent_visited: recurse = node.visits > 1; break;
                case ExpandRule::edge_visited: recurse = edge.visits > 1; break;
                default: recurse = tree.nodes[child].visits > 0; break;
            }
        }
        double ret = recurse ? simulate(child, depth - 1) : in_.value(tree.nodes[child].state);
        ret = penalized + cfg_.gamma * ret;
        auto& edge = tree.nodes[node_id].actions[a];
        edge.q += (ret - edge.q) / edge.visits;
        tree.bounds.observe(edge.q);
        return ret;
    }

  private:
    Vector root_noise_action() {
        if (cfg_.dirichlet_concentration == 1.0) return in_.box.sample_uniform(rng_);
        std::gamma_distribution<double> gamma(cfg_.dirichlet_concentration, 1.0);
        Vector a(in_.box.dim());
        for (int i = 0; i < a.size(); ++i) {
            const double x = gamma(rng_.engine()), y = gamma(rng_.engine());
            const double u = (x + y) > 0.0 ? x / (x + y) : 0.5;
            a[i] = in_.box.low[i] + u * (in_.box.high[i] - in_.box.low[i]);
        }
        return a;
    }

    int action_pw(int node_id) {
        auto& node = tree.nodes[node_id];
        const int n_children = static_cast<int>(node.actions.size());
        if (widening_limit(node.visits, cfg_.alpha) >= n_children && n_children < cfg_.max_actions) {
            const bool noisy = node_id == 0 && rng_.bernoulli(cfg_.root_noise);
            Vector a = noisy ? root_noise_action() : in_.policy(node.state, rng_);
            for (int i = 0; i < n_children; ++i)
                if (node.actions[i].action.size() == a.size() && node.actions[i].action == a) return i;
            node.actions.push_back({std::move(a), 0, 0.0, {}});
            return n_children;
        }
        return select_uct(node, tree.bounds, cfg_.exploration);
    }

    int state_pw(int node_id, int a) {
        {
            const auto& edge = tree.nodes[node_id].actions[a];
            const int n_out = static_cast<int>(edge.outcomes.size());
            if (!(widening_limit(edge.visits, cfg_.beta) >= n_out && n_out < cfg_.max_outcomes))
                return least_visited_outcome(edge);
        }
        const auto& node = tree.nodes[node_id];
        PenalizedStep step = model_.step(node.state, node.belief, node.actions[a].action, rng_);
        // An exact repeat (only possible with discrete dynamics) joins its twin.
        const auto& existing = node.actions[a].outcomes;
        for (std::size_t i = 0; i < existing.size(); ++i) {
            const DecisionNode& twin = tree.nodes[existing[i].child];
            if (existing[i].reward == step.reward && twin.state == step.next_state && twin.belief == step.belief)
                return static_cast<int>(i);
        }
        DecisionNode child;
        child.state = std::move(step.next_state);
        child.belief = std::move(step.belief);
        child.depth = node.depth + 1;
        const int child_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(std::move(child));  // invalidates `node`
        auto& edge = tree.nodes[node_id].actions[a];
        edge.outcomes.push_back({step.reward, step.penalized, child_id, 0});
        return static_cast<int>(edge.outcomes.size()) - 1;
    }

    const SearchConfig& cfg_;
    const SearchInputs& in_;
    const SearchModel& model_;
    Rng& rng_;
};

}  // namespace

SearchResult search(const Vector& root_state, const Belief& root_belief, const SearchConfig& cfg,
                    const SearchInputs& inputs, const SearchModel& model, Rng& rng) {
    cfg.validate();
    if (!inputs.policy || !inputs.value) throw ConfigError("search needs a policy and a value function");
    Searcher s(cfg, inputs, model, rng);
    s.tree.nodes.push_back({root_state, root_belief, 0, 0, {}});
    for (int e = 0; e < cfg.simulations; ++e) s.simulate(0, cfg.max_depth);
    SearchResult result = summarize_root(s.tree.nodes.front());
    if (cfg.retain_tree) result.tree = std::make_shared<const SearchTree>(std::move(s.tree));
    return result;
}

SearchResult search(const Vector& root_state, const Belief& root_belief, const SearchConfig& cfg,
                    const SearchInputs& inputs, const Ensemble& ensemble, Rng& rng) {
    EnsembleSearchModel model(ensemble, cfg.lambda, cfg.penalty_includes_reward);
    return search(root_state, root_belief, cfg, inputs, model, rng);
}

std::string SearchTree::dump() const {
    std::ostringstream out;
    out.precision(10);
    out << "# q_min " << bounds.min << " q_max " << bounds.max << '\n';
    for (std::size_t id = 0; id < nodes.size(); ++id) {
        const auto& n = nodes[id];
        out << "node " << id << " depth " << n.depth << " N " << n.visits << " C " << n.actions.size() << '\n';
        for (std::size_t j = 0; j < n.actions.size(); ++j) {
            const auto& e = n.actions[j];
            out << "  edge " << j << " N " << e.visits << " Q " << e.q << " C " << e.outcomes.size();
            for (const auto& o : e.outcomes) out << " ->" << o.child << ':' << o.visits;
            out << '\n';
        }
    }
    return out.str();
}

std::vector<std::string> audit_tree(const SearchTree& tree, const SearchConfig& cfg) {
    std::vector<std::string> bad;
    auto report = [&](std::size_t id, const std::string& what) {
        bad.push_back("node " + std::to_string(id) + ": " + what);
    };
    if (!tree.nodes.empty() && cfg.max_depth > 0 && tree.nodes[0].visits != cfg.simulations)
        report(0, "root visits " + std::to_string(tree.nodes[0].visits) + " != simulations");
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const auto& n = tree.nodes[id];
        const int action_cap = std::min(widening_limit(n.visits, cfg.alpha) + 1, cfg.max_actions);
        if (static_cast<int>(n.actions.size()) > action_cap)
            report(id, "|C| = " + std::to_string(n.actions.size()) + " exceeds " + std::to_string(action_cap));
        int edge_sum = 0;
        for (std::size_t j = 0; j < n.actions.size(); ++j) {
            const auto& e = n.actions[j];
            edge_sum += e.visits;
            const int outcome_cap = std::min(widening_limit(e.visits, cfg.beta) + 1, cfg.max_outcomes);
            if (static_cast<int>(e.outcomes.size()) > outcome_cap)
                report(id, "edge " + std::to_string(j) + " has " + std::to_string(e.outcomes.size()) +
                               " outcomes, cap " + std::to_string(outcome_cap));
            int outcome_sum = 0;
            for (const auto& o : e.outcomes) {
                outcome_sum += o.visits;
                if (o.child < 0 || o.child >= static_cast<int>(tree.nodes.size()))
                    report(id, "dangling outcome child");
                else if (tree.nodes[o.child].visits > o.visits)
                    report(id, "child " + std::to_string(o.child) + " visited more often than its outcome");
            }
            if (outcome_sum != e.visits) report(id, "edge " + std::to_string(j) + " visits != sum of outcome visits");
        }
        if (!n.actions.empty() && edge_sum != n.visits)
            report(id, "N = " + std::to_string(n.visits) + " but edge visits sum to " + std::to_string(edge_sum));
    }
    return bad;
}

}  // namespace bamcts
