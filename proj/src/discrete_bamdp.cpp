#include "bamcts/discrete_bamdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "bamcts/errors.hpp"

namespace bamcts {

DiscreteBamdp::DiscreteBamdp(int states, int actions, int models)
    : num_states(states), num_actions(actions), num_models(models) {
    if (states <= 0 || actions <= 0 || models <= 0) throw ConfigError("BAMDP sizes must be positive");
    transitions.assign(static_cast<std::size_t>(models) * states * actions * states, 0.0);
    rewards.assign(static_cast<std::size_t>(models) * states * actions, 0.0);
    prior.assign(models, 1.0 / models);
}

void DiscreteBamdp::validate() const {
    if (num_states <= 0 || num_actions <= 0 || num_models <= 0) throw ConfigError("BAMDP sizes must be positive");
    if (transitions.size() != static_cast<std::size_t>(num_models) * num_states * num_actions * num_states ||
        rewards.size() != static_cast<std::size_t>(num_models) * num_states * num_actions ||
        prior.size() != static_cast<std::size_t>(num_models))
        throw ConfigError("BAMDP table sizes are inconsistent");
    // gamma = 1 is allowed because every problem here has a finite horizon
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
    if (horizon < 0) throw ConfigError("horizon must be non-negative");
    if (start_state < 0 || start_state >= num_states) throw ConfigError("start state out of range");
    double prior_sum = 0.0;
    for (double x : prior) {
        if (!(x >= 0.0)) throw ContractError("prior has a negative entry");
        prior_sum += x;
    }
    if (std::abs(prior_sum - 1.0) > 1e-12) throw ContractError("prior does not sum to 1");
    for (int k = 0; k < num_models; ++k)
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) {
                double sum = 0.0;
                for (int n = 0; n < num_states; ++n) {
                    if (!(p(k, s, a, n) >= 0.0)) throw ContractError("negative transition probability");
                    sum += p(k, s, a, n);
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw ContractError("transition row (model " + std::to_string(k) + ", state " + std::to_string(s) +
                                        ", action " + std::to_string(a) + ") does not sum to 1");
                if (!std::isfinite(r(k, s, a))) throw ContractError("non-finite reward");
            }
}

namespace {

// Expands "*" into the full index range.
std::vector<int> index_range(const std::string& tok, int n, const std::string& what) {
    if (tok == "*") {
        std::vector<int> all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    int v = 0;
    try {
        std::size_t used = 0;
        v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
        throw DataError("bad " + what + " index '" + tok + "'");
    }
    if (v < 0 || v >= n) throw DataError(what + " index " + tok + " out of range");
    return {v};
}

}  // namespace

DiscreteBamdp DiscreteBamdp::parse(std::istream& in) {
    int states = 0, actions = 0, models = 0;
    double gamma = 1.0;
    int horizon = -1, start = 0;
    std::vector<double> prior;
    std::vector<std::string> table_lines;
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& msg) { throw DataError("line " + std::to_string(line_no) + ": " + msg); };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "states") {
            if (!(ls >> states)) fail("expected a state count");
        } else if (key == "actions") {
            if (!(ls >> actions)) fail("expected an action count");
        } else if (key == "models") {
            if (!(ls >> models)) fail("expected a model count");
        } else if (key == "gamma") {
            if (!(ls >> gamma)) fail("expected a discount");
        } else if (key == "horizon") {
            if (!(ls >> horizon)) fail("expected a horizon");
        } else if (key == "start") {
            if (!(ls >> start)) fail("expected a start state");
        } else if (key == "prior") {
            double x;
            while (ls >> x) prior.push_back(x);
        } else if (key == "transition" || key == "reward") {
            table_lines.push_back(std::to_string(line_no) + " " + line);
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (states <= 0 || actions <= 0 || models <= 0) throw DataError("states, actions and models must be declared");
    if (horizon < 0) throw DataError("horizon must be declared");
    DiscreteBamdp m(states, actions, models);
    m.gamma = gamma;
    m.horizon = horizon;
    m.start_state = start;
    if (!prior.empty()) {
        if (static_cast<int>(prior.size()) != models) throw DataError("prior length does not match model count");
        m.prior = prior;
    }
    std::vector<char> seen(static_cast<std::size_t>(models) * states * actions, 0);
    for (const auto& tl : table_lines) {
        std::istringstream ls(tl);
        std::string key, tk, ts, ta;
        ls >> line_no >> key >> tk >> ts >> ta;
        const auto ks = index_range(tk, models, "model");
        const auto ss = index_range(ts, states, "state");
        const auto as = index_range(ta, actions, "action");
        std::vector<double> values;
        double x;
        while (ls >> x) values.push_back(x);
        const std::size_t expected = key == "transition" ? static_cast<std::size_t>(states) : 1;
        if (values.size() != expected)
            fail(key + " expects " + std::to_string(expected) + " value(s), got " + std::to_string(values.size()));
        for (int k : ks)
            for (int s : ss)
                for (int a : as) {
                    if (key == "reward") {
                        m.r(k, s, a) = values[0];
                    } else {
                        for (int n = 0; n < states; ++n) m.p(k, s, a, n) = values[n];
                        seen[(static_cast<std::size_t>(k) * states + s) * actions + a] = 1;
                    }
                }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw DataError("every (model, state, action) needs a transition row");
    m.validate();
    return m;
}

DiscreteBamdp DiscreteBamdp::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return parse(in);
}

std::string DiscreteBamdp::to_text() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "states " << num_states << "\nactions " << num_actions << "\nmodels " << num_models << "\ngamma " << gamma
        << "\nhorizon " << horizon << "\nstart " << start_state << "\nprior";
    for (double x : prior) out << ' ' << x;
    out << '\n';
    for (int k = 0; k < num_models; ++k)
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) {
                out << "transition " << k << ' ' << s << ' ' << a;
                for (int n = 0; n < num_states; ++n) out << ' ' << p(k, s, a, n);
                out << "\nreward " << k << ' ' << s << ' ' << a << ' ' << r(k, s, a) << '\n';
            }
    return out.str();
}

DiscreteBamdp make_bandit_bamdp() {
    // states: 0 start, 1 "A paid", 2 "A did not pay"
    DiscreteBamdp m(3, 2, 2);
    for (int s = 0; s < 3; ++s) {
        m.p(0, s, 0, 1) = 1.0;
        m.p(1, s, 0, 2) = 1.0;
        m.p(0, s, 1, 0) = 1.0;
        m.p(1, s, 1, 0) = 1.0;
        m.r(0, s, 0) = 1.0;
        m.r(1, s, 0) = 0.0;
        m.r(0, s, 1) = 0.6;
        m.r(1, s, 1) = 0.6;
    }
    m.gamma = 1.0;
    m.horizon = 2;
    m.validate();
    return m;
}

DiscreteBamdp make_two_model_bamdp() {
    DiscreteBamdp m(2, 2, 2);
    auto row = [&](int k, int s, int a, double p1, double reward) {
        m.p(k, s, a, 0) = 1.0 - p1;
        m.p(k, s, a, 1) = p1;
        m.r(k, s, a) = reward;
    };
    row(0, 0, 0, 0.2, 0.1);
    row(0, 0, 1, 0.6, 0.3);
    row(0, 1, 0, 0.3, 1.0);
    row(0, 1, 1, 0.5, 0.2);
    row(1, 0, 0, 0.8, 0.1);
    row(1, 0, 1, 0.4, 0.5);
    row(1, 1, 0, 0.7, 0.0);
    row(1, 1, 1, 0.1, 0.8);
    m.gamma = 0.95;
    m.horizon = 3;
    m.validate();
    return m;
}

std::vector<double> exact_posterior(const DiscreteBamdp& m, const std::vector<double>& prior, const History& h) {
    if (h.empty() || h.size() % 2 == 0) throw ContractError("a history must start and end with a state");
    std::vector<double> post = prior;
    for (std::size_t t = 0; t + 2 < h.size(); t += 2) {
        double sum = 0.0;
        for (int k = 0; k < m.num_models; ++k) {
            post[k] *= m.p(k, h[t], h[t + 1], h[t + 2]);
            sum += post[k];
        }
        if (sum <= 0.0) throw ContractError("history has zero probability under every model");
        for (double& x : post) x /= sum;
    }
    return post;
}

namespace {

class OracleBuilder {
  public:
    OracleBuilder(const DiscreteBamdp& m, int horizon, std::size_t budget) : m_(m), horizon_(horizon), budget_(budget) {}

    int build(History h, std::vector<double> belief, int depth) {
        if (tree.nodes.size() >= budget_) throw CapacityError("oracle node budget exceeded");
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        {
            auto& node = tree.nodes[id];
            node.history = h;
            node.posterior = belief;
            node.depth = depth;
        }
        if (depth >= horizon_) return id;

        const int S = m_.num_states, A = m_.num_actions;
        const int s = h.back();
        std::vector<int> children(static_cast<std::size_t>(A) * S, -1);
        std::vector<double> q(A, 0.0);
        for (int a = 0; a < A; ++a) {
            double expected_reward = 0.0;
            for (int k = 0; k < m_.num_models; ++k) expected_reward += belief[k] * m_.r(k, s, a);
            double future = 0.0;
            for (int n = 0; n < S; ++n) {
                double mix = 0.0;
                std::vector<double> next(m_.num_models);
                for (int k = 0; k < m_.num_models; ++k) {
                    next[k] = belief[k] * m_.p(k, s, a, n);
                    mix += next[k];
                }
                if (mix <= 0.0) continue;
                for (double& x : next) x /= mix;
                History hn = h;
                hn.push_back(a);
                hn.push_back(n);
                const int c = build(std::move(hn), std::move(next), depth + 1);
                children[a * S + n] = c;
                future += mix * tree.nodes[c].value;
            }
            q[a] = expected_reward + m_.gamma * future;
        }
        auto& node = tree.nodes[id];
        node.children = std::move(children);
        node.q = q;
        node.value = *std::max_element(q.begin(), q.end());
        for (int a = 0; a < A; ++a)
            if (q[a] >= node.value - 1e-12) node.optimal_actions.push_back(a);
        return id;
    }

    OracleTree tree;

  private:
    const DiscreteBamdp& m_;
    int horizon_;
    std::size_t budget_;
};

}  // namespace

OracleTree bayes_optimal_tree(const DiscreteBamdp& m, int horizon, int root_state, const std::vector<double>& belief,
                              std::size_t node_budget) {
    m.validate();
    if (horizon < 0) throw ConfigError("horizon must be non-negative");
    if (belief.size() != static_cast<std::size_t>(m.num_models)) throw ShapeError("belief size mismatch");
    OracleBuilder b(m, horizon, node_budget);
    b.tree.num_states = m.num_states;
    b.build({root_state}, belief, 0);
    return std::move(b.tree);
}

OracleTree bayes_optimal_tree(const DiscreteBamdp& m, int horizon, std::size_t node_budget) {
    return bayes_optimal_tree(m, horizon, m.start_state, m.prior, node_budget);
}

namespace {

int sample_next(const DiscreteBamdp& m, int k, int s, int a, Rng& rng) {
    const double* row =
        &m.transitions[((static_cast<std::size_t>(k) * m.num_states + s) * m.num_actions + a) * m.num_states];
    return static_cast<int>(rng.categorical({row, static_cast<std::size_t>(m.num_states)}));
}

class Bamcp {
  public:
    Bamcp(const DiscreteBamdp& m, double c, const DiscreteRollout& rollout, Rng& rng)
        : m_(m), c_(c), rollout_(rollout), rng_(rng) {
        nodes_.emplace_back();
    }

    struct Node {
        int visits = 0;
        std::vector<int> action_visits;
        std::vector<double> q;
        std::vector<int> children;  // [a * S + s'], -1 = not created
    };

    int pick_rollout_action(int s) {
        return rollout_ ? rollout_(s, rng_) : static_cast<int>(rng_.index(m_.num_actions));
    }

    double rollout(int s, int k, int depth) {
        double ret = 0.0, discount = 1.0;
        for (int d = depth; d > 0; --d) {
            const int a = pick_rollout_action(s);
            ret += discount * m_.r(k, s, a);
            s = sample_next(m_, k, s, a, rng_);
            discount *= m_.gamma;
        }
        return ret;
    }

    double simulate(int node_id, int s, int k, int depth) {
        if (depth == 0) return 0.0;
        const int A = m_.num_actions, S = m_.num_states;
        if (nodes_[node_id].visits == 0) {
            auto& node = nodes_[node_id];
            node.action_visits.assign(A, 0);
            node.q.assign(A, 0.0);
            node.children.assign(static_cast<std::size_t>(A) * S, -1);
            const int a = pick_rollout_action(s);
            const int next = sample_next(m_, k, s, a, rng_);
            const double ret = m_.r(k, s, a) + m_.gamma * rollout(next, k, depth - 1);
            auto& n = nodes_[node_id];
            n.visits = 1;
            n.action_visits[a] = 1;
            n.q[a] = ret;
            return ret;
        }
        const int a = select(nodes_[node_id]);
        const int next = sample_next(m_, k, s, a, rng_);
        int child = nodes_[node_id].children[a * S + next];
        if (child < 0) {
            child = static_cast<int>(nodes_.size());
            nodes_.emplace_back();
            nodes_[node_id].children[a * S + next] = child;
        }
        const double ret = m_.r(k, s, a) + m_.gamma * simulate(child, next, k, depth - 1);
        auto& node = nodes_[node_id];
        node.visits += 1;
        node.action_visits[a] += 1;
        node.q[a] += (ret - node.q[a]) / node.action_visits[a];
        return ret;
    }

    // UCT; unvisited actions first, lowest index on ties.
    int select(const Node& node) const {
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        const double log_n = std::log(static_cast<double>(node.visits));
        for (int a = 0; a < m_.num_actions; ++a) {
            const double score = node.action_visits[a] == 0
                                     ? std::numeric_limits<double>::infinity()
                                     : node.q[a] + c_ * std::sqrt(log_n / node.action_visits[a]);
            if (score > best_score) {
                best_score = score;
                best = a;
            }
        }
        return best;
    }

    const Node& root() const { return nodes_.front(); }

  private:
    const DiscreteBamdp& m_;
    double c_;
    const DiscreteRollout& rollout_;
    Rng& rng_;
    std::vector<Node> nodes_;
};

}  // namespace

BamcpResult bamcp_search(const DiscreteBamdp& m, int root_state, const std::vector<double>& belief, int simulations,
                         int max_depth, double exploration, const DiscreteRollout& rollout, Rng& rng) {
    if (simulations < 1) throw ConfigError("BAMCP needs at least one simulation");
    if (belief.size() != static_cast<std::size_t>(m.num_models)) throw ShapeError("belief size mismatch");
    Bamcp search(m, exploration, rollout, rng);
    for (int e = 0; e < simulations; ++e) {
        const int k = static_cast<int>(rng.categorical(belief));
        search.simulate(0, root_state, k, max_depth);
    }
    BamcpResult out;
    const auto& root = search.root();
    out.q = root.q.empty() ? std::vector<double>(m.num_actions, 0.0) : root.q;
    out.visits = root.action_visits.empty() ? std::vector<int>(m.num_actions, 0) : root.action_visits;
    out.action = static_cast<int>(std::max_element(out.q.begin(), out.q.end()) - out.q.begin());
    return out;
}

std::vector<double> RootSamplingHistogram::frequencies(const History& h) const {
    auto it = counts.find(h);
    if (it == counts.end()) return {};
    std::vector<double> f = it->second;
    double total = 0.0;
    for (double x : f) total += x;
    for (double& x : f) x /= total;
    return f;
}

double RootSamplingHistogram::visits(const History& h) const {
    auto it = counts.find(h);
    if (it == counts.end()) return 0.0;
    double total = 0.0;
    for (double x : it->second) total += x;
    return total;
}

RootSamplingHistogram root_sampling_histogram(const DiscreteBamdp& m, const std::vector<int>& forced_actions,
                                              std::size_t samples, Rng& rng) {
    if (samples < 1) throw ConfigError("need at least one sample");
    for (int a : forced_actions)
        if (a < 0 || a >= m.num_actions) throw ConfigError("forced action out of range");
    RootSamplingHistogram hist;
    for (std::size_t n = 0; n < samples; ++n) {
        const int k = static_cast<int>(rng.categorical(m.prior));
        History h{m.start_state};
        auto tally = [&] {
            auto& c = hist.counts[h];
            if (c.empty()) c.assign(m.num_models, 0.0);
            c[k] += 1.0;
        };
        tally();
        for (int a : forced_actions) {
            const int next = sample_next(m, k, h.back(), a, rng);
            h.push_back(a);
            h.push_back(next);
            tally();
        }
    }
    return hist;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeError("distribution sizes differ");
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
    return 0.5 * tv;
}

RootSamplingCheck check_root_sampling(const DiscreteBamdp& m, const std::vector<int>& forced_actions,
                                      std::size_t samples, std::uint64_t seed, double tolerance, int max_depth) {
    Rng rng(seed);
    const auto hist = root_sampling_histogram(m, forced_actions, samples, rng);
    // per-entry std <= 0.5 / sqrt(n); require tolerance >= 3 sigma * sqrt(K - 1)
    const double scale = 1.5 * std::sqrt(std::max(1, m.num_models - 1)) / tolerance;
    const double min_visits = scale * scale;
    RootSamplingCheck out;
    out.passed = true;
    for (const auto& [h, _] : hist.counts) {
        const int depth = static_cast<int>(h.size() / 2);
        if (depth > max_depth) continue;
        RootSamplingCheck::Row row;
        row.history = h;
        row.visits = hist.visits(h);
        row.tv = total_variation(hist.frequencies(h), exact_posterior(m, m.prior, h));
        row.powered = row.visits >= min_visits;
        if (row.powered) {
            out.max_tv = std::max(out.max_tv, row.tv);
            if (row.tv > tolerance) out.passed = false;
        } else {
            out.underpowered = true;
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace bamcts
