#include "bamcts/iteration.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

#include "bamcts/binary_io.hpp"
#include "bamcts/errors.hpp"

namespace bamcts {

using nlohmann::json;

Variant parse_variant(const std::string& name) {
    if (name == "ba-mbrl") return Variant::ba_mbrl;
    if (name == "ba-mcts") return Variant::ba_mcts;
    if (name == "ba-mcts-sl") return Variant::ba_mcts_sl;
    throw ConfigError("unknown variant '" + name + "' (expected ba-mbrl, ba-mcts or ba-mcts-sl)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::ba_mbrl: return "ba-mbrl";
        case Variant::ba_mcts: return "ba-mcts";
        case Variant::ba_mcts_sl: return "ba-mcts-sl";
    }
    return "?";
}

std::string expand_rule_name(ExpandRule r) {
    switch (r) {
        case ExpandRule::parent_visited: return "parent-visited";
        case ExpandRule::edge_visited: return "edge-visited";
        case ExpandRule::child_visited: return "child-visited";
    }
    return "?";
}

ExpandRule parse_expand_rule(const std::string& name) {
    if (name == "parent-visited") return ExpandRule::parent_visited;
    if (name == "edge-visited") return ExpandRule::edge_visited;
    if (name == "child-visited") return ExpandRule::child_visited;
    throw ConfigError("unknown expand rule '" + name + "'");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

json adam_to_json(const AdamConfig& a) {
    return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

AdamConfig adam_from_json(const json& j, AdamConfig a) {
    reject_unknown(j, {"learning_rate", "beta1", "beta2", "epsilon"}, "optimizer config");
    read_opt(j, "learning_rate", a.learning_rate);
    read_opt(j, "beta1", a.beta1);
    read_opt(j, "beta2", a.beta2);
    read_opt(j, "epsilon", a.epsilon);
    return a;
}

// Keys owned by the top level of a training config.
const std::set<std::string> kSharedSearchKeys = {"gamma", "lambda", "penalty_includes_reward"};

}  // namespace

json search_config_to_json(const SearchConfig& c) {
    return {{"simulations", c.simulations},
            {"max_depth", c.max_depth},
            {"gamma", c.gamma},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"exploration", c.exploration},
            {"root_noise", c.root_noise},
            {"dirichlet_concentration", c.dirichlet_concentration},
            {"max_actions", c.max_actions},
            {"max_outcomes", c.max_outcomes},
            {"lambda", c.lambda},
            {"penalty_includes_reward", c.penalty_includes_reward},
            {"expand_rule", expand_rule_name(c.expand_rule)},
            {"retain_tree", c.retain_tree}};
}

SearchConfig search_config_from_json(const json& j, SearchConfig c) {
    reject_unknown(j,
                   {"simulations", "max_depth", "gamma", "alpha", "beta", "exploration", "root_noise",
                    "dirichlet_concentration", "max_actions", "max_outcomes", "lambda", "penalty_includes_reward",
                    "expand_rule", "retain_tree"},
                   "search config");
    read_opt(j, "simulations", c.simulations);
    read_opt(j, "max_depth", c.max_depth);
    read_opt(j, "gamma", c.gamma);
    read_opt(j, "alpha", c.alpha);
    read_opt(j, "beta", c.beta);
    read_opt(j, "exploration", c.exploration);
    read_opt(j, "root_noise", c.root_noise);
    read_opt(j, "dirichlet_concentration", c.dirichlet_concentration);
    read_opt(j, "max_actions", c.max_actions);
    read_opt(j, "max_outcomes", c.max_outcomes);
    read_opt(j, "lambda", c.lambda);
    read_opt(j, "penalty_includes_reward", c.penalty_includes_reward);
    if (j.contains("expand_rule")) c.expand_rule = parse_expand_rule(j.at("expand_rule").get<std::string>());
    read_opt(j, "retain_tree", c.retain_tree);
    return c;
}

double TrainConfig::effective_rho() const {
    if (rho) return *rho;
    return variant == Variant::ba_mbrl ? 0.0 : 0.1;
}

SearchConfig TrainConfig::effective_search() const {
    SearchConfig s = search;
    s.gamma = gamma;
    s.lambda = lambda;
    s.penalty_includes_reward = penalty_includes_reward;
    return s;
}

void TrainConfig::validate() const {
    const double r = effective_rho();
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("search fraction rho must lie in [0, 1]");
    if (variant == Variant::ba_mbrl && r > 0.0)
        throw ConfigError("ba-mbrl never searches; rho must be 0 (or unset) for this variant");
    auto positive = [](int v, const char* name) {
        if (v < 1) throw ConfigError(std::string(name) + " must be at least 1");
    };
    positive(horizon, "horizon");
    positive(epochs, "epochs");
    positive(rollouts_per_epoch, "rollouts_per_epoch");
    positive(snapshot_interval, "snapshot_interval");
    positive(batch_size, "batch_size");
    positive(n_step, "n_step");
    positive(buffer_epochs, "buffer_epochs");
    positive(eval_episodes, "eval_episodes");
    positive(workers, "workers");
    if (learner_steps < 0) throw ConfigError("learner_steps must be non-negative");
    if (warmup_epochs < 0 || warmup_epochs > epochs) throw ConfigError("warmup_epochs must lie in [0, epochs]");
    if (warmup_epochs > 0 && variant != Variant::ba_mcts_sl)
        throw ConfigError("warmup_epochs applies to ba-mcts-sl only");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
    if (hidden.empty()) throw ConfigError("hidden layer list must not be empty");
    for (int h : hidden) positive(h, "hidden layer width");
    if (!(sac.trail_rate > 0.0 && sac.trail_rate <= 1.0)) throw ConfigError("sac trail_rate must lie in (0, 1]");
    if (!(sac.initial_temperature > 0.0)) throw ConfigError("sac initial_temperature must be positive");
    effective_search().validate();
}

json TrainConfig::to_json() const {
    json s = search_config_to_json(search);
    for (const auto& k : kSharedSearchKeys) s.erase(k);
    json sac_json = {{"trail_rate", sac.trail_rate},
                     {"initial_temperature", sac.initial_temperature},
                     {"auto_temperature", sac.auto_temperature},
                     {"target_entropy", std::isnan(sac.target_entropy) ? json(nullptr) : json(sac.target_entropy)},
                     {"actor", adam_to_json(sac.actor)},
                     {"critic", adam_to_json(sac.critic)},
                     {"temperature", adam_to_json(sac.temperature)}};
    return {{"variant", variant_name(variant)},
            {"rho", rho ? json(*rho) : json(nullptr)},
            {"horizon", horizon},
            {"epochs", epochs},
            {"rollouts_per_epoch", rollouts_per_epoch},
            {"learner_steps", learner_steps},
            {"snapshot_interval", snapshot_interval},
            {"batch_size", batch_size},
            {"n_step", n_step},
            {"gamma", gamma},
            {"lambda", lambda},
            {"penalty_includes_reward", penalty_includes_reward},
            {"buffer_epochs", buffer_epochs},
            {"warmup_epochs", warmup_epochs},
            {"eval_episodes", eval_episodes},
            {"eval_mode", eval_mode == EvalMode::mean ? "mean" : "sample"},
            {"start_from", start_from == StartFrom::any ? "any" : "initial"},
            {"sequential", sequential},
            {"workers", workers},
            {"hidden", hidden},
            {"policy_adam", adam_to_json(policy_adam)},
            {"value_adam", adam_to_json(value_adam)},
            {"sac", sac_json},
            {"search", s},
            {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    reject_unknown(j,
                   {"variant", "rho", "horizon", "epochs", "rollouts_per_epoch", "learner_steps",
                    "snapshot_interval", "batch_size", "n_step", "gamma", "lambda", "penalty_includes_reward",
                    "buffer_epochs", "warmup_epochs", "eval_episodes", "eval_mode", "start_from", "sequential",
                    "workers", "hidden", "policy_adam", "value_adam", "sac", "search", "seed"},
                   "training config");
    TrainConfig c;
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("rho") && !j.at("rho").is_null()) c.rho = j.at("rho").get<double>();
    read_opt(j, "horizon", c.horizon);
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "rollouts_per_epoch", c.rollouts_per_epoch);
    read_opt(j, "learner_steps", c.learner_steps);
    read_opt(j, "snapshot_interval", c.snapshot_interval);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "n_step", c.n_step);
    read_opt(j, "gamma", c.gamma);
    read_opt(j, "lambda", c.lambda);
    read_opt(j, "penalty_includes_reward", c.penalty_includes_reward);
    read_opt(j, "buffer_epochs", c.buffer_epochs);
    read_opt(j, "warmup_epochs", c.warmup_epochs);
    read_opt(j, "eval_episodes", c.eval_episodes);
    if (j.contains("eval_mode")) {
        const auto m = j.at("eval_mode").get<std::string>();
        if (m != "mean" && m != "sample") throw ConfigError("eval_mode must be mean or sample");
        c.eval_mode = m == "mean" ? EvalMode::mean : EvalMode::sample;
    }
    if (j.contains("start_from")) {
        const auto m = j.at("start_from").get<std::string>();
        if (m != "any" && m != "initial") throw ConfigError("start_from must be any or initial");
        c.start_from = m == "any" ? StartFrom::any : StartFrom::initial;
    }
    read_opt(j, "sequential", c.sequential);
    read_opt(j, "workers", c.workers);
    read_opt(j, "hidden", c.hidden);
    if (j.contains("policy_adam")) c.policy_adam = adam_from_json(j.at("policy_adam"), c.policy_adam);
    if (j.contains("value_adam")) c.value_adam = adam_from_json(j.at("value_adam"), c.value_adam);
    if (j.contains("sac")) {
        const json& s = j.at("sac");
        reject_unknown(s,
                       {"trail_rate", "initial_temperature", "auto_temperature", "target_entropy", "actor", "critic",
                        "temperature"},
                       "sac config");
        read_opt(s, "trail_rate", c.sac.trail_rate);
        read_opt(s, "initial_temperature", c.sac.initial_temperature);
        read_opt(s, "auto_temperature", c.sac.auto_temperature);
        if (s.contains("target_entropy"))
            c.sac.target_entropy = s.at("target_entropy").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                                     : s.at("target_entropy").get<double>();
        if (s.contains("actor")) c.sac.actor = adam_from_json(s.at("actor"), c.sac.actor);
        if (s.contains("critic")) c.sac.critic = adam_from_json(s.at("critic"), c.sac.critic);
        if (s.contains("temperature")) c.sac.temperature = adam_from_json(s.at("temperature"), c.sac.temperature);
    }
    if (j.contains("search")) {
        const json& s = j.at("search");
        for (const auto& k : kSharedSearchKeys)
            if (s.contains(k)) throw ConfigError("search." + k + " is set at the top level of a training config");
        c.search = search_config_from_json(s, c.search);
    }
    read_opt(j, "seed", c.seed);
    return c;
}

void TrainConfig::apply_environment() {
    if (const char* v = std::getenv("BAMCTS_SEED"); v != nullptr && *v != '\0') {
        char* end = nullptr;
        const unsigned long long parsed = std::strtoull(v, &end, 10);
        if (end == nullptr || *end != '\0') throw ConfigError(std::string("BAMCTS_SEED is not an integer: ") + v);
        seed = parsed;
    }
}

void write_trajectory(std::ostream& out, const Trajectory& traj) {
    auto write_vec = [&](const Vector& v) {
        io::write_u64(out, static_cast<std::uint64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64(out, v[i]);
    };
    io::write_u64(out, traj.start_index);
    io::write_u32(out, static_cast<std::uint32_t>(traj.horizon));
    io::write_u64(out, traj.records.size());
    for (const auto& r : traj.records) {
        write_vec(r.state);
        write_vec(r.action);
        io::write_f64(out, r.reward);
        io::write_f64(out, r.penalized_reward);
        write_vec(r.next_state);
        io::write_u32(out, r.searched ? 1u : 0u);
        io::write_u64(out, static_cast<std::uint64_t>(r.support.cols()));
        for (Eigen::Index c = 0; c < r.support.cols(); ++c) write_vec(r.support.col(c));
        write_vec(r.weights);
        io::write_f64(out, r.value);
    }
}

// ---------------------------------------------------------------- replay buffer

ReplayBuffer::ReplayBuffer(int window, int n_step, double gamma) : window_(window), n_step_(n_step), gamma_(gamma) {
    if (window < 1) throw ConfigError("replay window must be at least one epoch");
    if (n_step < 1) throw ConfigError("n-step horizon must be at least 1");
}

void ReplayBuffer::begin_epoch(int epoch) {
    std::lock_guard lock(mutex_);
    while (!blocks_.empty() && blocks_.front().epoch <= epoch - window_) blocks_.pop_front();
}

void ReplayBuffer::append(int epoch, const Trajectory& traj) {
    if (traj.records.empty()) return;
    std::vector<BufferItem> items;
    items.reserve(traj.size());
    for (std::size_t t = 0; t < traj.size(); ++t) {
        const auto& r = traj.records[t];
        if (r.searched && (r.support.cols() == 0 || r.support.cols() != r.weights.size()))
            throw DataError("searched record without a valid search distribution");
        items.push_back({r, compute_z(traj, t, n_step_, gamma_)});
    }
    {
        std::lock_guard lock(mutex_);
        if (blocks_.empty() || blocks_.back().epoch != epoch) {
            if (!blocks_.empty() && blocks_.back().epoch > epoch)
                throw ContractError("replay epochs must be appended in order");
            blocks_.push_back({epoch, {}, {}});
        }
        Block& b = blocks_.back();
        for (auto& item : items) {
            if (item.record.searched) b.searched.push_back(b.items.size());
            b.items.push_back(std::move(item));
        }
    }
    nonempty_.notify_all();
}

std::size_t ReplayBuffer::size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.items.size();
    return n;
}

std::size_t ReplayBuffer::searched_size() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.searched.size();
    return n;
}

std::vector<int> ReplayBuffer::epochs() const {
    std::lock_guard lock(mutex_);
    std::vector<int> out;
    for (const auto& b : blocks_) out.push_back(b.epoch);
    return out;
}

std::vector<BufferItem> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
    std::lock_guard lock(mutex_);
    std::size_t total = 0;
    for (const auto& b : blocks_) total += b.items.size();
    std::vector<BufferItem> out;
    if (total == 0) return out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t i = rng.index(total);
        for (const auto& b : blocks_) {
            if (i < b.items.size()) {
                out.push_back(b.items[i]);
                break;
            }
            i -= b.items.size();
        }
    }
    return out;
}

std::vector<BufferItem> ReplayBuffer::sample_searched(std::size_t count, Rng& rng) const {
    std::lock_guard lock(mutex_);
    std::size_t total = 0;
    for (const auto& b : blocks_) total += b.searched.size();
    std::vector<BufferItem> out;
    if (total == 0) return out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t i = rng.index(total);
        for (const auto& b : blocks_) {
            if (i < b.searched.size()) {
                out.push_back(b.items[b.searched[i]]);
                break;
            }
            i -= b.searched.size();
        }
    }
    return out;
}

bool ReplayBuffer::wait_nonempty(const std::function<bool()>& stop) const {
    std::unique_lock lock(mutex_);
    auto has_items = [&] {
        for (const auto& b : blocks_)
            if (!b.items.empty()) return true;
        return false;
    };
    while (!has_items()) {
        if (stop && stop()) return false;
        nonempty_.wait_for(lock, std::chrono::milliseconds(5));
    }
    return true;
}

// ---------------------------------------------------------------- actors

double Snapshot::state_value(const Vector& state) const {
    if (value) return (*value)(state);
    if (critics) return critics->min_q(state, policy.mean_action(state));
    return 0.0;
}

namespace {

template <class SnapshotFn>
Trajectory rollout_impl(const TrainConfig& cfg, double rho, SnapshotFn&& snapshot_for_step, const Ensemble& ensemble,
                        const TransitionDataset& data, const std::vector<std::size_t>& start_pool, Rng& rng,
                        RolloutStats* stats) {
    if (data.empty() || start_pool.empty()) throw DataError("actor rollout needs a non-empty dataset");
    Trajectory traj;
    traj.horizon = cfg.horizon;
    traj.start_index = start_pool[rng.index(start_pool.size())];
    Vector s = data[traj.start_index].state;
    Belief b = uniform_prior(ensemble.size());
    const SearchConfig scfg = cfg.effective_search();
    for (int t = 0; t < cfg.horizon; ++t) {
        const Snapshot& snap = snapshot_for_step();
        TrajectoryRecord rec;
        rec.state = s;
        rec.searched = rng.uniform() < rho;
        if (rec.searched) {
            SearchInputs in{[&snap](const Vector& x, Rng& r) { return snap.policy.sample(x, r).action; },
                            [&snap](const Vector& x) { return snap.state_value(x); }, snap.policy.box()};
            const SearchResult res = search(s, b, scfg, in, ensemble, rng);
            const std::size_t pick = rng.categorical(res.policy);
            rec.action = res.actions[pick];
            rec.support.resize(snap.policy.action_dim(), static_cast<Eigen::Index>(res.actions.size()));
            for (std::size_t j = 0; j < res.actions.size(); ++j) rec.support.col(j) = res.actions[j];
            rec.weights = Eigen::Map<const Vector>(res.policy.data(), static_cast<Eigen::Index>(res.policy.size()));
            rec.value = res.value;
            if (stats) ++stats->search_calls;
        } else {
            rec.action = snap.policy.sample(s, rng).action;
            rec.value = snap.state_value(s);
        }
        PenalizedStep step = bamdp_step(ensemble, b, s, rec.action, cfg.lambda, cfg.penalty_includes_reward, rng);
        rec.reward = step.reward;
        rec.penalized_reward = step.penalized;
        rec.next_state = step.next_state;
        if (stats) {
            stats->penalty_sum += step.reward - step.penalized;
            ++stats->steps;
        }
        s = std::move(step.next_state);
        b = std::move(step.belief);
        traj.records.push_back(std::move(rec));
    }
    return traj;
}

}  // namespace

Trajectory actor_rollout(const TrainConfig& cfg, double rho, const Snapshot& snap, const Ensemble& ensemble,
                         const TransitionDataset& data, const std::vector<std::size_t>& start_pool, Rng& rng,
                         RolloutStats* stats) {
    return rollout_impl(cfg, rho, [&]() -> const Snapshot& { return snap; }, ensemble, data, start_pool, rng, stats);
}

Trajectory actor_rollout(const TrainConfig& cfg, double rho,
                         const std::function<std::shared_ptr<const Snapshot>()>& latest, const Ensemble& ensemble,
                         const TransitionDataset& data, const std::vector<std::size_t>& start_pool, Rng& rng,
                         RolloutStats* stats) {
    std::shared_ptr<const Snapshot> held;
    return rollout_impl(
        cfg, rho,
        [&]() -> const Snapshot& {
            held = latest();
            return *held;
        },
        ensemble, data, start_pool, rng, stats);
}

// ---------------------------------------------------------------- learner

LearnerState LearnerState::create(const TrainConfig& cfg, int state_dim, const ActionBox& box) {
    LearnerState st;
    st.policy = GaussianPolicy::create(state_dim, box, cfg.hidden, derive_seed(cfg.seed, 101));
    st.value = ValueNet::create(state_dim, cfg.hidden, derive_seed(cfg.seed, 102));
    SacConfig sac = cfg.sac;
    sac.gamma = cfg.gamma;
    st.sac = SacLearner(CriticPair::create(state_dim, box.dim(), cfg.hidden, derive_seed(cfg.seed, 103)), st.policy,
                        sac);
    st.policy_opt = OptState(st.policy.net(), cfg.policy_adam);
    st.value_opt = OptState(st.value.net(), cfg.value_adam);
    return st;
}

std::shared_ptr<const Snapshot> LearnerState::snapshot(bool use_value_net) const {
    auto snap = std::make_shared<Snapshot>();
    snap->policy = policy;
    if (use_value_net)
        snap->value = value;
    else
        snap->critics = sac.critics;
    snap->version = steps;
    return snap;
}

LearnerMetrics learner_epoch(const TrainConfig& cfg, bool distill, int steps, const ReplayBuffer& buffer,
                             LearnerState& state, Rng& rng, const std::function<void()>& publish) {
    LearnerMetrics m;
    if (steps <= 0) return m;
    if (buffer.size() == 0) throw DataError("learner epoch on an empty replay buffer");
    SacConfig sac = cfg.sac;
    sac.gamma = cfg.gamma;
    const bool fit_value = cfg.variant == Variant::ba_mcts_sl;
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    const int sd = state.policy.state_dim(), ad = state.policy.action_dim();
    double policy_sum = 0.0, value_sum = 0.0, critic_sum = 0.0;
    int policy_n = 0, value_n = 0, critic_n = 0;

    for (int step = 0; step < steps; ++step) {
        const auto items = buffer.sample(batch, rng);
        const Eigen::Index n = static_cast<Eigen::Index>(items.size());
        Matrix states(sd, n);
        Vector z(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            states.col(k) = items[k].record.state;
            z[k] = items[k].z;
        }
        if (fit_value) {
            value_sum += value_update(state.value, state.value_opt, states, z);
            ++value_n;
        }
        if (distill) {
            const auto searched = buffer.sample_searched(batch, rng);
            if (!searched.empty()) {
                Matrix s(sd, static_cast<Eigen::Index>(searched.size()));
                std::vector<Matrix> supports;
                std::vector<Vector> weights;
                for (std::size_t k = 0; k < searched.size(); ++k) {
                    s.col(k) = searched[k].record.state;
                    supports.push_back(searched[k].record.support);
                    weights.push_back(searched[k].record.weights);
                }
                policy_sum += sl_policy_update(state.policy, state.policy_opt, s, supports, weights);
                ++policy_n;
            }
        } else {
            TransitionBatch tb;
            tb.states = states;
            tb.actions.resize(ad, n);
            tb.rewards.resize(n);
            tb.next_states.resize(sd, n);
            tb.done = Vector::Zero(n);  // model rollouts have no absorbing states
            for (Eigen::Index k = 0; k < n; ++k) {
                tb.actions.col(k) = items[k].record.action;
                tb.rewards[k] = items[k].record.penalized_reward;
                tb.next_states.col(k) = items[k].record.next_state;
            }
            const SacDiagnostics d = actor_critic_update(state.policy, state.sac, tb, sac, rng);
            policy_sum += d.actor_loss;
            critic_sum += d.critic_loss;
            ++policy_n;
            ++critic_n;
        }
        ++state.steps;
        ++m.steps;
        if (publish && state.steps % cfg.snapshot_interval == 0) publish();
    }
    if (policy_n) m.policy_loss = policy_sum / policy_n;
    if (value_n) m.value_loss = value_sum / value_n;
    if (critic_n) m.critic_loss = critic_sum / critic_n;
    return m;
}

// ---------------------------------------------------------------- training loop

std::string metrics_csv_header() {
    return "epoch,mean_return,std_return,policy_loss,value_loss,critic_loss,search_calls,mean_penalty";
}

std::string metrics_csv_row(const EpochRow& r) {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    return std::to_string(r.epoch) + "," + num(r.mean_return) + "," + num(r.std_return) + "," +
           opt(r.policy_loss) + "," + opt(r.value_loss) + "," + opt(r.critic_loss) + "," +
           std::to_string(r.search_calls) + "," + num(r.mean_penalty);
}

double final_window_mean(const std::vector<EpochRow>& rows, std::size_t window) {
    if (rows.empty()) return 0.0;
    const std::size_t k = std::min(window, rows.size());
    double sum = 0.0;
    for (std::size_t i = rows.size() - k; i < rows.size(); ++i) sum += rows[i].mean_return;
    return sum / static_cast<double>(k);
}

TrainingResult run_training(const TrainConfig& cfg, const Ensemble& ensemble, const TransitionDataset& data,
                            const Env& eval_env, const TrainingHooks& hooks) {
    cfg.validate();
    if (data.empty()) throw DataError("training needs a non-empty dataset");
    if (ensemble.state_dim() != data.state_dim() || ensemble.action_dim() != data.action_dim())
        throw ShapeError("ensemble and dataset dimensions differ");
    if (eval_env.state_dim() != data.state_dim() || eval_env.action_dim() != data.action_dim())
        throw ShapeError("evaluation environment and dataset dimensions differ");

    const bool sl = cfg.variant == Variant::ba_mcts_sl;
    LearnerState state = LearnerState::create(cfg, data.state_dim(), eval_env.box());
    ReplayBuffer buffer(cfg.buffer_epochs, cfg.n_step, cfg.gamma);

    std::vector<std::size_t> pool;
    if (cfg.start_from == StartFrom::initial) {
        pool = data.episode_start_indices();
    } else {
        pool.resize(data.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    }

    Rng actor_rng(derive_seed(cfg.seed, 1));
    Rng learner_rng(derive_seed(cfg.seed, 2));
    TrainingResult result;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const bool distill = sl && epoch > cfg.warmup_epochs;
        const double rho = (sl && !distill) ? 0.0 : cfg.effective_rho();
        buffer.begin_epoch(epoch);
        RolloutStats stats;
        LearnerMetrics lm;

        if (cfg.sequential) {
            const auto snap = state.snapshot(sl);
            std::vector<Trajectory> produced;
            for (int r = 0; r < cfg.rollouts_per_epoch; ++r) {
                Trajectory traj = actor_rollout(cfg, rho, *snap, ensemble, data, pool, actor_rng, &stats);
                buffer.append(epoch, traj);
                if (hooks.on_rollouts) produced.push_back(std::move(traj));
            }
            if (hooks.on_rollouts) hooks.on_rollouts(epoch, produced);
            lm = learner_epoch(cfg, distill, cfg.learner_steps, buffer, state, learner_rng);
        } else {
            std::mutex snap_mutex;
            std::shared_ptr<const Snapshot> current = state.snapshot(sl);
            auto latest = [&] {
                std::lock_guard lock(snap_mutex);
                return current;
            };
            auto publish = [&] {
                auto next = state.snapshot(sl);
                std::lock_guard lock(snap_mutex);
                current = std::move(next);
            };
            std::atomic<int> next_rollout{0};
            std::atomic<int> actors_left{cfg.workers};
            std::mutex stats_mutex;
            std::exception_ptr failure;
            std::vector<std::thread> actors;
            for (int w = 0; w < cfg.workers; ++w) {
                actors.emplace_back([&, w] {
                    try {
                        Rng rng(derive_seed(cfg.seed, 1'000'000ULL * static_cast<std::uint64_t>(epoch) + w));
                        RolloutStats local;
                        while (next_rollout.fetch_add(1) < cfg.rollouts_per_epoch) {
                            Trajectory traj = actor_rollout(cfg, rho, latest, ensemble, data, pool, rng, &local);
                            buffer.append(epoch, traj);
                        }
                        std::lock_guard lock(stats_mutex);
                        stats.search_calls += local.search_calls;
                        stats.penalty_sum += local.penalty_sum;
                        stats.steps += local.steps;
                    } catch (...) {
                        std::lock_guard lock(stats_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                    actors_left.fetch_sub(1);
                });
            }
            try {
                if (buffer.wait_nonempty([&] { return actors_left.load() == 0; }))
                    lm = learner_epoch(cfg, distill, cfg.learner_steps, buffer, state, learner_rng, publish);
            } catch (...) {
                for (auto& t : actors) t.join();
                throw;
            }
            for (auto& t : actors) t.join();
            if (failure) std::rethrow_exception(failure);
        }

        const EvalStats ev = evaluate_policy(eval_env, make_action_fn(state.policy, cfg.eval_mode), cfg.eval_episodes,
                                             derive_seed(cfg.seed, 3'000'000ULL + static_cast<std::uint64_t>(epoch)));
        EpochRow row;
        row.epoch = epoch;
        row.mean_return = ev.mean;
        row.std_return = ev.std;
        row.policy_loss = lm.policy_loss;
        row.value_loss = lm.value_loss;
        row.critic_loss = lm.critic_loss;
        row.search_calls = stats.search_calls;
        row.mean_penalty = stats.steps ? stats.penalty_sum / static_cast<double>(stats.steps) : 0.0;
        result.rows.push_back(row);
        if (hooks.on_epoch) hooks.on_epoch(row);
    }
    result.policy = state.policy;
    result.value = state.value;
    result.critics = state.sac.critics;
    result.final_mean_return = final_window_mean(result.rows);
    return result;
}

}  // namespace bamcts
