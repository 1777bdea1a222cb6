#include "bamcts/policy.hpp"

#include <algorithm>
#include <numbers>

#include "bamcts/errors.hpp"

namespace bamcts {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double squashed_log_density(const Vector& noise, const Vector& log_std, const TanhSquash& squash, const Vector& u) {
    return (-0.5 * noise.array().square() - log_std.array() - kHalfLog2Pi).sum() - squash.log_jacobian(u);
}

std::vector<int> with_ends(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
    Matrix m(top.rows() + bottom.rows(), top.cols());
    m.topRows(top.rows()) = top;
    m.bottomRows(bottom.rows()) = bottom;
    return m;
}

}  // namespace

GaussianPolicy::GaussianPolicy(Mlp net, ActionBox box) : net_(std::move(net)), box_(std::move(box)) {
    if (net_.output_dim() != 2 * box_.dim()) throw ShapeError("policy head must output mean and log-std per action");
    if (!((box_.high - box_.low).array() > 0.0).all()) throw ConfigError("action box must have positive width");
}

GaussianPolicy GaussianPolicy::create(int state_dim, const ActionBox& box, const std::vector<int>& hidden,
                                      std::uint64_t seed) {
    return GaussianPolicy(init_mlp(with_ends(state_dim, hidden, 2 * box.dim()), seed), box);
}

GaussianPolicy::Sample GaussianPolicy::sample(const Vector& state, Rng& rng) const {
    const GaussianHead head = forward_gaussian(net_, state);
    Vector noise(head.mean.size());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
    const Vector u = head.mean + (head.std().array() * noise.array()).matrix();
    const TanhSquash sq = squash();
    return {box_.clip(sq.apply(u)), squashed_log_density(noise, head.log_std, sq, u)};
}

Vector GaussianPolicy::mean_action(const Vector& state) const {
    return box_.clip(squash().apply(forward_gaussian(net_, state).mean));
}

double GaussianPolicy::log_density(const Vector& state, const Vector& action) const {
    const GaussianHead head = forward_gaussian(net_, state);
    const TanhSquash sq = squash();
    const Vector u = sq.invert(action);
    const Vector noise = ((u - head.mean).array() / head.std().array()).matrix();
    return squashed_log_density(noise, head.log_std, sq, u);
}

ValueNet::ValueNet(Mlp net) : net_(std::move(net)) {
    if (net_.output_dim() != 1) throw ShapeError("value network must have a scalar output");
}

ValueNet ValueNet::create(int state_dim, const std::vector<int>& hidden, std::uint64_t seed) {
    return ValueNet(init_mlp(with_ends(state_dim, hidden, 1), seed));
}

CriticPair CriticPair::create(int state_dim, int action_dim, const std::vector<int>& hidden, std::uint64_t seed) {
    CriticPair c;
    const auto sizes = with_ends(state_dim + action_dim, hidden, 1);
    c.q1 = init_mlp(sizes, derive_seed(seed, 1));
    c.q2 = init_mlp(sizes, derive_seed(seed, 2));
    c.target1 = c.q1;
    c.target2 = c.q2;
    return c;
}

double CriticPair::min_q(const Vector& state, const Vector& action) const {
    Vector in(state.size() + action.size());
    in << state, action;
    return std::min(q1.forward_one(in)[0], q2.forward_one(in)[0]);
}

void CriticPair::trail(double rate) {
    soft_update(target1, q1, rate);
    soft_update(target2, q2, rate);
}

ActionSampler make_action_fn(const GaussianPolicy& policy, EvalMode mode) {
    if (mode == EvalMode::mean)
        return [policy](const Vector& s, Rng&) { return policy.mean_action(s); };
    return [policy](const Vector& s, Rng& rng) { return policy.sample(s, rng).action; };
}

double compute_z(const std::vector<double>& penalized_rewards, const std::vector<double>& values, std::size_t t, int n,
                 double gamma) {
    const std::size_t len = penalized_rewards.size();
    if (values.size() != len) throw ContractError("reward and value sequences differ in length");
    if (t >= len) throw ContractError("n-step target index " + std::to_string(t) + " outside trajectory of length " +
                                      std::to_string(len));
    if (n < 1) throw ContractError("n-step target needs n >= 1");
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(n), len - 1 - t);
    double z = 0.0, discount = 1.0;
    for (std::size_t k = 0; k < m; ++k) {
        z += discount * penalized_rewards[t + k];
        discount *= gamma;
    }
    return z + discount * values[t + m];
}

double compute_z(const Trajectory& traj, std::size_t t, int n, double gamma) {
    std::vector<double> r, v;
    r.reserve(traj.size());
    v.reserve(traj.size());
    for (const auto& rec : traj.records) {
        r.push_back(rec.penalized_reward);
        v.push_back(rec.value);
    }
    return compute_z(r, v, t, n, gamma);
}

double sl_policy_update(GaussianPolicy& policy, OptState& opt, const Matrix& states,
                        const std::vector<Matrix>& supports, const std::vector<Vector>& weights) {
    if (states.cols() == 0) throw DataError("empty distillation batch");
    for (std::size_t k = 0; k < supports.size(); ++k)
        if (supports[k].cols() == 0 || k >= weights.size() || weights[k].size() != supports[k].cols())
            throw DataError("search target with empty or mismatched action support");
    loss::CrossEntropyToWeights ce{supports, weights, policy.squash()};
    return train_step(policy.net(), opt, states, ce);
}

double value_update(ValueNet& value, OptState& opt, const Matrix& states, const Vector& targets) {
    if (states.cols() == 0) throw DataError("empty value batch");
    if (!targets.allFinite()) throw DataError("non-finite value target");
    return train_step(value.net(), opt, states, loss::SquaredError{targets.transpose()});
}

SacLearner::SacLearner(CriticPair c, const GaussianPolicy& policy, const SacConfig& cfg)
    : critics(std::move(c)),
      actor_opt(policy.net(), cfg.actor),
      critic1_opt(critics.q1, cfg.critic),
      critic2_opt(critics.q2, cfg.critic),
      log_temperature(std::log(cfg.initial_temperature)) {
    temperature_opt.config = cfg.temperature;
}

SacDiagnostics actor_critic_update(GaussianPolicy& policy, SacLearner& learner, const TransitionBatch& batch,
                                   const SacConfig& cfg, Rng& rng) {
    const Eigen::Index n = batch.states.cols();
    if (n == 0) throw DataError("empty actor-critic batch");
    const int d = policy.action_dim();
    const TanhSquash sq = policy.squash();
    const double alpha = learner.temperature();
    auto draw_noise = [&] {
        Matrix eps(d, n);
        for (Eigen::Index k = 0; k < n; ++k)
            for (int i = 0; i < d; ++i) eps(i, k) = rng.normal();
        return eps;
    };
    // Squashed samples and their log-densities for a batch of states.
    auto sample_batch = [&](const Matrix& states, const Matrix& eps, Matrix& actions, Vector& log_pi) {
        const auto g = split_gaussian(policy.net().forward(states), policy.net().bounds());
        actions.resize(d, n);
        log_pi.resize(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const Vector u = g.mean.col(k) + (g.log_std.col(k).array().exp() * eps.col(k).array()).matrix();
            actions.col(k) = sq.apply(u);
            log_pi[k] = squashed_log_density(eps.col(k), g.log_std.col(k), sq, u);
        }
    };

    SacDiagnostics diag;
    diag.temperature = alpha;

    Matrix next_actions;
    Vector next_log_pi;
    sample_batch(batch.next_states, draw_noise(), next_actions, next_log_pi);
    const Matrix next_in = stack(batch.next_states, next_actions);
    const Matrix tq = learner.critics.target1.forward(next_in).cwiseMin(learner.critics.target2.forward(next_in));
    Matrix targets(1, n);
    for (Eigen::Index k = 0; k < n; ++k)
        targets(0, k) = batch.rewards[k] +
                        cfg.gamma * (1.0 - batch.done[k]) * (tq(0, k) - alpha * next_log_pi[k]);
    diag.mean_target = targets.mean();

    const Matrix in = stack(batch.states, batch.actions);
    const double l1 = train_step(learner.critics.q1, learner.critic1_opt, in, loss::SquaredError{targets});
    const double l2 = train_step(learner.critics.q2, learner.critic2_opt, in, loss::SquaredError{targets});
    diag.critic_loss = 0.5 * (l1 + l2);

    const Matrix eps = draw_noise();
    Matrix fresh_actions;
    Vector log_pi;
    sample_batch(batch.states, eps, fresh_actions, log_pi);
    diag.entropy = -log_pi.mean();
    loss::ActorCritic ac{eps, &learner.critics.q1, &learner.critics.q2, alpha, sq};
    diag.actor_loss = train_step(policy.net(), learner.actor_opt, batch.states, ac);

    if (cfg.auto_temperature) {
        const double target = std::isnan(cfg.target_entropy) ? -static_cast<double>(d) : cfg.target_entropy;
        // d/d(log alpha) of -log_alpha * (log pi + target)
        Vector grad(1), param(1);
        grad[0] = -(log_pi.mean() + target);
        param[0] = learner.log_temperature;
        learner.temperature_opt.apply(param, grad);
        learner.log_temperature = std::clamp(param[0], -20.0, 5.0);
    }
    learner.critics.trail(cfg.trail_rate);
    if (!std::isfinite(diag.critic_loss) || !std::isfinite(diag.actor_loss))
        throw NumericError("actor-critic update produced a non-finite loss");
    return diag;
}

void save_policy(const std::string& path, const GaussianPolicy& policy) {
    save_checkpoint_file(path, policy.net(), "policy");
}

GaussianPolicy load_policy(const std::string& path, const ActionBox& box) {
    auto [net, role] = load_checkpoint_file(path);
    if (role != "policy") throw DataError(path + " holds a '" + role + "' checkpoint, expected 'policy'");
    return GaussianPolicy(std::move(net), box);
}

void save_value(const std::string& path, const ValueNet& value) { save_checkpoint_file(path, value.net(), "value"); }

ValueNet load_value(const std::string& path) {
    auto [net, role] = load_checkpoint_file(path);
    if (role != "value") throw DataError(path + " holds a '" + role + "' checkpoint, expected 'value'");
    return ValueNet(std::move(net));
}

}  // namespace bamcts
