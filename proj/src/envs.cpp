#include "bamcts/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bamcts/errors.hpp"

namespace bamcts {

namespace {

double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a < 0.0) a += two_pi;
    return a - std::numbers::pi;
}

void check_action(const Env& env, const Vector& a) {
    if (a.size() != env.action_dim()) throw ShapeError(env.name() + ": action has the wrong dimension");
    if (!a.allFinite()) throw NumericError(env.name() + ": non-finite action");
}

}  // namespace

// ---------------------------------------------------------------- nav2d

Nav2dEnv::Nav2dEnv(double noise_scale)
    : noise_(noise_scale), goal_(Vector::Ones(2)), box_(ActionBox::symmetric(2, 1.0)) {
    if (!(noise_scale >= 0.0)) throw ConfigError("nav2d noise scale must be non-negative");
}

Vector Nav2dEnv::reset() {
    t_ = 0;
    state_ = Vector(2);
    state_ << rng_.uniform(-0.1, 0.1), rng_.uniform(-0.1, 0.1);
    return state_;
}

StepResult Nav2dEnv::step(const Vector& action) {
    check_action(*this, action);
    const Vector a = box_.clip(action);
    StepResult r;
    r.reward = -(state_ - goal_).squaredNorm() * kDt;
    Vector next = state_ + kStepScale * a;
    for (int i = 0; i < 2; ++i) next[i] += noise_ * rng_.normal();
    state_ = next;
    r.next_state = next;
    r.done = ++t_ >= kHorizon;
    return r;
}

Vector Nav2dEnv::expert_action(const Vector& state) const { return box_.clip(10.0 * (goal_ - state)); }

nlohmann::json Nav2dEnv::params() const {
    return {{"noise_scale", noise_}, {"goal", {goal_[0], goal_[1]}}, {"dt", kDt}, {"horizon", kHorizon}};
}

// ---------------------------------------------------------------- pendulum

namespace {
constexpr double kGravity = 10.0;
constexpr double kPendulumDt = 0.05;
constexpr double kMaxSpeed = 8.0;
}  // namespace

PendulumEnv::PendulumEnv(double noise_scale, bool heteroscedastic)
    : noise_(noise_scale), heteroscedastic_(heteroscedastic), box_(ActionBox::symmetric(1, 2.0)) {
    if (!(noise_scale >= 0.0)) throw ConfigError("pendulum noise scale must be non-negative");
}

double PendulumEnv::disturbance_scale(double angular_velocity) const {
    return heteroscedastic_ ? noise_ * (1.0 + std::abs(angular_velocity)) : noise_;
}

Vector PendulumEnv::observe() const {
    Vector s(3);
    s << std::cos(theta_), std::sin(theta_), omega_;
    return s;
}

Vector PendulumEnv::reset() {
    t_ = 0;
    theta_ = rng_.uniform(-std::numbers::pi, std::numbers::pi);
    omega_ = rng_.uniform(-1.0, 1.0);
    return observe();
}

StepResult PendulumEnv::step(const Vector& action) {
    check_action(*this, action);
    const double u = box_.clip(action)[0];
    const double th = wrap_angle(theta_);
    StepResult r;
    r.reward = -(th * th + 0.1 * omega_ * omega_ + 0.001 * u * u);
    const double torque = u + disturbance_scale(omega_) * rng_.normal();
    omega_ = std::clamp(omega_ + (1.5 * kGravity * std::sin(theta_) + 3.0 * torque) * kPendulumDt, -kMaxSpeed,
                        kMaxSpeed);
    theta_ = wrap_angle(theta_ + omega_ * kPendulumDt);
    r.next_state = observe();
    r.done = ++t_ >= kHorizon;
    return r;
}

Vector PendulumEnv::expert_action(const Vector& state) const {
    const double th = std::atan2(state[1], state[0]);
    const double om = state[2];
    double u;
    if (state[0] > 0.95 && std::abs(om) < 2.0) {
        u = -(12.0 * th + 2.5 * om);
    } else {
        // Energy shaping: H = om^2 / 2 + 15 cos(th) changes at rate 3 u om;
        // drive it toward the upright value.
        const double energy = 0.5 * om * om + 1.5 * kGravity * std::cos(th);
        const double gap = 1.5 * kGravity - energy;
        u = 2.0 * gap * (om >= 0.0 ? 1.0 : -1.0);
    }
    return Vector::Constant(1, std::clamp(u, -2.0, 2.0));
}

nlohmann::json PendulumEnv::params() const {
    return {{"noise_scale", noise_}, {"heteroscedastic", heteroscedastic_}, {"dt", kPendulumDt},
            {"horizon", kHorizon}};
}

// ---------------------------------------------------------------- tracker

TrackerEnv::TrackerEnv(double noise_scale) : noise_(noise_scale), box_(ActionBox::symmetric(1, 1.0)) {
    if (!(noise_scale >= 0.0)) throw ConfigError("tracker noise scale must be non-negative");
}

Vector TrackerEnv::observe() const {
    Vector s(3);
    s << x_, kAmplitude * std::sin(phase_), kAmplitude * kFrequency * std::cos(phase_);
    return s;
}

Vector TrackerEnv::reset() {
    t_ = 0;
    phase_ = rng_.uniform(0.0, 2.0 * std::numbers::pi);
    x_ = kAmplitude * std::sin(phase_) + rng_.uniform(-0.25, 0.25);
    return observe();
}

StepResult TrackerEnv::step(const Vector& action) {
    check_action(*this, action);
    const double a = box_.clip(action)[0];
    x_ += kStepScale * a + noise_ * rng_.normal();
    phase_ += kFrequency;
    StepResult r;
    const double err = x_ - kAmplitude * std::sin(phase_);
    r.reward = -err * err;
    r.next_state = observe();
    r.done = ++t_ >= kHorizon;
    return r;
}

Vector TrackerEnv::expert_action(const Vector& state) const {
    // target' = target cos(w) + (velocity / w) sin(w)
    const double next_target =
        state[1] * std::cos(kFrequency) + state[2] / kFrequency * std::sin(kFrequency);
    return Vector::Constant(1, std::clamp((next_target - state[0]) / kStepScale, -1.0, 1.0));
}

nlohmann::json TrackerEnv::params() const {
    return {{"noise_scale", noise_}, {"amplitude", kAmplitude}, {"frequency", kFrequency}, {"horizon", kHorizon}};
}

// ---------------------------------------------------------------- discrete BAMDP

DiscreteBamdpEnv::DiscreteBamdpEnv(DiscreteBamdp model) : model_(std::move(model)) {
    model_.validate();
    box_ = {Vector::Zero(1), Vector::Constant(1, static_cast<double>(model_.num_actions))};
    // Shallowest oracle decision per state; exact for BAMDPs whose states
    // summarize the relevant history, as in the shipped bandit.
    const OracleTree tree = bayes_optimal_tree(model_, model_.horizon);
    optimal_action_.assign(model_.num_states, 0);
    std::vector<int> depth(model_.num_states, -1);
    for (const auto& node : tree.nodes) {
        if (node.optimal_actions.empty()) continue;
        const int s = node.history.back();
        if (depth[s] < 0 || node.depth < depth[s]) {
            depth[s] = node.depth;
            optimal_action_[s] = node.optimal_actions.front();
        }
    }
}

int DiscreteBamdpEnv::action_index(const Vector& action) const {
    return std::clamp(static_cast<int>(std::floor(action[0])), 0, model_.num_actions - 1);
}

Vector DiscreteBamdpEnv::reset() {
    t_ = 0;
    state_ = model_.start_state;
    true_model_ = static_cast<int>(rng_.categorical(model_.prior));
    return Vector::Constant(1, state_);
}

StepResult DiscreteBamdpEnv::step(const Vector& action) {
    check_action(*this, action);
    const int a = action_index(action);
    std::vector<double> row(model_.num_states);
    for (int n = 0; n < model_.num_states; ++n) row[n] = model_.p(true_model_, state_, a, n);
    StepResult r;
    r.reward = model_.r(true_model_, state_, a);
    state_ = static_cast<int>(rng_.categorical(row));
    r.next_state = Vector::Constant(1, state_);
    r.done = ++t_ >= model_.horizon;
    return r;
}

Vector DiscreteBamdpEnv::expert_action(const Vector& state) const {
    const int s = std::clamp(static_cast<int>(state[0]), 0, model_.num_states - 1);
    return Vector::Constant(1, optimal_action_[s] + 0.5);
}

nlohmann::json DiscreteBamdpEnv::params() const {
    return {{"states", model_.num_states}, {"actions", model_.num_actions}, {"models", model_.num_models},
            {"horizon", model_.horizon}};
}

// ---------------------------------------------------------------- factory

std::vector<std::string> env_names() { return {"nav2d-noisy", "pendulum-noisy", "tracker-1d", "bandit-bamdp"}; }

std::unique_ptr<Env> make_env(const std::string& name, std::uint64_t seed, const EnvOptions& options) {
    std::unique_ptr<Env> env;
    if (name == "nav2d-noisy")
        env = std::make_unique<Nav2dEnv>(options.noise_scale.value_or(0.05));
    else if (name == "pendulum-noisy")
        env = std::make_unique<PendulumEnv>(options.noise_scale.value_or(0.2), options.heteroscedastic);
    else if (name == "tracker-1d")
        env = std::make_unique<TrackerEnv>(options.noise_scale.value_or(0.01));
    else if (name == "bandit-bamdp")
        env = std::make_unique<DiscreteBamdpEnv>(make_bandit_bamdp());
    else
        throw ConfigError("unknown environment '" + name + "'");
    env->seed(seed);
    return env;
}

// ---------------------------------------------------------------- behavior data

Quality parse_quality(const std::string& name) {
    if (name == "random") return Quality::random;
    if (name == "medium") return Quality::medium;
    if (name == "expert") return Quality::expert;
    if (name == "medium-replay-mix" || name == "medium-replay") return Quality::medium_replay_mix;
    throw ConfigError("unknown behavior quality '" + name + "'");
}

std::string quality_name(Quality q) {
    switch (q) {
        case Quality::random: return "random";
        case Quality::medium: return "medium";
        case Quality::expert: return "expert";
        case Quality::medium_replay_mix: return "medium-replay-mix";
    }
    return "?";
}

Vector behavior_action(const Env& env, const BehaviorSpec& spec, Quality episode_quality, const Vector& state,
                       Rng& rng) {
    const ActionBox& box = env.box();
    auto jitter = [&](Vector a) {
        const Vector hw = box.half_width();
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += spec.noise_scale * hw[i] * rng.normal();
        return box.clip(a);
    };
    switch (episode_quality) {
        case Quality::random: return box.sample_uniform(rng);
        case Quality::expert: return jitter(env.expert_action(state));
        case Quality::medium: {
            if (rng.bernoulli(spec.random_action_prob)) return box.sample_uniform(rng);
            const Vector center = box.center();
            return jitter(center + spec.medium_gain * (env.expert_action(state) - center));
        }
        case Quality::medium_replay_mix: break;
    }
    throw ContractError("medium-replay behavior needs a per-episode quality");
}

nlohmann::json DatasetInfo::to_json() const {
    return {{"env", env},
            {"quality", quality},
            {"seed", seed},
            {"transitions", transitions},
            {"episodes", episodes},
            {"behavior_mean_return", behavior_mean_return},
            {"behavior_std_return", behavior_std_return},
            {"env_params", env_params}};
}

DatasetInfo DatasetInfo::from_json(const nlohmann::json& j) {
    DatasetInfo d;
    d.env = j.at("env").get<std::string>();
    d.quality = j.at("quality").get<std::string>();
    d.seed = j.at("seed").get<std::uint64_t>();
    d.transitions = j.at("transitions").get<std::size_t>();
    d.episodes = j.at("episodes").get<std::size_t>();
    d.behavior_mean_return = j.at("behavior_mean_return").get<double>();
    d.behavior_std_return = j.at("behavior_std_return").get<double>();
    d.env_params = j.value("env_params", nlohmann::json::object());
    return d;
}

GeneratedDataset generate_dataset(const Env& env_proto, const BehaviorSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("dataset needs at least one transition");
    auto env = env_proto.clone();
    env->seed(derive_seed(seed, 0));
    Rng rng(derive_seed(seed, 1));
    GeneratedDataset out{TransitionDataset(env->state_dim(), env->action_dim()), {}};
    static constexpr Quality kMix[] = {Quality::random, Quality::medium, Quality::expert};
    std::size_t episode = 0;
    while (out.data.size() < n) {
        Quality q = spec.quality;
        if (q == Quality::medium_replay_mix) q = kMix[episode % 3];
        Vector s = env->reset();
        for (int t = 0; t < env->horizon() && out.data.size() < n; ++t) {
            Vector a = behavior_action(*env, spec, q, s, rng);
            StepResult r = env->step(a);
            out.data.add({s, a, r.reward, r.next_state, r.done});
            s = r.next_state;
            if (r.done) break;
        }
        ++episode;
    }
    const auto returns = out.data.episode_returns();
    const EvalStats stats = return_stats(returns);
    out.info.env = env->name();
    out.info.quality = quality_name(spec.quality);
    out.info.seed = seed;
    out.info.transitions = out.data.size();
    out.info.episodes = returns.size();
    out.info.behavior_mean_return = stats.mean;
    out.info.behavior_std_return = stats.std;
    out.info.env_params = env->params();
    return out;
}

EvalStats return_stats(const std::vector<double>& returns) {
    EvalStats s;
    s.returns = returns;
    if (returns.empty()) return s;
    double sum = 0.0;
    for (double r : returns) sum += r;
    s.mean = sum / static_cast<double>(returns.size());
    double sq = 0.0;
    for (double r : returns) sq += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(returns.size()));
    return s;
}

EvalStats evaluate_policy(const Env& env_proto, const ActionSampler& policy, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
    auto env = env_proto.clone();
    env->seed(derive_seed(seed, 0));
    Rng rng(derive_seed(seed, 1));
    std::vector<double> returns;
    for (int e = 0; e < episodes; ++e) {
        Vector s = env->reset();
        double total = 0.0;
        for (int t = 0; t < env->horizon(); ++t) {
            StepResult r = env->step(policy(s, rng));
            total += r.reward;
            s = r.next_state;
            if (r.done) break;
        }
        returns.push_back(total);
    }
    return return_stats(returns);
}

}  // namespace bamcts
