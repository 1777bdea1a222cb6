#pragma once

// Policy, value and twin-critic networks plus their update rules: supervised
// distillation of search targets and a soft actor-critic learner.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bamcts/net.hpp"
#include "bamcts/rng.hpp"
#include "bamcts/space.hpp"

namespace bamcts {

// Squashed Gaussian over the action box: a = center + half_width * tanh(u),
// u ~ N(mean(s), std(s)).
class GaussianPolicy {
  public:
    GaussianPolicy() = default;
    GaussianPolicy(Mlp net, ActionBox box);
    static GaussianPolicy create(int state_dim, const ActionBox& box, const std::vector<int>& hidden,
                                 std::uint64_t seed);

    struct Sample {
        Vector action;
        double log_density = 0.0;
    };

    Sample sample(const Vector& state, Rng& rng) const;
    Vector mean_action(const Vector& state) const;
    double log_density(const Vector& state, const Vector& action) const;

    int state_dim() const { return net_.input_dim(); }
    int action_dim() const { return box_.dim(); }
    const ActionBox& box() const { return box_; }
    TanhSquash squash() const { return box_.squash(); }
    const Mlp& net() const { return net_; }
    Mlp& net() { return net_; }

  private:
    Mlp net_;
    ActionBox box_;
};

class ValueNet {
  public:
    ValueNet() = default;
    explicit ValueNet(Mlp net);
    static ValueNet create(int state_dim, const std::vector<int>& hidden, std::uint64_t seed);

    double operator()(const Vector& state) const { return net_.forward_one(state)[0]; }
    const Mlp& net() const { return net_; }
    Mlp& net() { return net_; }

  private:
    Mlp net_;
};

// Two Q(s, a) networks with Polyak-trailed targets.
struct CriticPair {
    Mlp q1, q2;
    Mlp target1, target2;

    static CriticPair create(int state_dim, int action_dim, const std::vector<int>& hidden, std::uint64_t seed);

    double min_q(const Vector& state, const Vector& action) const;
    // Soft update of both targets.
    void trail(double rate);
};

enum class EvalMode { mean, sample };

ActionSampler make_action_fn(const GaussianPolicy& policy, EvalMode mode);

// One step of a model rollout, as stored by actors.
struct TrajectoryRecord {
    Vector state;
    Vector action;
    double reward = 0.0;
    double penalized_reward = 0.0;
    Vector next_state;
    bool searched = false;
    Matrix support;   // action_dim x |C(root)|, searched steps only
    Vector weights;   // pi_ret over the support
    double value = 0.0;  // v_ret, or V(s) backfilled when no search ran
};

struct Trajectory {
    std::vector<TrajectoryRecord> records;
    int horizon = 0;
    std::uint64_t start_index = 0;  // dataset record the start state came from

    std::size_t size() const { return records.size(); }
};

// n-step penalized return bootstrapped with the stored value m steps ahead,
// where m = min(n, len - 1 - t).
double compute_z(const Trajectory& traj, std::size_t t, int n, double gamma);
double compute_z(const std::vector<double>& penalized_rewards, const std::vector<double>& values, std::size_t t, int n,
                 double gamma);

// Cross-entropy of the policy to pi_ret over each finite support; one Adam step.
// Returns the pre-step loss.
double sl_policy_update(GaussianPolicy& policy, OptState& opt, const Matrix& states,
                        const std::vector<Matrix>& supports, const std::vector<Vector>& weights);

// Squared error of V toward z; one Adam step. Returns the pre-step loss.
double value_update(ValueNet& value, OptState& opt, const Matrix& states, const Vector& targets);

struct TransitionBatch {
    Matrix states;       // state_dim x B
    Matrix actions;      // action_dim x B
    Vector rewards;      // B
    Matrix next_states;  // state_dim x B
    Vector done;         // B, 1 where the episode terminated
};

struct SacConfig {
    double gamma = 0.99;
    double trail_rate = 0.005;
    double initial_temperature = 0.1;
    bool auto_temperature = true;
    // Defaults to -action_dim when NaN.
    double target_entropy = std::numeric_limits<double>::quiet_NaN();
    AdamConfig actor{3e-4};
    AdamConfig critic{3e-4};
    AdamConfig temperature{3e-4};
};

// Mutable learner state owned alongside the policy.
struct SacLearner {
    CriticPair critics;
    OptState actor_opt, critic1_opt, critic2_opt, temperature_opt;
    double log_temperature = 0.0;

    SacLearner() = default;
    SacLearner(CriticPair critics, const GaussianPolicy& policy, const SacConfig& cfg);

    double temperature() const { return std::exp(log_temperature); }
};

struct SacDiagnostics {
    double critic_loss = 0.0;  // mean of the two critics
    double actor_loss = 0.0;
    double temperature = 0.0;
    double entropy = 0.0;  // -mean log pi of fresh samples
    double mean_target = 0.0;
};

SacDiagnostics actor_critic_update(GaussianPolicy& policy, SacLearner& learner, const TransitionBatch& batch,
                                   const SacConfig& cfg, Rng& rng);

// Checkpoints reuse the network format with role tags.
void save_policy(const std::string& path, const GaussianPolicy& policy);
GaussianPolicy load_policy(const std::string& path, const ActionBox& box);
void save_value(const std::string& path, const ValueNet& value);
ValueNet load_value(const std::string& path);

}  // namespace bamcts
