#pragma once

// Ground-truth environments with closed-form dynamics, scripted behavior
// policies for offline dataset generation, and policy evaluation.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bamcts/dataset.hpp"
#include "bamcts/discrete_bamdp.hpp"
#include "bamcts/space.hpp"

namespace bamcts {

struct StepResult {
    Vector next_state;
    double reward = 0.0;
    bool done = false;  // episode reached its horizon
};

class Env {
  public:
    virtual ~Env() = default;

    virtual std::string name() const = 0;
    virtual int state_dim() const = 0;
    virtual const ActionBox& box() const = 0;
    virtual int horizon() const = 0;

    // Reseeds the environment's random stream; trajectories are a function of
    // the seed and the action sequence.
    virtual void seed(std::uint64_t seed) = 0;
    virtual Vector reset() = 0;
    // Actions outside the box are clipped.
    virtual StepResult step(const Vector& action) = 0;

    // Noise-free scripted controller used for expert behavior data.
    virtual Vector expert_action(const Vector& state) const = 0;

    virtual nlohmann::json params() const = 0;
    virtual std::unique_ptr<Env> clone() const = 0;

    int action_dim() const { return box().dim(); }
};

struct EnvOptions {
    std::optional<double> noise_scale;  // overrides the env default
    bool heteroscedastic = false;       // pendulum-noisy only
};

// Known names: nav2d-noisy, pendulum-noisy, tracker-1d, bandit-bamdp.
std::unique_ptr<Env> make_env(const std::string& name, std::uint64_t seed, const EnvOptions& options = {});
std::vector<std::string> env_names();

// Point mass: s' = s + 0.1 a + N(0, noise^2 I), reward -|s - goal|^2 * 0.1,
// goal (1, 1), 50 steps, start uniform in [-0.1, 0.1]^2.
class Nav2dEnv final : public Env {
  public:
    static constexpr double kDt = 0.1;
    static constexpr double kStepScale = 0.1;
    static constexpr int kHorizon = 50;

    explicit Nav2dEnv(double noise_scale = 0.05);

    std::string name() const override { return "nav2d-noisy"; }
    int state_dim() const override { return 2; }
    const ActionBox& box() const override { return box_; }
    int horizon() const override { return kHorizon; }
    void seed(std::uint64_t seed) override { rng_ = Rng(seed); }
    Vector reset() override;
    StepResult step(const Vector& action) override;
    Vector expert_action(const Vector& state) const override;
    nlohmann::json params() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<Nav2dEnv>(*this); }

    const Vector& goal() const { return goal_; }
    double noise_scale() const { return noise_; }

  private:
    double noise_;
    Vector goal_;
    ActionBox box_;
    Vector state_;
    int t_ = 0;
    Rng rng_;
};

// Torque-limited pendulum observed as (cos th, sin th, th_dot), upright is
// th = 0. A Gaussian disturbance is added to the applied torque; in the
// heteroscedastic mode its scale grows with |th_dot|.
class PendulumEnv final : public Env {
  public:
    static constexpr int kHorizon = 100;

    PendulumEnv(double noise_scale = 0.2, bool heteroscedastic = false);

    std::string name() const override { return "pendulum-noisy"; }
    int state_dim() const override { return 3; }
    const ActionBox& box() const override { return box_; }
    int horizon() const override { return kHorizon; }
    void seed(std::uint64_t seed) override { rng_ = Rng(seed); }
    Vector reset() override;
    StepResult step(const Vector& action) override;
    Vector expert_action(const Vector& state) const override;
    nlohmann::json params() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<PendulumEnv>(*this); }

    double disturbance_scale(double angular_velocity) const;

  private:
    Vector observe() const;

    double noise_;
    bool heteroscedastic_;
    ActionBox box_;
    double theta_ = 0.0, omega_ = 0.0;
    int t_ = 0;
    Rng rng_;
};

// Follow a sinusoidal target: state (x, target, target velocity),
// x' = x + 0.1 a + N(0, noise^2), reward -(x' - target')^2.
class TrackerEnv final : public Env {
  public:
    static constexpr int kHorizon = 100;
    static constexpr double kAmplitude = 0.5;
    static constexpr double kFrequency = 0.1;  // radians per step
    static constexpr double kStepScale = 0.1;

    explicit TrackerEnv(double noise_scale = 0.01);

    std::string name() const override { return "tracker-1d"; }
    int state_dim() const override { return 3; }
    const ActionBox& box() const override { return box_; }
    int horizon() const override { return kHorizon; }
    void seed(std::uint64_t seed) override { rng_ = Rng(seed); }
    Vector reset() override;
    StepResult step(const Vector& action) override;
    // Proportional controller toward the next target position.
    Vector expert_action(const Vector& state) const override;
    nlohmann::json params() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<TrackerEnv>(*this); }

  private:
    Vector observe() const;

    double noise_;
    ActionBox box_;
    double x_ = 0.0, phase_ = 0.0;
    int t_ = 0;
    Rng rng_;
};

// A discrete BAMDP played as an environment: the true model is drawn from the
// prior at reset, the state is a 1-vector holding the state index and the
// action is a 1-vector in [0, A) floored to an action index.
class DiscreteBamdpEnv final : public Env {
  public:
    explicit DiscreteBamdpEnv(DiscreteBamdp model);

    std::string name() const override { return "bandit-bamdp"; }
    int state_dim() const override { return 1; }
    const ActionBox& box() const override { return box_; }
    int horizon() const override { return model_.horizon; }
    void seed(std::uint64_t seed) override { rng_ = Rng(seed); }
    Vector reset() override;
    StepResult step(const Vector& action) override;
    // Bayes-optimal action of the exhaustive oracle at the shallowest history
    // ending in this state.
    Vector expert_action(const Vector& state) const override;
    nlohmann::json params() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<DiscreteBamdpEnv>(*this); }

    const DiscreteBamdp& model() const { return model_; }
    int true_model() const { return true_model_; }
    int action_index(const Vector& action) const;

  private:
    DiscreteBamdp model_;
    ActionBox box_;
    std::vector<int> optimal_action_;
    int state_ = 0, true_model_ = 0, t_ = 0;
    Rng rng_;
};

enum class Quality { random, medium, expert, medium_replay_mix };

Quality parse_quality(const std::string& name);
std::string quality_name(Quality q);

struct BehaviorSpec {
    Quality quality = Quality::medium;
    // Gaussian action noise, as a fraction of the box half-width, added to
    // the scripted controller (expert and medium).
    double noise_scale = 0.1;
    // Medium behavior: chance per step of a uniform random action instead of
    // the slowed expert action.
    double random_action_prob = 0.7;
    double medium_gain = 0.3;  // expert action scale used by medium behavior
};

// Chooses the behavior action for one step. Medium-replay mixtures select a
// quality per episode through `episode_quality`.
Vector behavior_action(const Env& env, const BehaviorSpec& spec, Quality episode_quality, const Vector& state,
                       Rng& rng);

struct DatasetInfo {
    std::string env;
    std::string quality;
    std::uint64_t seed = 0;
    std::size_t transitions = 0;
    std::size_t episodes = 0;  // complete episodes
    double behavior_mean_return = 0.0;
    double behavior_std_return = 0.0;
    nlohmann::json env_params;

    nlohmann::json to_json() const;
    static DatasetInfo from_json(const nlohmann::json& j);
};

struct GeneratedDataset {
    TransitionDataset data;
    DatasetInfo info;
};

// Rolls the behavior policy episode by episode until exactly n transitions
// are collected; the final episode may be cut short (and is then excluded
// from the return statistics).
GeneratedDataset generate_dataset(const Env& env, const BehaviorSpec& spec, std::size_t n, std::uint64_t seed);

struct EvalStats {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    std::vector<double> returns;
};

// Mean and spread of undiscounted episode returns.
EvalStats return_stats(const std::vector<double>& returns);

// Runs seeded episodes of pure policy inference (no search).
EvalStats evaluate_policy(const Env& env, const ActionSampler& policy, int episodes, std::uint64_t seed);

}  // namespace bamcts
