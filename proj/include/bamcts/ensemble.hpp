#pragma once

// Deep ensemble of Gaussian world models, the Bayesian belief over its
// members, the induced BAMDP transition and the uncertainty-penalized reward.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bamcts/dataset.hpp"
#include "bamcts/net.hpp"
#include "bamcts/rng.hpp"

namespace bamcts {

// Probability vector over ensemble members.
class Belief {
  public:
    static constexpr double kTolerance = 1e-9;

    Belief() = default;
    // Throws ContractError unless entries are non-negative and sum to 1 within kTolerance.
    explicit Belief(std::vector<double> probs);

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }
    std::span<const double> span() const { return probs_; }

    bool operator==(const Belief&) const = default;

  private:
    std::vector<double> probs_;
};

bool is_simplex(std::span<const double> p, double tol = Belief::kTolerance);

Belief uniform_prior(int members);

// Prediction of one member over the target layout [r, s'] (or [s'] when the
// reward function is fixed), in data units.
struct MemberPrediction {
    Vector mean;
    Vector std;
};

using RewardFn = std::function<double(const Vector& state, const Vector& action, const Vector& next_state)>;

struct EnsembleTrainConfig {
    int epochs = 20;
    int batch_size = 256;
    double holdout_fraction = 0.1;
    std::vector<int> hidden = {64, 64};
    AdamConfig adam{1e-3};
    LogStdBounds bounds{};
    bool predict_delta = true;
};

class Ensemble {
  public:
    Ensemble() = default;
    // Members map normalized (s, a) to a Gaussian head over the normalized target.
    // A non-empty fixed_reward means members predict s' only.
    Ensemble(std::vector<Mlp> members, int state_dim, int action_dim, Normalizer input_norm,
             Normalizer target_norm, bool predict_delta, RewardFn fixed_reward = {});

    int size() const { return static_cast<int>(members_.size()); }
    int state_dim() const { return state_dim_; }
    int action_dim() const { return action_dim_; }
    bool learned_reward() const { return !fixed_reward_; }
    bool predict_delta() const { return predict_delta_; }
    int target_dim() const { return state_dim_ + (learned_reward() ? 1 : 0); }

    const Mlp& member(int i) const { return members_.at(i); }
    const Normalizer& input_norm() const { return input_norm_; }
    const Normalizer& target_norm() const { return target_norm_; }
    const RewardFn& fixed_reward() const { return fixed_reward_; }

    MemberPrediction predict(int i, const Vector& state, const Vector& action) const;
    std::vector<MemberPrediction> predict_all(const Vector& state, const Vector& action) const;

    // Observed (r, s') laid out like the predictions.
    Vector target_of(double reward, const Vector& next_state) const;

    // Directory layout: ensemble.json + member_<i>.bin checkpoints.
    void save(const std::string& dir) const;
    static Ensemble load(const std::string& dir);

    std::vector<double> holdout_nll;  // filled by fit_ensemble

  private:
    void check_dims(const Vector& state, const Vector& action) const;

    std::vector<Mlp> members_;
    int state_dim_ = 0;
    int action_dim_ = 0;
    Normalizer input_norm_;
    Normalizer target_norm_;
    bool predict_delta_ = false;
    RewardFn fixed_reward_;
};

// Independent seeds and mini-batch orders per member; a shared seeded holdout split.
Ensemble fit_ensemble(const TransitionDataset& data, int members, const EnsembleTrainConfig& cfg,
                      std::uint64_t seed);

double log_density(const MemberPrediction& pred, const Vector& target);

// Density factor P_i(s'|s,a) R_i(r|s,a) of member i.
double member_likelihood(const Ensemble& e, int i, const Vector& state, const Vector& action, double reward,
                         const Vector& next_state);

struct BeliefUpdate {
    Belief belief;
    bool degenerate = false;  // all likelihoods underflowed; belief returned unchanged
};

// Posterior update from per-member log-likelihoods, computed with max subtraction.
BeliefUpdate update_belief_log(const Belief& prior, std::span<const double> log_likelihoods);

BeliefUpdate update_belief(const Belief& prior, const Ensemble& e, const Vector& state, const Vector& action,
                           double reward, const Vector& next_state);

struct BamdpSample {
    double reward = 0.0;
    Vector next_state;
    Belief belief;
    int member = 0;
    bool degenerate = false;
};

// Draws a member from the belief, an outcome from that member, then updates the belief.
BamdpSample sample_bamdp_transition(const Ensemble& e, const Belief& b, const Vector& state, const Vector& action,
                                    Rng& rng);
BamdpSample sample_bamdp_transition(const Ensemble& e, const Belief& b, const Vector& state, const Vector& action,
                                    std::span<const MemberPrediction> preds, Rng& rng);

// Trace of the belief-weighted Gaussian mixture covariance over the state
// dimensions, plus the reward dimension when include_reward and it is learned.
double mixture_variance(std::span<const MemberPrediction> preds, const Belief& b, bool include_reward,
                        bool learned_reward);

double penalized_reward(double reward, std::span<const MemberPrediction> preds, const Belief& b, double lambda,
                        bool include_reward, bool learned_reward);
double penalized_reward(double reward, const Ensemble& e, const Belief& b, const Vector& state, const Vector& action,
                        double lambda, bool include_reward = true);

// One BAMDP step with its penalized reward, sharing the member predictions.
struct PenalizedStep {
    double reward = 0.0;
    double penalized = 0.0;
    Vector next_state;
    Belief belief;
    bool degenerate = false;
};

PenalizedStep bamdp_step(const Ensemble& e, const Belief& b, const Vector& state, const Vector& action, double lambda,
                         bool include_reward, Rng& rng);

}  // namespace bamcts
