#pragma once

// Search-based policy iteration: actors roll out in the learned BAMDP and
// search at a random fraction of states, a learner fits the policy and value
// to the replayed results, and the true environment scores every epoch.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bamcts/dataset.hpp"
#include "bamcts/ensemble.hpp"
#include "bamcts/envs.hpp"
#include "bamcts/policy.hpp"
#include "bamcts/search.hpp"

namespace bamcts {

enum class Variant { ba_mbrl, ba_mcts, ba_mcts_sl };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

enum class StartFrom { any, initial };

struct TrainConfig {
    Variant variant = Variant::ba_mcts;
    // Search fraction; unset means 0 for BA-MBRL and 0.1 otherwise.
    std::optional<double> rho;
    int horizon = 5;  // H
    int epochs = 30;
    int rollouts_per_epoch = 512;
    int learner_steps = 200;
    int snapshot_interval = 50;  // E_l
    int batch_size = 256;
    int n_step = 5;
    double gamma = 0.99;
    double lambda = 1.0;
    bool penalty_includes_reward = true;
    int buffer_epochs = 5;  // N_SL
    int warmup_epochs = 0;  // N_P, BA-MCTS-SL only
    int eval_episodes = 10;
    EvalMode eval_mode = EvalMode::mean;
    StartFrom start_from = StartFrom::any;
    bool sequential = true;
    int workers = 1;
    std::vector<int> hidden = {64, 64};
    AdamConfig policy_adam{1e-3};
    AdamConfig value_adam{1e-3};
    SacConfig sac{};
    SearchConfig search{};
    std::uint64_t seed = 0;

    double effective_rho() const;
    // Copy of the search config with the discount and penalty settings of
    // this run applied.
    SearchConfig effective_search() const;

    // Throws ConfigError on inconsistent or out-of-range settings.
    void validate() const;

    nlohmann::json to_json() const;
    // Missing keys keep their defaults; unknown keys are rejected.
    static TrainConfig from_json(const nlohmann::json& j);

    // BAMCTS_SEED, when set, replaces the seed.
    void apply_environment();
};

std::string expand_rule_name(ExpandRule r);
ExpandRule parse_expand_rule(const std::string& name);
nlohmann::json search_config_to_json(const SearchConfig& c);
SearchConfig search_config_from_json(const nlohmann::json& j, SearchConfig base = {});

// Trajectory records in a fixed binary layout; used to compare rollout data.
void write_trajectory(std::ostream& out, const Trajectory& traj);

struct BufferItem {
    TrajectoryRecord record;
    double z = 0.0;  // n-step target, fixed at insertion
};

// Trajectories from the most recent `window` epochs. Appends and samples are
// linearizable; samples return copies.
class ReplayBuffer {
  public:
    ReplayBuffer(int window, int n_step, double gamma);

    // Drops every epoch at or below `epoch - window`.
    void begin_epoch(int epoch);
    void append(int epoch, const Trajectory& traj);

    std::size_t size() const;
    std::size_t searched_size() const;
    std::vector<int> epochs() const;  // epochs currently held, ascending

    // Uniform draws with replacement over all records, or over records that
    // carry search targets. Empty when the pool is empty.
    std::vector<BufferItem> sample(std::size_t count, Rng& rng) const;
    std::vector<BufferItem> sample_searched(std::size_t count, Rng& rng) const;

    // Blocks until the buffer holds a record or `stop` returns true.
    bool wait_nonempty(const std::function<bool()>& stop) const;

  private:
    struct Block {
        int epoch = 0;
        std::vector<BufferItem> items;
        std::vector<std::size_t> searched;  // indices into items
    };

    int window_;
    int n_step_;
    double gamma_;
    mutable std::mutex mutex_;
    mutable std::condition_variable nonempty_;
    std::deque<Block> blocks_;
};

// Read-only networks handed to actors.
struct Snapshot {
    GaussianPolicy policy;
    std::optional<ValueNet> value;       // BA-MCTS-SL
    std::optional<CriticPair> critics;   // actor-critic variants: V(s) = min Q(s, mean action)
    std::int64_t version = 0;            // learner steps when published

    double state_value(const Vector& state) const;
};

struct RolloutStats {
    int search_calls = 0;
    double penalty_sum = 0.0;  // sum of r - r~
    std::size_t steps = 0;
};

// One model rollout of cfg.horizon steps from a dataset state, searching with
// probability rho at each step. Draws exactly one uniform per step for the
// search decision whatever rho is.
Trajectory actor_rollout(const TrainConfig& cfg, double rho, const Snapshot& snap, const Ensemble& ensemble,
                         const TransitionDataset& data, const std::vector<std::size_t>& start_pool, Rng& rng,
                         RolloutStats* stats = nullptr);

// Concurrent-mode variant: re-reads the latest snapshot before every step.
Trajectory actor_rollout(const TrainConfig& cfg, double rho, const std::function<std::shared_ptr<const Snapshot>()>& latest,
                         const Ensemble& ensemble, const TransitionDataset& data,
                         const std::vector<std::size_t>& start_pool, Rng& rng, RolloutStats* stats = nullptr);

// Learner-owned mutable state.
struct LearnerState {
    GaussianPolicy policy;
    ValueNet value;
    SacLearner sac;
    OptState policy_opt;  // distillation optimizer
    OptState value_opt;
    std::int64_t steps = 0;

    static LearnerState create(const TrainConfig& cfg, int state_dim, const ActionBox& box);
    std::shared_ptr<const Snapshot> snapshot(bool use_value_net) const;
};

struct LearnerMetrics {
    std::optional<double> policy_loss;
    std::optional<double> value_loss;
    std::optional<double> critic_loss;
    int steps = 0;
};

// Runs `steps` learner updates. Distillation uses the cross-entropy and
// value losses; otherwise actor-critic on penalized transitions (the value
// net is fitted to z as well so search has a value once distillation starts).
// `publish` runs after every snapshot_interval updates.
LearnerMetrics learner_epoch(const TrainConfig& cfg, bool distill, int steps, const ReplayBuffer& buffer,
                             LearnerState& state, Rng& rng, const std::function<void()>& publish = {});

struct EpochRow {
    int epoch = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    std::optional<double> policy_loss, value_loss, critic_loss;
    int search_calls = 0;
    double mean_penalty = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRow& row);

struct TrainingResult {
    std::vector<EpochRow> rows;
    GaussianPolicy policy;
    ValueNet value;
    CriticPair critics;
    double final_mean_return = 0.0;  // mean over the final min(10, epochs) rows
};

struct TrainingHooks {
    // Called with each epoch's rollouts (sequential mode, in generation order).
    std::function<void(int epoch, const std::vector<Trajectory>&)> on_rollouts;
    std::function<void(const EpochRow&)> on_epoch;
};

TrainingResult run_training(const TrainConfig& cfg, const Ensemble& ensemble, const TransitionDataset& data,
                            const Env& eval_env, const TrainingHooks& hooks = {});

double final_window_mean(const std::vector<EpochRow>& rows, std::size_t window = 10);

}  // namespace bamcts
