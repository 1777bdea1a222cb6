#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bamcts/net.hpp"

namespace bamcts {

struct Transition {
    Vector state;
    Vector action;
    double reward = 0.0;
    Vector next_state;
    bool done = false;
};

// Per-dimension affine normalization; std entries are floored at 1e-8.
struct Normalizer {
    Vector mean;
    Vector std;

    static Normalizer fit(const Matrix& columns);
    static Normalizer identity(Eigen::Index dim);
    Matrix normalize(const Matrix& x) const;
    Vector normalize(const Vector& x) const;
    Vector denormalize(const Vector& x) const;
};

class TransitionDataset {
  public:
    TransitionDataset() = default;
    TransitionDataset(int state_dim, int action_dim);

    int state_dim() const { return state_dim_; }
    int action_dim() const { return action_dim_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const std::vector<Transition>& records() const { return records_; }
    const Transition& operator[](std::size_t i) const { return records_[i]; }

    void add(Transition t);

    // Record i starts an episode if it is the first record or its predecessor is done.
    bool is_episode_start(std::size_t i) const;
    std::vector<std::size_t> episode_start_indices() const;

    // Undiscounted returns of the complete episodes (those whose last record is done).
    std::vector<double> episode_returns() const;

    Normalizer input_stats() const;   // over (s, a)
    Normalizer target_stats(bool learned_reward, bool predict_delta) const;

    // Binary format: "BAMD", u32 version, u32 state_dim, u32 action_dim,
    // u64 count, then per record f64 s[], a[], r, s'[], done.
    void save(std::ostream& out) const;
    static TransitionDataset load(std::istream& in);
    void save_file(const std::string& path) const;
    static TransitionDataset load_file(const std::string& path);

    // CSV with header s0..,a0..,r,sp0..,done.
    static TransitionDataset load_csv(std::istream& in);
    static TransitionDataset load_csv_file(const std::string& path);
    void save_csv(std::ostream& out) const;

  private:
    int state_dim_ = 0;
    int action_dim_ = 0;
    std::vector<Transition> records_;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

// Model input (s, a) and training target ([r,] s' or [r,] s' - s) layouts.
Vector model_input(const Vector& state, const Vector& action);

}  // namespace bamcts
