#pragma once

// Small fully-connected networks with hand-written backprop, Gaussian output
// heads and an Adam optimizer. Batched calls take one sample per column.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace bamcts {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct LogStdBounds {
    double min = -5.0;
    double max = 2.0;
};

// tanh hidden layers, identity output. All parameters live in one flat vector
// laid out layer by layer as [W (column-major, out x in), b].
class Mlp {
  public:
    struct Tape {
        std::vector<Matrix> activations;  // [0] is the input batch
    };

    Mlp() = default;
    // All-zero parameters.
    explicit Mlp(std::vector<int> layer_sizes, LogStdBounds bounds = {});

    const std::vector<int>& layer_sizes() const { return sizes_; }
    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
    LogStdBounds bounds() const { return bounds_; }

    Eigen::Map<const Matrix> weight(int layer) const;
    Eigen::Map<Matrix> weight(int layer);
    Eigen::Map<const Vector> bias(int layer) const;
    Eigen::Map<Vector> bias(int layer);

    const Vector& params() const { return params_; }
    Vector& params() { return params_; }

    Matrix forward(const Matrix& inputs) const;
    Matrix forward(const Matrix& inputs, Tape& tape) const;
    Vector forward_one(const Vector& input) const;

    // Gradient of the parameters given dL/d(output). Optionally also dL/d(input).
    Vector backward(const Tape& tape, const Matrix& grad_output, Matrix* grad_input = nullptr) const;

    bool operator==(const Mlp& other) const;

  private:
    std::vector<int> sizes_;
    std::vector<Eigen::Index> offsets_;  // start of each layer's weights
    Vector params_;
    LogStdBounds bounds_;
};

Mlp init_mlp(std::vector<int> layer_sizes, std::uint64_t seed, LogStdBounds bounds = {});

struct GaussianHead {
    Vector mean;
    Vector log_std;

    Vector std() const { return log_std.array().exp().matrix(); }
};

// Output rows [0, d) are means, [d, 2d) raw log-stds which are clamped to the
// network's bounds.
GaussianHead forward_gaussian(const Mlp& net, const Vector& input);

struct GaussianBatch {
    Matrix mean;
    Matrix log_std;
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> inside;  // raw value within bounds
};
GaussianBatch split_gaussian(const Matrix& output, LogStdBounds bounds);

// Maps an unbounded pre-squash vector u into the box center + half_width * tanh(u).
struct TanhSquash {
    Vector center;
    Vector half_width;

    Vector apply(const Vector& u) const;
    Vector invert(const Vector& action) const;
    // log |d action / d u| summed over dimensions.
    double log_jacobian(const Vector& u) const;
};

namespace loss {

struct GaussianNll {
    Matrix targets;
};

struct SquaredError {
    Matrix targets;
};

// -sum_j w_j log pi(a_j | s) for a squashed Gaussian pi, per column.
struct CrossEntropyToWeights {
    std::vector<Matrix> actions;  // per sample: action_dim x support_size
    std::vector<Vector> weights;  // per sample: support_size
    TanhSquash squash;
};

// alpha * log pi(a~|s) - min(Q1, Q2)(s, a~) with a~ reparameterized through fixed noise.
struct ActorCritic {
    Matrix noise;  // action_dim x batch
    const Mlp* critic1 = nullptr;
    const Mlp* critic2 = nullptr;
    double temperature = 0.0;
    TanhSquash squash;
};

}  // namespace loss

using LossDescriptor =
    std::variant<loss::GaussianNll, loss::SquaredError, loss::CrossEntropyToWeights, loss::ActorCritic>;

// Mean loss over the batch columns.
double loss_value(const Mlp& net, const Matrix& inputs, const LossDescriptor& loss);
std::pair<double, Vector> loss_and_gradient(const Mlp& net, const Matrix& inputs, const LossDescriptor& loss);

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptState {
    AdamConfig config;
    std::int64_t step = 0;
    Vector first_moment;
    Vector second_moment;

    OptState() = default;
    explicit OptState(const Mlp& net, AdamConfig cfg = {});

    void apply(Vector& params, const Vector& grad);
};

// One Adam step on the mean batch gradient. Returns the pre-step loss.
double train_step(Mlp& net, OptState& opt, const Matrix& inputs, const LossDescriptor& loss);

// Polyak trail: target <- rate * online + (1 - rate) * target.
void soft_update(Mlp& target, const Mlp& online, double rate);

// Checkpoint: "BAMC", u32 version, role tag, layer sizes, clamp bounds, then
// every parameter as a little-endian f64 in layer order.
void save_checkpoint(std::ostream& out, const Mlp& net, const std::string& role = "");
std::pair<Mlp, std::string> load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Mlp& net, const std::string& role = "");
std::pair<Mlp, std::string> load_checkpoint_file(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace bamcts
