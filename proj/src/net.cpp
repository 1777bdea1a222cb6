#include "bamcts/net.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bamcts/binary_io.hpp"
#include "bamcts/errors.hpp"
#include "bamcts/rng.hpp"

namespace bamcts {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(u)^2), stable for large |u|.
double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

void check_finite_input(const Matrix& inputs) {
    if (!inputs.allFinite()) throw NumericError("non-finite network input");
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, LogStdBounds bounds) : sizes_(std::move(layer_sizes)), bounds_(bounds) {
    if (sizes_.size() < 2) throw ConfigError("an MLP needs at least an input and an output layer");
    for (int s : sizes_)
        if (s <= 0) throw ConfigError("layer sizes must be positive");
    if (!(bounds_.min < bounds_.max)) throw ConfigError("log-std bounds must satisfy min < max");
    Eigen::Index total = 0;
    for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
        offsets_.push_back(total);
        total += static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
    }
    params_ = Vector::Zero(total);
}

Eigen::Map<const Matrix> Mlp::weight(int layer) const {
    return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<Matrix> Mlp::weight(int layer) {
    return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<const Vector> Mlp::bias(int layer) const {
    return {params_.data() + offsets_[layer] + Eigen::Index(sizes_[layer + 1]) * sizes_[layer], sizes_[layer + 1]};
}
Eigen::Map<Vector> Mlp::bias(int layer) {
    return {params_.data() + offsets_[layer] + Eigen::Index(sizes_[layer + 1]) * sizes_[layer], sizes_[layer + 1]};
}

Matrix Mlp::forward(const Matrix& inputs) const {
    if (inputs.rows() != input_dim())
        throw ShapeError("MLP input has " + std::to_string(inputs.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
    Matrix a = inputs;
    for (int l = 0; l < num_layers(); ++l) {
        Matrix z = weight(l) * a;
        z.colwise() += bias(l);
        if (l + 1 < num_layers())
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
    }
    return a;
}

Matrix Mlp::forward(const Matrix& inputs, Tape& tape) const {
    if (inputs.rows() != input_dim())
        throw ShapeError("MLP input has " + std::to_string(inputs.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
    tape.activations.clear();
    tape.activations.reserve(num_layers() + 1);
    tape.activations.push_back(inputs);
    for (int l = 0; l < num_layers(); ++l) {
        Matrix z = weight(l) * tape.activations.back();
        z.colwise() += bias(l);
        if (l + 1 < num_layers()) z = z.array().tanh().matrix();
        tape.activations.push_back(std::move(z));
    }
    return tape.activations.back();
}

Vector Mlp::forward_one(const Vector& input) const {
    if (input.size() != input_dim())
        throw ShapeError("MLP input has size " + std::to_string(input.size()) + ", expected " +
                         std::to_string(input_dim()));
    Vector a = input;
    for (int l = 0; l < num_layers(); ++l) {
        Vector z = weight(l) * a + bias(l);
        if (l + 1 < num_layers())
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
    }
    return a;
}

Vector Mlp::backward(const Tape& tape, const Matrix& grad_output, Matrix* grad_input) const {
    Vector grad = Vector::Zero(params_.size());
    Matrix delta = grad_output;
    for (int l = num_layers() - 1; l >= 0; --l) {
        const Matrix& a_in = tape.activations[l];
        Eigen::Map<Matrix>(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]).noalias() = delta * a_in.transpose();
        Eigen::Map<Vector>(grad.data() + offsets_[l] + Eigen::Index(sizes_[l + 1]) * sizes_[l], sizes_[l + 1]) =
            delta.rowwise().sum();
        if (l > 0) {
            Matrix back = weight(l).transpose() * delta;
            delta = (back.array() * (1.0 - a_in.array().square())).matrix();
        } else if (grad_input != nullptr) {
            *grad_input = weight(0).transpose() * delta;
        }
    }
    return grad;
}

bool Mlp::operator==(const Mlp& other) const {
    return sizes_ == other.sizes_ && bounds_.min == other.bounds_.min && bounds_.max == other.bounds_.max &&
           params_.size() == other.params_.size() && (params_.array() == other.params_.array()).all();
}

Mlp init_mlp(std::vector<int> layer_sizes, std::uint64_t seed, LogStdBounds bounds) {
    Mlp net(std::move(layer_sizes), bounds);
    Rng rng(seed);
    for (int l = 0; l < net.num_layers(); ++l) {
        auto w = net.weight(l);
        const double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
    }
    return net;
}

GaussianBatch split_gaussian(const Matrix& output, LogStdBounds bounds) {
    if (output.rows() % 2 != 0) throw ShapeError("Gaussian head needs an even output size");
    const Eigen::Index d = output.rows() / 2;
    GaussianBatch g;
    g.mean = output.topRows(d);
    const auto raw = output.bottomRows(d).array();
    g.inside = (raw >= bounds.min) && (raw <= bounds.max);
    g.log_std = raw.max(bounds.min).min(bounds.max).matrix();
    return g;
}

GaussianHead forward_gaussian(const Mlp& net, const Vector& input) {
    if (!input.allFinite()) throw NumericError("non-finite network input");
    if (net.output_dim() % 2 != 0) throw ShapeError("Gaussian head needs an even output size");
    const Vector out = net.forward_one(input);
    const Eigen::Index d = out.size() / 2;
    const auto b = net.bounds();
    return {out.head(d), out.tail(d).array().max(b.min).min(b.max).matrix()};
}

Vector TanhSquash::apply(const Vector& u) const {
    return center + (half_width.array() * u.array().tanh()).matrix();
}

Vector TanhSquash::invert(const Vector& action) const {
    constexpr double kEdge = 1.0 - 1e-6;
    Vector ratio = ((action - center).array() / half_width.array()).max(-kEdge).min(kEdge).matrix();
    return ratio.array().atanh().matrix();
}

double TanhSquash::log_jacobian(const Vector& u) const {
    double total = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) total += std::log(half_width[i]) + log_one_minus_tanh_sq(u[i]);
    return total;
}

namespace {

// Each evaluator returns the batch-mean loss and, if grad != nullptr, fills
// dL/d(output) (already divided by the batch size).
double evaluate(const Mlp& net, const Matrix& /*inputs*/, const Matrix& out, const loss::GaussianNll& l,
                Matrix* grad) {
    if (l.targets.rows() * 2 != out.rows() || l.targets.cols() != out.cols())
        throw ShapeError("gaussian-nll targets do not match network output");
    const auto g = split_gaussian(out, net.bounds());
    const double n = static_cast<double>(out.cols());
    const Eigen::ArrayXXd inv_std = (-g.log_std.array()).exp();
    const Eigen::ArrayXXd z = (l.targets - g.mean).array() * inv_std;
    const double total = (0.5 * z.square() + g.log_std.array() + kHalfLog2Pi).sum();
    if (grad != nullptr) {
        const Eigen::Index d = g.mean.rows();
        grad->resize(out.rows(), out.cols());
        grad->topRows(d) = (-z * inv_std / n).matrix();
        grad->bottomRows(d) = ((1.0 - z.square()) * g.inside.cast<double>() / n).matrix();
    }
    return total / n;
}

double evaluate(const Mlp&, const Matrix&, const Matrix& out, const loss::SquaredError& l, Matrix* grad) {
    if (l.targets.rows() != out.rows() || l.targets.cols() != out.cols())
        throw ShapeError("squared-error targets do not match network output");
    const double n = static_cast<double>(out.cols());
    const Matrix diff = out - l.targets;
    if (grad != nullptr) *grad = 2.0 * diff / n;
    return diff.squaredNorm() / n;
}

double evaluate(const Mlp& net, const Matrix&, const Matrix& out, const loss::CrossEntropyToWeights& l, Matrix* grad) {
    const Eigen::Index batch = out.cols();
    if (static_cast<Eigen::Index>(l.actions.size()) != batch || static_cast<Eigen::Index>(l.weights.size()) != batch)
        throw ShapeError("cross-entropy support count does not match batch size");
    const auto g = split_gaussian(out, net.bounds());
    const Eigen::Index d = g.mean.rows();
    const double n = static_cast<double>(batch);
    if (grad != nullptr) grad->setZero(out.rows(), out.cols());
    double total = 0.0;
    for (Eigen::Index k = 0; k < batch; ++k) {
        const Matrix& acts = l.actions[k];
        const Vector& w = l.weights[k];
        if (acts.cols() == 0 || acts.cols() != w.size()) throw DataError("empty or mismatched action support");
        if (acts.rows() != d) throw ShapeError("support action dimension does not match policy head");
        const Vector mu = g.mean.col(k);
        const Vector log_std = g.log_std.col(k);
        const Vector inv_std = (-log_std.array()).exp();
        for (Eigen::Index j = 0; j < acts.cols(); ++j) {
            const Vector u = l.squash.invert(acts.col(j));
            const Vector z = ((u - mu).array() * inv_std.array()).matrix();
            const double log_density =
                (-0.5 * z.array().square() - log_std.array() - kHalfLog2Pi).sum() - l.squash.log_jacobian(u);
            total -= w[j] * log_density;
            if (grad != nullptr) {
                grad->col(k).head(d) -= (w[j] / n) * (z.array() * inv_std.array()).matrix();
                grad->col(k).tail(d) -=
                    (w[j] / n) * ((z.array().square() - 1.0) * g.inside.col(k).cast<double>()).matrix();
            }
        }
    }
    return total / n;
}

double evaluate(const Mlp& net, const Matrix& inputs, const Matrix& out, const loss::ActorCritic& l, Matrix* grad) {
    if (l.critic1 == nullptr || l.critic2 == nullptr) throw ConfigError("actor-critic loss needs two critics");
    const auto g = split_gaussian(out, net.bounds());
    const Eigen::Index d = g.mean.rows();
    const Eigen::Index batch = out.cols();
    if (l.noise.rows() != d || l.noise.cols() != batch) throw ShapeError("actor-critic noise shape mismatch");
    const double n = static_cast<double>(batch);

    const Matrix std_dev = g.log_std.array().exp().matrix();
    const Matrix u = g.mean + (std_dev.array() * l.noise.array()).matrix();
    Matrix actions(d, batch);
    for (Eigen::Index k = 0; k < batch; ++k) actions.col(k) = l.squash.apply(u.col(k));

    Matrix critic_in(inputs.rows() + d, batch);
    critic_in.topRows(inputs.rows()) = inputs;
    critic_in.bottomRows(d) = actions;
    Mlp::Tape tape1, tape2;
    const Matrix q1 = l.critic1->forward(critic_in, tape1);
    const Matrix q2 = l.critic2->forward(critic_in, tape2);

    double total = 0.0;
    Matrix pick1 = Matrix::Zero(1, batch), pick2 = Matrix::Zero(1, batch);
    for (Eigen::Index k = 0; k < batch; ++k) {
        const Vector uk = u.col(k);
        const double log_density = (-0.5 * l.noise.col(k).array().square() - g.log_std.col(k).array() - kHalfLog2Pi)
                                       .sum() -
                                   l.squash.log_jacobian(uk);
        const bool first = q1(0, k) <= q2(0, k);
        const double q = first ? q1(0, k) : q2(0, k);
        (first ? pick1 : pick2)(0, k) = 1.0;
        total += l.temperature * log_density - q;
    }
    if (grad != nullptr) {
        Matrix gin1, gin2;
        l.critic1->backward(tape1, pick1, &gin1);
        l.critic2->backward(tape2, pick2, &gin2);
        const Matrix dq_da = (gin1 + gin2).bottomRows(d);
        grad->resize(out.rows(), batch);
        for (Eigen::Index k = 0; k < batch; ++k) {
            for (Eigen::Index i = 0; i < d; ++i) {
                const double t = std::tanh(u(i, k));
                const double da_du = l.squash.half_width[i] * (1.0 - t * t);
                // d/du of [alpha * log pi - Q]
                const double dl_du = l.temperature * 2.0 * t - dq_da(i, k) * da_du;
                const double du_dlogstd = std_dev(i, k) * l.noise(i, k);
                (*grad)(i, k) = dl_du / n;
                (*grad)(d + i, k) =
                    g.inside(i, k) ? (-l.temperature + dl_du * du_dlogstd) / n : 0.0;
            }
        }
    }
    return total / n;
}

double dispatch(const Mlp& net, const Matrix& inputs, const Matrix& out, const LossDescriptor& loss, Matrix* grad) {
    return std::visit([&](const auto& l) { return evaluate(net, inputs, out, l, grad); }, loss);
}

}  // namespace

double loss_value(const Mlp& net, const Matrix& inputs, const LossDescriptor& loss) {
    check_finite_input(inputs);
    return dispatch(net, inputs, net.forward(inputs), loss, nullptr);
}

std::pair<double, Vector> loss_and_gradient(const Mlp& net, const Matrix& inputs, const LossDescriptor& loss) {
    if (inputs.cols() == 0) throw ConfigError("empty training batch");
    check_finite_input(inputs);
    Mlp::Tape tape;
    const Matrix out = net.forward(inputs, tape);
    Matrix grad_out;
    const double value = dispatch(net, inputs, out, loss, &grad_out);
    Vector grad = net.backward(tape, grad_out);
    return {value, std::move(grad)};
}

OptState::OptState(const Mlp& net, AdamConfig cfg)
    : config(cfg), first_moment(Vector::Zero(net.params().size())), second_moment(Vector::Zero(net.params().size())) {}

void OptState::apply(Vector& params, const Vector& grad) {
    if (first_moment.size() != params.size()) {
        first_moment = Vector::Zero(params.size());
        second_moment = Vector::Zero(params.size());
    }
    ++step;
    first_moment = config.beta1 * first_moment + (1.0 - config.beta1) * grad;
    second_moment = config.beta2 * second_moment + (1.0 - config.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    params.array() -= config.learning_rate * (first_moment.array() / c1) /
                      ((second_moment.array() / c2).sqrt() + config.epsilon);
}

double train_step(Mlp& net, OptState& opt, const Matrix& inputs, const LossDescriptor& loss) {
    auto [value, grad] = loss_and_gradient(net, inputs, loss);
    if (!std::isfinite(value)) throw NumericError("non-finite loss " + std::to_string(value));
    if (!grad.allFinite()) {
        Eigen::Index bad = 0;
        while (bad < grad.size() && std::isfinite(grad[bad])) ++bad;
        throw NumericError("non-finite gradient at parameter " + std::to_string(bad) + " (loss " +
                           std::to_string(value) + ")");
    }
    opt.apply(net.params(), grad);
    return value;
}

void soft_update(Mlp& target, const Mlp& online, double rate) {
    if (target.params().size() != online.params().size()) throw ShapeError("soft update between different shapes");
    target.params() = rate * online.params() + (1.0 - rate) * target.params();
}

void save_checkpoint(std::ostream& out, const Mlp& net, const std::string& role) {
    io::write_magic(out, "BAMC");
    io::write_u32(out, kCheckpointVersion);
    io::write_string(out, role);
    io::write_u32(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
    for (int s : net.layer_sizes()) io::write_u32(out, static_cast<std::uint32_t>(s));
    io::write_f64(out, net.bounds().min);
    io::write_f64(out, net.bounds().max);
    io::write_u64(out, static_cast<std::uint64_t>(net.params().size()));
    for (Eigen::Index i = 0; i < net.params().size(); ++i) io::write_f64(out, net.params()[i]);
}

std::pair<Mlp, std::string> load_checkpoint(std::istream& in) {
    io::expect_magic(in, "BAMC");
    const auto version = io::read_u32(in);
    if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
    std::string role = io::read_string(in);
    const auto n_sizes = io::read_u32(in);
    if (n_sizes < 2 || n_sizes > 64) throw DataError("implausible layer count in checkpoint");
    std::vector<int> sizes(n_sizes);
    for (auto& s : sizes) s = static_cast<int>(io::read_u32(in));
    LogStdBounds bounds;
    bounds.min = io::read_f64(in);
    bounds.max = io::read_f64(in);
    Mlp net(sizes, bounds);
    const auto count = io::read_u64(in);
    if (count != static_cast<std::uint64_t>(net.params().size()))
        throw DataError("checkpoint parameter count does not match layer sizes");
    for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] = io::read_f64(in);
    return {std::move(net), std::move(role)};
}

void save_checkpoint_file(const std::string& path, const Mlp& net, const std::string& role) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    save_checkpoint(out, net, role);
}

std::pair<Mlp, std::string> load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return load_checkpoint(in);
}

}  // namespace bamcts
