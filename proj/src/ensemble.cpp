#include "bamcts/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bamcts/errors.hpp"

namespace bamcts {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
// Below this total evidence (sum_j b_j l_j) the posterior is treated as degenerate.
const double kLogEvidenceFloor = std::log(1e-300);

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

bool is_simplex(std::span<const double> p, double tol) {
    if (p.empty()) return false;
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0) || !std::isfinite(x)) return false;
        sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
}

Belief::Belief(std::vector<double> probs) : probs_(std::move(probs)) {
    if (!is_simplex(probs_)) throw ContractError("belief is not a probability vector");
}

Belief uniform_prior(int members) {
    if (members <= 0) throw ConfigError("ensemble size must be positive");
    return Belief(std::vector<double>(members, 1.0 / members));
}

Ensemble::Ensemble(std::vector<Mlp> members, int state_dim, int action_dim, Normalizer input_norm,
                   Normalizer target_norm, bool predict_delta, RewardFn fixed_reward)
    : members_(std::move(members)),
      state_dim_(state_dim),
      action_dim_(action_dim),
      input_norm_(std::move(input_norm)),
      target_norm_(std::move(target_norm)),
      predict_delta_(predict_delta),
      fixed_reward_(std::move(fixed_reward)) {
    if (members_.empty()) throw ConfigError("an ensemble needs at least one member");
    const int in = state_dim_ + action_dim_;
    for (const auto& m : members_) {
        if (m.input_dim() != in || m.output_dim() != 2 * target_dim())
            throw ShapeError("ensemble member shape does not match (s, a) -> target layout");
    }
    if (input_norm_.mean.size() != in || target_norm_.mean.size() != target_dim())
        throw ShapeError("ensemble normalizer dimensions mismatch");
}

void Ensemble::check_dims(const Vector& state, const Vector& action) const {
    if (state.size() != state_dim_ || action.size() != action_dim_)
        throw ShapeError("state/action dimension mismatch for ensemble");
}

MemberPrediction Ensemble::predict(int i, const Vector& state, const Vector& action) const {
    check_dims(state, action);
    const auto head = forward_gaussian(members_.at(i), input_norm_.normalize(model_input(state, action)));
    MemberPrediction p{target_norm_.denormalize(head.mean), (head.std().array() * target_norm_.std.array()).matrix()};
    if (predict_delta_) p.mean.tail(state_dim_) += state;
    return p;
}

std::vector<MemberPrediction> Ensemble::predict_all(const Vector& state, const Vector& action) const {
    std::vector<MemberPrediction> out;
    out.reserve(members_.size());
    for (int i = 0; i < size(); ++i) out.push_back(predict(i, state, action));
    return out;
}

Vector Ensemble::target_of(double reward, const Vector& next_state) const {
    if (next_state.size() != state_dim_) throw ShapeError("next-state dimension mismatch for ensemble");
    if (!learned_reward()) return next_state;
    Vector t(target_dim());
    t << reward, next_state;
    return t;
}

void Ensemble::save(const std::string& dir) const {
    if (!learned_reward()) throw ConfigError("ensembles with a plugged-in reward function cannot be saved");
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format"] = "bamcts-ensemble";
    j["version"] = 1;
    j["members"] = size();
    j["state_dim"] = state_dim_;
    j["action_dim"] = action_dim_;
    j["predict_delta"] = predict_delta_;
    j["input_mean"] = to_std(input_norm_.mean);
    j["input_std"] = to_std(input_norm_.std);
    j["target_mean"] = to_std(target_norm_.mean);
    j["target_std"] = to_std(target_norm_.std);
    j["holdout_nll"] = holdout_nll;
    std::ofstream(std::filesystem::path(dir) / "ensemble.json") << j.dump(2) << '\n';
    for (int i = 0; i < size(); ++i)
        save_checkpoint_file((std::filesystem::path(dir) / ("member_" + std::to_string(i) + ".bin")).string(),
                             members_[i], "ensemble-member");
}

Ensemble Ensemble::load(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "ensemble.json");
    if (!in) throw DataError("cannot open ensemble manifest in " + dir);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("bad ensemble manifest: ") + ex.what());
    }
    const int k = j.at("members").get<int>();
    std::vector<Mlp> members;
    for (int i = 0; i < k; ++i) {
        auto [net, role] =
            load_checkpoint_file((std::filesystem::path(dir) / ("member_" + std::to_string(i) + ".bin")).string());
        if (role != "ensemble-member") throw DataError("checkpoint role is '" + role + "', expected ensemble-member");
        members.push_back(std::move(net));
    }
    Ensemble e(std::move(members), j.at("state_dim").get<int>(), j.at("action_dim").get<int>(),
               {from_json(j.at("input_mean")), from_json(j.at("input_std"))},
               {from_json(j.at("target_mean")), from_json(j.at("target_std"))}, j.at("predict_delta").get<bool>());
    if (j.contains("holdout_nll")) e.holdout_nll = j["holdout_nll"].get<std::vector<double>>();
    return e;
}

Ensemble fit_ensemble(const TransitionDataset& data, int members, const EnsembleTrainConfig& cfg, std::uint64_t seed) {
    if (data.empty()) throw ConfigError("cannot fit an ensemble on an empty dataset");
    if (members <= 0) throw ConfigError("ensemble size must be positive");
    if (cfg.epochs < 0 || cfg.batch_size <= 0) throw ConfigError("epochs and batch size must be positive");
    if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0)
        throw ConfigError("holdout fraction must lie in [0, 1)");

    // Shared holdout split.
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(derive_seed(seed, 0xdada));
    std::shuffle(order.begin(), order.end(), split_rng.engine());
    const auto n_hold = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(data.size()));
    const std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
    const std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
    if (train.size() < static_cast<std::size_t>(cfg.batch_size))
        throw ConfigError("dataset has fewer training records than the batch size");

    const int sd = data.state_dim(), ad = data.action_dim();
    const int td = sd + 1;
    TransitionDataset train_part(sd, ad);
    for (auto i : train) train_part.add(data[i]);
    const Normalizer in_norm = train_part.input_stats();
    const Normalizer out_norm = train_part.target_stats(true, cfg.predict_delta);

    auto columns = [&](const std::vector<std::size_t>& idx, Matrix& x, Matrix& y) {
        x.resize(sd + ad, idx.size());
        y.resize(td, idx.size());
        for (std::size_t c = 0; c < idx.size(); ++c) {
            const auto& r = data[idx[c]];
            x.col(c) = model_input(r.state, r.action);
            y(0, c) = r.reward;
            y.col(c).tail(sd) = cfg.predict_delta ? Vector(r.next_state - r.state) : r.next_state;
        }
        x = in_norm.normalize(x);
        y = out_norm.normalize(y);
    };
    Matrix x_train, y_train, x_hold, y_hold;
    columns(train, x_train, y_train);
    columns(hold, x_hold, y_hold);

    std::vector<int> sizes{sd + ad};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(2 * td);

    std::vector<Mlp> nets;
    for (int m = 0; m < members; ++m) {
        Mlp net = init_mlp(sizes, derive_seed(seed, 1000 + m), cfg.bounds);
        OptState opt(net, cfg.adam);
        Rng batch_rng(derive_seed(seed, 2000 + m));
        std::vector<Eigen::Index> perm(train.size());
        std::iota(perm.begin(), perm.end(), 0);
        Matrix xb, yb;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::shuffle(perm.begin(), perm.end(), batch_rng.engine());
            for (std::size_t start = 0; start + cfg.batch_size <= perm.size(); start += cfg.batch_size) {
                xb.resize(x_train.rows(), cfg.batch_size);
                yb.resize(y_train.rows(), cfg.batch_size);
                for (int c = 0; c < cfg.batch_size; ++c) {
                    xb.col(c) = x_train.col(perm[start + c]);
                    yb.col(c) = y_train.col(perm[start + c]);
                }
                train_step(net, opt, xb, loss::GaussianNll{yb});
            }
        }
        nets.push_back(std::move(net));
    }

    Ensemble e(std::move(nets), sd, ad, in_norm, out_norm, cfg.predict_delta);
    // Held-out NLL in data units: normalized NLL plus the log-Jacobian of the target scaling.
    const double log_scale = out_norm.std.array().log().sum();
    for (int m = 0; m < members; ++m) {
        double nll = std::numeric_limits<double>::quiet_NaN();
        if (x_hold.cols() > 0) nll = loss_value(e.member(m), x_hold, loss::GaussianNll{y_hold}) + log_scale;
        e.holdout_nll.push_back(nll);
    }
    return e;
}

double log_density(const MemberPrediction& pred, const Vector& target) {
    if (target.size() != pred.mean.size()) throw ShapeError("target dimension does not match prediction");
    const auto z = (target - pred.mean).array() / pred.std.array();
    return (-0.5 * z.square() - pred.std.array().log() - kHalfLog2Pi).sum();
}

double member_likelihood(const Ensemble& e, int i, const Vector& state, const Vector& action, double reward,
                         const Vector& next_state) {
    if (i < 0 || i >= e.size()) throw ShapeError("member index out of range");
    return std::exp(log_density(e.predict(i, state, action), e.target_of(reward, next_state)));
}

BeliefUpdate update_belief_log(const Belief& prior, std::span<const double> log_likelihoods) {
    if (log_likelihoods.size() != prior.size()) throw ShapeError("likelihood count does not match belief size");
    std::vector<double> log_post(prior.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < prior.size(); ++i) {
        log_post[i] = prior[i] > 0.0 ? std::log(prior[i]) + log_likelihoods[i] : -std::numeric_limits<double>::infinity();
        top = std::max(top, log_post[i]);
    }
    if (!std::isfinite(top)) return {prior, true};
    double sum = 0.0;
    for (double& x : log_post) {
        x = std::exp(x - top);
        sum += x;
    }
    if (top + std::log(sum) < kLogEvidenceFloor) return {prior, true};
    for (double& x : log_post) x /= sum;
    return {Belief(std::move(log_post)), false};
}

BeliefUpdate update_belief(const Belief& prior, const Ensemble& e, const Vector& state, const Vector& action,
                           double reward, const Vector& next_state) {
    if (static_cast<int>(prior.size()) != e.size()) throw ShapeError("belief size does not match ensemble");
    const Vector target = e.target_of(reward, next_state);
    std::vector<double> ll(e.size());
    for (int i = 0; i < e.size(); ++i) ll[i] = log_density(e.predict(i, state, action), target);
    return update_belief_log(prior, ll);
}

BamdpSample sample_bamdp_transition(const Ensemble& e, const Belief& b, const Vector& state, const Vector& action,
                                    std::span<const MemberPrediction> preds, Rng& rng) {
    if (static_cast<int>(b.size()) != e.size() || static_cast<int>(preds.size()) != e.size())
        throw ShapeError("belief/prediction count does not match ensemble");
    BamdpSample out;
    out.member = static_cast<int>(rng.categorical(b.span()));
    const auto& p = preds[out.member];
    Vector target(p.mean.size());
    for (Eigen::Index d = 0; d < target.size(); ++d) target[d] = p.mean[d] + p.std[d] * rng.normal();
    out.next_state = target.tail(e.state_dim());
    out.reward = e.learned_reward() ? target[0] : e.fixed_reward()(state, action, out.next_state);

    std::vector<double> ll(e.size());
    for (int i = 0; i < e.size(); ++i) ll[i] = log_density(preds[i], target);
    auto upd = update_belief_log(b, ll);
    out.belief = std::move(upd.belief);
    out.degenerate = upd.degenerate;
    return out;
}

BamdpSample sample_bamdp_transition(const Ensemble& e, const Belief& b, const Vector& state, const Vector& action,
                                    Rng& rng) {
    const auto preds = e.predict_all(state, action);
    return sample_bamdp_transition(e, b, state, action, preds, rng);
}

double mixture_variance(std::span<const MemberPrediction> preds, const Belief& b, bool include_reward,
                        bool learned_reward) {
    if (preds.size() != b.size()) throw ShapeError("prediction count does not match belief size");
    const Eigen::Index dim = preds.front().mean.size();
    const Eigen::Index first = (learned_reward && !include_reward) ? 1 : 0;
    double total = 0.0;
    for (Eigen::Index d = first; d < dim; ++d) {
        double mix_mean = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) mix_mean += b[i] * preds[i].mean[d];
        // sum_i b_i (sigma_i^2 + mu_i^2) - mu_bar^2, written in its centered form
        double var = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double dev = preds[i].mean[d] - mix_mean;
            var += b[i] * (preds[i].std[d] * preds[i].std[d] + dev * dev);
        }
        total += var;
    }
    return std::max(total, 0.0);
}

double penalized_reward(double reward, std::span<const MemberPrediction> preds, const Belief& b, double lambda,
                        bool include_reward, bool learned_reward) {
    if (!(lambda >= 0.0)) throw ConfigError("penalty coefficient must be non-negative");
    if (lambda == 0.0) return reward;
    return reward - lambda * std::sqrt(mixture_variance(preds, b, include_reward, learned_reward));
}

double penalized_reward(double reward, const Ensemble& e, const Belief& b, const Vector& state, const Vector& action,
                        double lambda, bool include_reward) {
    if (!(lambda >= 0.0)) throw ConfigError("penalty coefficient must be non-negative");
    if (lambda == 0.0) return reward;
    const auto preds = e.predict_all(state, action);
    return penalized_reward(reward, preds, b, lambda, include_reward, e.learned_reward());
}

PenalizedStep bamdp_step(const Ensemble& e, const Belief& b, const Vector& state, const Vector& action, double lambda,
                         bool include_reward, Rng& rng) {
    const auto preds = e.predict_all(state, action);
    auto s = sample_bamdp_transition(e, b, state, action, preds, rng);
    PenalizedStep out;
    out.reward = s.reward;
    out.penalized = penalized_reward(s.reward, preds, b, lambda, include_reward, e.learned_reward());
    out.next_state = std::move(s.next_state);
    out.belief = std::move(s.belief);
    out.degenerate = s.degenerate;
    return out;
}

}  // namespace bamcts
