#include "bamcts/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bamcts/ensemble.hpp"
#include "bamcts/errors.hpp"

namespace bamcts {

double max_gradient_error(const Mlp& net, const Matrix& inputs, const LossDescriptor& loss, double step,
                          double floor) {
    const Vector analytic = loss_and_gradient(net, inputs, loss).second;
    Mlp probe = net;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < probe.params().size(); ++i) {
        const double keep = probe.params()[i];
        probe.params()[i] = keep + step;
        const double up = loss_value(probe, inputs, loss);
        probe.params()[i] = keep - step;
        const double down = loss_value(probe, inputs, loss);
        probe.params()[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double scale = std::max({std::abs(fd), std::abs(analytic[i]), floor});
        worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
    }
    return worst;
}

SearchConfig discrete_recovery_config(const DiscreteBamdp& m, int simulations) {
    SearchConfig cfg;
    cfg.simulations = simulations;
    cfg.max_depth = m.horizon;
    cfg.gamma = m.gamma;
    cfg.alpha = 0.5;
    cfg.beta = 0.5;
    cfg.exploration = 1.0;
    cfg.root_noise = 0.0;  // the proposal already covers every action
    cfg.max_actions = m.num_actions;
    cfg.max_outcomes = 100000;
    cfg.lambda = 0.0;
    return cfg;
}

int continuous_discrete_root_action(const DiscreteBamdp& m, const SearchConfig& cfg, std::uint64_t seed) {
    DiscreteSearchModel model(m);
    const int actions = m.num_actions;
    SearchInputs in{[actions](const Vector&, Rng& rng) {
                        return Vector::Constant(1, static_cast<double>(rng.index(actions)));
                    },
                    [](const Vector&) { return 0.0; },
                    {Vector::Zero(1), Vector::Constant(1, actions - 1.0)}};
    Rng rng(seed);
    const SearchResult res = search(Vector::Constant(1, m.start_state), Belief(m.prior), cfg, in, model, rng);
    return static_cast<int>(res.actions[res.modal_action()][0]);
}

FuzzReport fuzz_widening(long total_simulations, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Mlp> members;
    for (int k = 0; k < 3; ++k) members.push_back(init_mlp({4, 16, 6}, derive_seed(seed, 10 + k)));
    const Ensemble ensemble(std::move(members), 2, 2, Normalizer::identity(4), Normalizer::identity(3), true);
    const ActionBox box = ActionBox::symmetric(2, 1.0);
    SearchInputs in{[&box](const Vector&, Rng& r) { return box.sample_uniform(r); },
                    [](const Vector& s) { return 0.1 * s.sum(); }, box};
    static constexpr double kExponents[] = {0.3, 0.5, 0.8};
    static constexpr int kActionCaps[] = {5, 10, 20};
    static constexpr int kOutcomeCaps[] = {1, 5};
    static constexpr ExpandRule kRules[] = {ExpandRule::parent_visited, ExpandRule::edge_visited,
                                            ExpandRule::child_visited};
    FuzzReport report;
    while (report.simulations < total_simulations) {
        SearchConfig cfg;
        cfg.alpha = kExponents[rng.index(3)];
        cfg.beta = kExponents[rng.index(3)];
        cfg.max_actions = kActionCaps[rng.index(3)];
        cfg.max_outcomes = kOutcomeCaps[rng.index(2)];
        cfg.simulations = 20 + static_cast<int>(rng.index(181));
        cfg.max_depth = 1 + static_cast<int>(rng.index(6));
        cfg.expand_rule = kRules[rng.index(3)];
        cfg.root_noise = rng.uniform();
        cfg.lambda = rng.uniform(0.0, 2.0);
        cfg.retain_tree = true;
        Vector root(2);
        root << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
        const SearchResult res = search(root, uniform_prior(3), cfg, in, ensemble, rng);
        for (const auto& v : audit_tree(*res.tree, cfg)) {
            std::ostringstream msg;
            msg << "search " << report.searches << " (alpha " << cfg.alpha << ", beta " << cfg.beta << ", n_a "
                << cfg.max_actions << ", n_s " << cfg.max_outcomes << "): " << v;
            report.violations.push_back(msg.str());
        }
        double psum = 0.0;
        for (double p : res.policy) psum += p;
        if (std::abs(psum - 1.0) > 1e-9) report.violations.push_back("search policy does not sum to 1");
        ++report.searches;
        report.simulations += cfg.simulations;
    }
    return report;
}

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
    return m;
}

// One random instance of every loss descriptor; returns (name, max error).
std::vector<std::pair<std::string, double>> gradient_suite(std::uint64_t seed) {
    Rng rng(seed);
    const int batch = 4;
    const Matrix x = random_matrix(3, batch, rng);
    std::vector<std::pair<std::string, double>> out;

    const Mlp gauss = init_mlp({3, 8, 8, 4}, derive_seed(seed, 1));
    out.emplace_back("gaussian-nll",
                     max_gradient_error(gauss, x, loss::GaussianNll{random_matrix(2, batch, rng)}));

    const Mlp reg = init_mlp({3, 8, 2}, derive_seed(seed, 2));
    out.emplace_back("squared-error", max_gradient_error(reg, x, loss::SquaredError{random_matrix(2, batch, rng)}));

    const ActionBox box = ActionBox::symmetric(2, 1.5);
    const Mlp policy = init_mlp({3, 8, 4}, derive_seed(seed, 3));
    loss::CrossEntropyToWeights ce;
    ce.squash = box.squash();
    for (int k = 0; k < batch; ++k) {
        Matrix acts(2, 3);
        for (int j = 0; j < 3; ++j) acts.col(j) = box.clip(0.9 * box.sample_uniform(rng));
        Vector w(3);
        for (int j = 0; j < 3; ++j) w[j] = rng.uniform(0.1, 1.0);
        ce.actions.push_back(acts);
        ce.weights.push_back(w / w.sum());
    }
    out.emplace_back("cross-entropy-to-weights", max_gradient_error(policy, x, ce));

    const Mlp q1 = init_mlp({5, 8, 1}, derive_seed(seed, 4));
    const Mlp q2 = init_mlp({5, 8, 1}, derive_seed(seed, 5));
    loss::ActorCritic ac{random_matrix(2, batch, rng), &q1, &q2, 0.3, box.squash()};
    out.emplace_back("actor-critic", max_gradient_error(policy, x, ac));
    return out;
}

}  // namespace

std::string status_name(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::skipped: return "skipped";
    }
    return "?";
}

nlohmann::json checks_to_json(const std::vector<CheckRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) j.push_back({{"check", r.name}, {"status", status_name(r.status)}, {"detail", r.detail}});
    return j;
}

std::vector<CheckRow> run_verification(const VerifyOptions& opt) {
    std::vector<CheckRow> rows;

    // Root sampling reproduces the exact posterior at every short history.
    {
        CheckRow row{"root-sampling-posterior", CheckStatus::pass, ""};
        double max_tv = 0.0;
        bool underpowered = false, failed = false;
        const int A = opt.two_model.num_actions;
        for (int a0 = 0; a0 < A; ++a0)
            for (int a1 = 0; a1 < A; ++a1) {
                const auto check = check_root_sampling(opt.two_model, {a0, a1}, opt.samples,
                                                       derive_seed(opt.seed, 100 + a0 * A + a1));
                max_tv = std::max(max_tv, check.max_tv);
                underpowered = underpowered || check.underpowered;
                failed = failed || !check.passed;
            }
        std::ostringstream d;
        d << "max TV " << max_tv << " (tolerance 0.02)";
        if (failed) {
            row.status = CheckStatus::fail;
        } else if (underpowered) {
            row.status = CheckStatus::skipped;
            d << "; underpowered at " << opt.samples << " samples";
        }
        row.detail = d.str();
        rows.push_back(row);
    }

    // Exhaustive oracle on the bandit.
    const OracleTree oracle = bayes_optimal_tree(opt.bandit, opt.bandit.horizon);
    const auto& optimal = oracle.root().optimal_actions;
    auto is_optimal = [&](int a) { return std::find(optimal.begin(), optimal.end(), a) != optimal.end(); };
    {
        std::ostringstream d;
        d << "V* " << oracle.root().value << ", optimal root action " << (optimal.empty() ? -1 : optimal.front());
        rows.push_back({"bayes-optimal-oracle", CheckStatus::pass, d.str()});
    }
    {
        int hits = 0;
        for (int r = 0; r < opt.recovery_runs; ++r) {
            Rng rng(derive_seed(opt.seed, 200 + r));
            const auto res = bamcp_search(opt.bandit, opt.bandit.start_state, opt.bandit.prior,
                                          opt.recovery_simulations, opt.bandit.horizon, 1.0, {}, rng);
            hits += is_optimal(res.action);
        }
        const bool ok = hits >= 0.95 * opt.recovery_runs;
        rows.push_back({"bamcp-recovers-optimal-action", ok ? CheckStatus::pass : CheckStatus::fail,
                        std::to_string(hits) + "/" + std::to_string(opt.recovery_runs) + " runs"});
    }
    {
        const SearchConfig cfg = discrete_recovery_config(opt.bandit, opt.recovery_simulations);
        int hits = 0;
        for (int r = 0; r < opt.recovery_runs; ++r)
            hits += is_optimal(continuous_discrete_root_action(opt.bandit, cfg, derive_seed(opt.seed, 300 + r)));
        const bool ok = hits >= 0.95 * opt.recovery_runs;
        rows.push_back({"continuous-search-recovers-optimal-action", ok ? CheckStatus::pass : CheckStatus::fail,
                        std::to_string(hits) + "/" + std::to_string(opt.recovery_runs) + " runs"});
    }
    {
        const FuzzReport fr = fuzz_widening(opt.fuzz_simulations, derive_seed(opt.seed, 400));
        std::string d = std::to_string(fr.searches) + " searches, " + std::to_string(fr.simulations) +
                        " simulations, " + std::to_string(fr.violations.size()) + " violations";
        if (!fr.violations.empty()) d += "; first: " + fr.violations.front();
        rows.push_back({"widening-invariants", fr.violations.empty() ? CheckStatus::pass : CheckStatus::fail, d});
    }
    {
        double worst = 0.0;
        std::string worst_name;
        for (int s = 0; s < opt.gradient_seeds; ++s)
            for (const auto& [name, err] : gradient_suite(derive_seed(opt.seed, 500 + s)))
                if (err > worst) {
                    worst = err;
                    worst_name = name;
                }
        std::ostringstream d;
        d << "max relative error " << worst << (worst_name.empty() ? "" : " (" + worst_name + ")")
          << ", tolerance 1e-4";
        rows.push_back({"loss-gradients", worst <= 1e-4 ? CheckStatus::pass : CheckStatus::fail, d.str()});
    }
    return rows;
}

}  // namespace bamcts
