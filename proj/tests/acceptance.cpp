// Acceptance harness: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bamcts/discrete_bamdp.hpp"
#include "bamcts/ensemble.hpp"
#include "bamcts/envs.hpp"
#include "bamcts/iteration.hpp"
#include "bamcts/policy.hpp"
#include "bamcts/search.hpp"
#include "bamcts/verify.hpp"

using namespace bamcts;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;
    std::function<Verdict()> run;
};

std::string fmt(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// ---------------------------------------------------------------- 1. belief exactness

Verdict belief_exactness() {
    Rng rng(101);
    const int k_members = 3, sd = 2, ad = 1, td = 1 + sd;
    std::vector<Mlp> members;
    for (int k = 0; k < k_members; ++k) {
        Mlp m({sd + ad, 2 * td});
        for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params()[i] = rng.uniform(-0.8, 0.8);
        // keep raw log-stds well inside the clamp
        m.bias(0).tail(td).setConstant(rng.uniform(-1.0, 0.0));
        members.push_back(m);
    }
    const Ensemble e(members, sd, ad, Normalizer::identity(sd + ad), Normalizer::identity(td), false);

    // independent member log-likelihood from the raw linear layer
    auto loglik = [&](int k, const Vector& s, const Vector& a, double r, const Vector& sp) {
        Vector x(sd + ad);
        x << s, a;
        const Vector out = members[k].weight(0) * x + members[k].bias(0);
        Vector y(td);
        y << r, sp;
        double ll = 0.0;
        for (int d = 0; d < td; ++d) {
            const double log_std = std::clamp(out[td + d], -5.0, 2.0);
            const double z = (y[d] - out[d]) / std::exp(log_std);
            ll += -0.5 * z * z - log_std - kHalfLog2Pi;
        }
        return ll;
    };

    // observations stay within reach of the mixture so the evidence never hits the
    // underflow floor, where the belief is deliberately held instead of updated
    double worst = 0.0;
    int degenerate = 0;
    const int trials = 2000;
    for (int trial = 0; trial < trials; ++trial) {
        Belief b = uniform_prior(k_members);
        std::vector<double> logpost(k_members, std::log(1.0 / k_members));
        Vector s = Vector::Random(sd);
        // one generating member per sequence, with every tenth sequence drawn wider than its noise
        const int source = static_cast<int>(rng.index(k_members));
        for (int t = 0; t < 5; ++t) {
            const Vector a = Vector::Random(ad);
            const MemberPrediction p = e.predict(source, s, a);
            const double spread = trial % 10 == 0 ? 2.5 : 1.0;
            double r = p.mean[0] + spread * p.std[0] * rng.normal();
            Vector sp(sd);
            for (int d = 0; d < sd; ++d) sp[d] = p.mean[1 + d] + spread * p.std[1 + d] * rng.normal();
            const BeliefUpdate u = update_belief(b, e, s, a, r, sp);
            degenerate += u.degenerate;
            b = u.belief;
            for (int k = 0; k < k_members; ++k) logpost[k] += loglik(k, s, a, r, sp);
            s = sp;
        }
        const double mx = *std::max_element(logpost.begin(), logpost.end());
        double z = 0.0;
        for (double l : logpost) z += std::exp(l - mx);
        for (int k = 0; k < k_members; ++k) worst = std::max(worst, std::abs(b[k] - std::exp(logpost[k] - mx) / z));
    }
    return {worst <= 1e-9 && degenerate == 0, fmt(trials) + " sequences, max |b - brute force| " + fmt(worst) +
                                                  " (tolerance 1e-9), " + fmt(degenerate) + " degenerate updates"};
}

// ---------------------------------------------------------------- 2. penalty oracle

double closed_form_variance(const std::vector<MemberPrediction>& preds, const std::vector<double>& b) {
    double total = 0.0;
    for (Eigen::Index d = 0; d < preds[0].mean.size(); ++d) {
        double second = 0.0, first = 0.0;
        for (std::size_t k = 0; k < preds.size(); ++k) {
            second += b[k] * (preds[k].std[d] * preds[k].std[d] + preds[k].mean[d] * preds[k].mean[d]);
            first += b[k] * preds[k].mean[d];
        }
        total += second - first * first;
    }
    return total;
}

MemberPrediction pred(std::initializer_list<double> mean, std::initializer_list<double> std) {
    MemberPrediction p;
    p.mean = Eigen::Map<const Vector>(std::data(mean), static_cast<Eigen::Index>(mean.size()));
    p.std = Eigen::Map<const Vector>(std::data(std), static_cast<Eigen::Index>(std.size()));
    return p;
}

Verdict penalty_oracle() {
    struct Case {
        std::vector<MemberPrediction> preds;
        std::vector<double> b;
        double lambda;
    };
    const std::vector<Case> cases = {
        {{pred({0.0}, {1.0}), pred({2.0}, {1.0})}, {0.5, 0.5}, 1.0},  // variance 2
        {{pred({1.0, 2.0}, {0.5, 0.1}), pred({1.0, 2.0}, {0.5, 0.1})}, {0.3, 0.7}, 2.0},
        {{pred({0.5, -1.0, 3.0}, {0.2, 0.3, 0.4}), pred({-0.5, 1.0, 2.0}, {0.1, 0.6, 0.2}),
          pred({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0})},
         {0.2, 0.5, 0.3},
         0.7},
        {{pred({4.0}, {0.01}), pred({-4.0}, {0.01})}, {1.0, 0.0}, 1.0},
    };
    double worst_exact = 0.0;
    for (const Case& c : cases) {
        const Belief b(c.b);
        const double expect_var = closed_form_variance(c.preds, c.b);
        worst_exact = std::max(worst_exact, std::abs(mixture_variance(c.preds, b, true, true) - expect_var));
        const double r = 0.25;
        worst_exact = std::max(worst_exact, std::abs(penalized_reward(r, c.preds, b, c.lambda, true, true) -
                                                     (r - c.lambda * std::sqrt(expect_var))));
    }
    const double hand = std::abs(closed_form_variance(cases[0].preds, cases[0].b) - 2.0);

    // empirical std of 1e6 mixture draws
    Rng rng(202);
    double worst_rel = 0.0;
    for (const Case& c : {cases[0], cases[2]}) {
        const Belief b(c.b);
        const std::size_t n = 1000000;
        const Eigen::Index dims = c.preds[0].mean.size();
        Vector sum = Vector::Zero(dims), sq = Vector::Zero(dims);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = rng.categorical(c.b);
            for (Eigen::Index d = 0; d < dims; ++d) {
                const double y = c.preds[k].mean[d] + c.preds[k].std[d] * rng.normal();
                sum[d] += y;
                sq[d] += y * y;
            }
        }
        double var = 0.0;
        for (Eigen::Index d = 0; d < dims; ++d) var += sq[d] / n - (sum[d] / n) * (sum[d] / n);
        const double model_std = std::sqrt(mixture_variance(c.preds, b, true, true));
        worst_rel = std::max(worst_rel, std::abs(std::sqrt(var) - model_std) / model_std);
    }
    const bool pass = worst_exact <= 1e-12 && hand == 0.0 && worst_rel <= 0.01;
    return {pass, "closed-form max error " + fmt(worst_exact) + " (tolerance 1e-12), empirical std relative error " +
                      fmt(worst_rel) + " over 1e6 draws (tolerance 0.01)"};
}

// ---------------------------------------------------------------- 3. root-sampling posterior

std::vector<double> brute_posterior(const DiscreteBamdp& m, const History& h) {
    std::vector<double> w = m.prior;
    for (std::size_t i = 0; i + 2 < h.size(); i += 2)
        for (int k = 0; k < m.num_models; ++k) w[k] *= m.p(k, h[i], h[i + 1], h[i + 2]);
    double z = 0.0;
    for (double x : w) z += x;
    for (double& x : w) x /= z;
    return w;
}

Verdict root_sampling_posterior() {
    const DiscreteBamdp m = DiscreteBamdp::load_file(BAMCTS_DATA_DIR "/two_model.bamdp");
    double worst = 0.0, fewest = 1e300;
    int histories = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        for (int a0 = 0; a0 < m.num_actions; ++a0)
            for (int a1 = 0; a1 < m.num_actions; ++a1) {
                const auto hist = root_sampling_histogram(m, {a0, a1}, 100000, rng);
                for (const auto& [h, counts] : hist.counts) {
                    if (h.size() / 2 > 2) continue;
                    ++histories;
                    worst = std::max(worst, total_variation(hist.frequencies(h), brute_posterior(m, h)));
                    fewest = std::min(fewest, hist.visits(h));
                }
            }
    }
    return {worst <= 0.02 && histories > 0, fmt(histories) + " history checks over 5 seeds, max TV " + fmt(worst) +
                                                " (tolerance 0.02), fewest visits " + fmt(fewest)};
}

// ---------------------------------------------------------------- 4. Bayes-optimal recovery

// Exhaustive expectimax over (state, belief, steps left).
double enumerate_value(const DiscreteBamdp& m, int s, const std::vector<double>& b, int left,
                       std::vector<double>* q_out = nullptr) {
    if (left == 0) return 0.0;
    double best = -1e300;
    for (int a = 0; a < m.num_actions; ++a) {
        double q = 0.0;
        for (int k = 0; k < m.num_models; ++k) q += b[k] * m.r(k, s, a);
        for (int n = 0; n < m.num_states; ++n) {
            std::vector<double> post(m.num_models);
            double pn = 0.0;
            for (int k = 0; k < m.num_models; ++k) pn += post[k] = b[k] * m.p(k, s, a, n);
            if (pn <= 0.0) continue;
            for (double& x : post) x /= pn;
            q += m.gamma * pn * enumerate_value(m, n, post, left - 1);
        }
        if (q_out) q_out->push_back(q);
        best = std::max(best, q);
    }
    return best;
}

Verdict bayes_optimal_recovery() {
    const DiscreteBamdp m = DiscreteBamdp::load_file(BAMCTS_DATA_DIR "/bandit.bamdp");
    std::vector<double> q;
    const double v = enumerate_value(m, m.start_state, m.prior, m.horizon, &q);
    const int best = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
    const bool oracle_ok = std::abs(v - 1.3) <= 1e-12 && best == 0 && q[1] < q[0];

    int bamcp_hits = 0, continuous_hits = 0;
    const SearchConfig cfg = discrete_recovery_config(m, 5000);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        bamcp_hits += bamcp_search(m, m.start_state, m.prior, 5000, m.horizon, 2.0, {}, rng).action == best;
        continuous_hits += continuous_discrete_root_action(m, cfg, seed) == best;
    }
    return {oracle_ok && bamcp_hits >= 95 && continuous_hits >= 95,
            "enumerated V* " + fmt(v) + ", optimal action " + std::string(best == 0 ? "A" : "B") + "; BAMCP " +
                fmt(bamcp_hits) + "/100, continuous search " + fmt(continuous_hits) + "/100 (need 95)"};
}

// ---------------------------------------------------------------- 5. DPW invariants

// Largest k with k <= N^e, computed from integer powers rather than pow(N, e).
int widening_floor(int visits, double e) {
    int k = 0;
    while (std::pow(static_cast<double>(k + 1), 1.0 / e) <= visits * (1.0 + 1e-12)) ++k;
    return k;
}

Verdict dpw_invariants() {
    Rng rng(505);
    std::vector<Mlp> members;
    for (int k = 0; k < 3; ++k) members.push_back(init_mlp({4, 16, 6}, 600 + k));
    const Ensemble e(members, 2, 2, Normalizer::identity(4), Normalizer::identity(3), true);
    const ActionBox box = ActionBox::symmetric(2, 1.0);
    const SearchInputs in{[&box](const Vector&, Rng& r) { return box.sample_uniform(r); },
                          [](const Vector& s) { return -s.squaredNorm(); }, box};
    const double exps[] = {0.3, 0.5, 0.8};
    const int action_caps[] = {5, 10, 20}, outcome_caps[] = {1, 5};

    long simulations = 0, violations = 0, nodes = 0;
    int searches = 0;
    std::string first;
    auto flag = [&](const std::string& what) {
        if (violations++ == 0) first = what;
    };
    while (simulations < 10000) {
        SearchConfig cfg;
        cfg.alpha = exps[rng.index(3)];
        cfg.beta = exps[rng.index(3)];
        cfg.max_actions = action_caps[rng.index(3)];
        cfg.max_outcomes = outcome_caps[rng.index(2)];
        cfg.simulations = 10 + static_cast<int>(rng.index(291));
        cfg.max_depth = 1 + static_cast<int>(rng.index(5));
        cfg.root_noise = rng.uniform();
        cfg.retain_tree = true;
        Vector root(2);
        root << rng.uniform(-1, 1), rng.uniform(-1, 1);
        const SearchResult res = search(root, uniform_prior(3), cfg, in, e, rng);
        const SearchTree& tree = *res.tree;
        if (tree.nodes[0].visits != cfg.simulations) flag("root visits differ from simulations");
        for (const DecisionNode& n : tree.nodes) {
            ++nodes;
            const int acap = std::min(widening_floor(n.visits, cfg.alpha) + 1, cfg.max_actions);
            if (static_cast<int>(n.actions.size()) > acap) flag("action set exceeds its widening bound");
            int edge_sum = 0;
            for (const ActionChild& edge : n.actions) {
                edge_sum += edge.visits;
                const int ocap = std::min(widening_floor(edge.visits, cfg.beta) + 1, cfg.max_outcomes);
                if (static_cast<int>(edge.outcomes.size()) > ocap) flag("outcome set exceeds its widening bound");
                int outcome_sum = 0;
                for (const auto& o : edge.outcomes) outcome_sum += o.visits;
                if (outcome_sum != edge.visits) flag("outcome visits do not sum to edge visits");
            }
            if (!n.actions.empty() && edge_sum != n.visits) flag("edge visits do not sum to node visits");
        }
        simulations += cfg.simulations;
        ++searches;
    }
    return {violations == 0, fmt(searches) + " searches, " + fmt(simulations) + " simulations, " + fmt(nodes) +
                                 " nodes audited, " + fmt(violations) + " violations" +
                                 (first.empty() ? "" : " (first: " + first + ")")};
}

// ---------------------------------------------------------------- 6. gradient checks

double fd_error(const Mlp& net, const Matrix& x, const LossDescriptor& loss) {
    const Vector g = loss_and_gradient(net, x, loss).second;
    Mlp probe = net;
    double worst = 0.0;
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < probe.params().size(); ++i) {
        const double keep = probe.params()[i];
        probe.params()[i] = keep + h;
        const double up = loss_value(probe, x, loss);
        probe.params()[i] = keep - h;
        const double down = loss_value(probe, x, loss);
        probe.params()[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
    }
    return worst;
}

Matrix gaussian_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

Verdict gradient_checks() {
    std::vector<std::pair<std::string, double>> worst = {
        {"gaussian-nll", 0.0}, {"squared-error", 0.0}, {"cross-entropy-to-weights", 0.0}, {"actor-critic", 0.0}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(7000 + seed);
        const int batch = 5;
        const Matrix x = gaussian_matrix(3, batch, rng);
        const Mlp gauss = init_mlp({3, 10, 6}, 8000 + seed);
        worst[0].second = std::max(worst[0].second, fd_error(gauss, x, loss::GaussianNll{gaussian_matrix(3, batch, rng)}));
        const Mlp reg = init_mlp({3, 10, 10, 2}, 8100 + seed);
        worst[1].second = std::max(worst[1].second, fd_error(reg, x, loss::SquaredError{gaussian_matrix(2, batch, rng)}));

        const ActionBox box{Vector::Constant(2, -1.0), Vector::Constant(2, 2.0)};
        const Mlp policy = init_mlp({3, 10, 4}, 8200 + seed);
        loss::CrossEntropyToWeights ce;
        ce.squash = box.squash();
        for (int k = 0; k < batch; ++k) {
            const int support = 1 + static_cast<int>(rng.index(4));
            Matrix acts(2, support);
            Vector w(support);
            for (int j = 0; j < support; ++j) {
                for (int d = 0; d < 2; ++d) acts(d, j) = rng.uniform(-0.9, 1.9);
                w[j] = rng.uniform(0.05, 1.0);
            }
            ce.actions.push_back(acts);
            ce.weights.push_back(w / w.sum());
        }
        worst[2].second = std::max(worst[2].second, fd_error(policy, x, ce));

        const Mlp q1 = init_mlp({5, 10, 1}, 8300 + seed), q2 = init_mlp({5, 10, 1}, 8400 + seed);
        const loss::ActorCritic ac{gaussian_matrix(2, batch, rng), &q1, &q2, rng.uniform(0.01, 1.0), box.squash()};
        worst[3].second = std::max(worst[3].second, fd_error(policy, x, ac));
    }
    bool pass = true;
    std::string detail = "20 seeds, max relative error:";
    for (const auto& [name, err] : worst) {
        pass = pass && err <= 1e-4;
        detail += " " + name + " " + fmt(err);
    }
    return {pass, detail + " (tolerance 1e-4)"};
}

// ---------------------------------------------------------------- 7. variant coherence

Verdict variant_coherence() {
    auto env = make_env("nav2d-noisy", 0);
    const TransitionDataset data = generate_dataset(*env, BehaviorSpec{}, 2000, 70).data;
    EnsembleTrainConfig ec;
    ec.epochs = 3;
    ec.hidden = {32};
    const Ensemble ensemble = fit_ensemble(data, 3, ec, 71);

    auto base = [](Variant v, std::uint64_t seed) {
        TrainConfig c;
        c.variant = v;
        c.epochs = 3;
        c.rollouts_per_epoch = 64;
        c.learner_steps = 20;
        c.batch_size = 64;
        c.hidden = {32};
        c.eval_episodes = 2;
        c.seed = seed;
        return c;
    };
    auto rollouts = [&](const TrainConfig& c, std::vector<EpochRow>* rows = nullptr) {
        std::ostringstream out;
        TrainingHooks hooks;
        hooks.on_rollouts = [&](int, const std::vector<Trajectory>& ts) {
            for (const auto& t : ts) write_trajectory(out, t);
        };
        const TrainingResult r = run_training(c, ensemble, data, *env, hooks);
        if (rows) *rows = r.rows;
        return out.str();
    };

    bool identical = true;
    std::size_t bytes = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        TrainConfig mcts = base(Variant::ba_mcts, seed);
        mcts.rho = 0.0;
        const std::string a = rollouts(base(Variant::ba_mbrl, seed)), b = rollouts(mcts);
        identical = identical && !a.empty() && a == b;
        bytes += a.size();
    }
    std::vector<EpochRow> rows;
    TrainConfig ablation = base(Variant::ba_mcts, 4);
    ablation.lambda = 0.0;
    ablation.search.simulations = 10;
    rollouts(ablation, &rows);
    double max_penalty = 0.0;
    int searches = 0;
    for (const auto& r : rows) {
        max_penalty = std::max(max_penalty, std::abs(r.mean_penalty));
        searches += r.search_calls;
    }
    return {identical && max_penalty == 0.0 && searches > 0,
            std::string(identical ? "byte-identical" : "DIFFERENT") + " rollout data over 3 seeds (" + fmt(bytes) +
                " bytes); lambda 0 ablation logs max mean penalty " + fmt(max_penalty) + " across " +
                fmt(rows.size()) + " epochs with " + fmt(searches) + " searches"};
}

// ---------------------------------------------------------------- 8. policy improvement

Verdict policy_improvement() {
    auto env = make_env("nav2d-noisy", 0);
    const EvalStats random = evaluate_policy(
        *env, [&](const Vector&, Rng& r) { return env->box().sample_uniform(r); }, 100, 800);
    const EvalStats expert =
        evaluate_policy(*env, [&](const Vector& s, Rng&) { return env->expert_action(s); }, 100, 801);
    const double gap = expert.mean - random.mean;
    std::ostringstream d;
    d << "random " << random.mean << ", expert " << expert.mean << ";";

    bool pass = true;
    double mean_mbrl = 0.0, mean_mcts = 0.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const GeneratedDataset g = generate_dataset(*env, BehaviorSpec{}, 20000, seed);
        const Ensemble ensemble = fit_ensemble(g.data, 5, EnsembleTrainConfig{}, seed);
        d << " seed " << seed << " (behavior " << g.info.behavior_mean_return << "):";
        for (Variant v : {Variant::ba_mbrl, Variant::ba_mcts, Variant::ba_mcts_sl}) {
            TrainConfig cfg;
            cfg.variant = v;
            cfg.seed = seed;
            cfg.search.exploration = 1.0;
            cfg.search.root_noise = 0.1;
            if (v == Variant::ba_mcts_sl) cfg.warmup_epochs = 5;
            const double final_return = run_training(cfg, ensemble, g.data, *env).final_mean_return;
            const double closed = (final_return - random.mean) / gap;
            const bool ok = final_return > g.info.behavior_mean_return && closed >= 0.5;
            pass = pass && ok;
            if (v == Variant::ba_mbrl) mean_mbrl += final_return / 3.0;
            if (v == Variant::ba_mcts) mean_mcts += final_return / 3.0;
            d << " " << variant_name(v) << " " << final_return << " (gap closed " << closed << (ok ? ")" : ", FAIL)");
            std::fflush(stdout);
        }
        d << ";";
    }
    const bool non_inferior = mean_mcts >= mean_mbrl - 0.05 * gap;
    d << " seed-mean ba-mcts " << mean_mcts << " vs ba-mbrl " << mean_mbrl << " - 5% gap"
      << (non_inferior ? "" : " FAIL");
    return {pass && non_inferior, d.str()};
}

// ---------------------------------------------------------------- 9. n-step targets

Verdict n_step_targets() {
    struct Case {
        std::vector<double> r, v;
        std::size_t t;
        int n;
        double gamma, expect;
    };
    const std::vector<Case> cases = {
        {{1.0, 1.0, 0.0}, {0.0, 0.0, 4.0}, 0, 2, 0.5, 1.0 + 0.5 + 0.25 * 4.0},  // 2.5
        {{0.0, 0.0}, {0.0, 7.0}, 0, 1, 0.9, 0.9 * 7.0},                           // 6.3
        {{5.0, 6.0, 7.0}, {1.0, 2.0, 3.0}, 2, 3, 0.9, 3.0},                        // last index
        {{1.0, 2.0, 3.0}, {0.0, 0.0, 10.0}, 0, 5, 0.5, 1.0 + 0.5 * 2.0 + 0.25 * 10.0},  // truncated
        {{1.0, 2.0, 3.0, 4.0}, {9.0, 9.0, 9.0, 9.0}, 1, 2, 0.5, 2.0 + 0.5 * 3.0 + 0.25 * 9.0},
    };
    int exact = 0;
    for (const Case& c : cases) exact += compute_z(c.r, c.v, c.t, c.n, c.gamma) == c.expect;
    return {exact == static_cast<int>(cases.size()), fmt(exact) + "/" + fmt(cases.size()) + " cases exact"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "belief exactness", 1.0, belief_exactness},
        {2, "penalty oracle", 10.0, penalty_oracle},
        {3, "root-sampling posterior", 30.0, root_sampling_posterior},
        {4, "Bayes-optimal recovery", 120.0, bayes_optimal_recovery},
        {5, "DPW invariants", 120.0, dpw_invariants},
        {6, "gradient checks", 30.0, gradient_checks},
        {7, "variant coherence", 600.0, variant_coherence},
        {8, "policy improvement on nav2d-noisy", 1800.0, policy_improvement},
        {9, "n-step target arithmetic", 1.0, n_step_targets},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Verdict o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("%s criterion %d %s: %s [%.2f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
