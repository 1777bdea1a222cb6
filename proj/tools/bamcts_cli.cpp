// bamcts command-line driver: gen-data, fit-model, train, eval, verify.
//
// Exit codes: 0 success, 1 a verification check (or a run) failed,
// 2 usage, configuration or input error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bamcts/discrete_bamdp.hpp"
#include "bamcts/ensemble.hpp"
#include "bamcts/envs.hpp"
#include "bamcts/errors.hpp"
#include "bamcts/iteration.hpp"
#include "bamcts/manifest.hpp"
#include "bamcts/policy.hpp"
#include "bamcts/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bamcts;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

// Flag values for options the command line left unset, taken from a flat JSON
// object keyed by long flag names ("learner-steps" or "learner_steps").
void apply_config_file(CLI::App& sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    if (!cfg.is_object()) throw ConfigError(path + ": expected a JSON object");

    for (const auto& [raw_key, value] : cfg.items()) {
        std::string key = raw_key;
        std::replace(key.begin(), key.end(), '_', '-');
        if (key == "config") continue;
        CLI::Option* opt = nullptr;
        try {
            opt = sub.get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            throw ConfigError(path + ": unknown setting '" + raw_key + "' for " + sub.get_name());
        }
        if (opt->count() > 0) continue;  // the command line wins
        auto add = [&](const json& v) {
            if (v.is_string())
                opt->add_result(v.get<std::string>());
            else if (v.is_boolean())
                opt->add_result(v.get<bool>() ? "true" : "false");
            else
                opt->add_result(v.dump());
        };
        if (value.is_array())
            for (const auto& v : value) add(v);
        else
            add(value);
        try {
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw ConfigError(path + ": bad value for '" + raw_key + "': " + e.what());
        }
    }
}

// An explicit --seed wins; otherwise BAMCTS_SEED replaces the config/default seed.
std::uint64_t resolve_seed(bool from_command_line, std::uint64_t seed) {
    if (from_command_line) return seed;
    if (const char* env = std::getenv("BAMCTS_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError(std::string("BAMCTS_SEED is not an unsigned integer: ") + env);
        }
    }
    return seed;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

TransitionDataset load_dataset(const std::string& path) {
    return ends_with(path, ".csv") ? TransitionDataset::load_csv_file(path) : TransitionDataset::load_file(path);
}

std::string sidecar_path(const std::string& data_path) { return data_path + ".info.json"; }

std::optional<DatasetInfo> load_sidecar(const std::string& data_path) {
    std::ifstream in(sidecar_path(data_path));
    if (!in) return std::nullopt;
    try {
        return DatasetInfo::from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw DataError(sidecar_path(data_path) + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << '\n';
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string env;
    std::string quality = "medium";
    std::size_t n = 20000;
    std::uint64_t seed = 0;
    std::string out;
    std::optional<double> noise_scale;
    bool heteroscedastic = false;
    double behavior_noise = 0.1;
    bool csv = false;
    std::string config;
};

void require_flag(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError(flag + " is required");
}

int run_gen_data(const GenDataArgs& a, bool seed_given) {
    require_flag(a.env, "--env");
    require_flag(a.out, "--out");
    if (a.n == 0) throw ConfigError("--n must be positive");
    const std::uint64_t seed = resolve_seed(seed_given, a.seed);
    EnvOptions opts;
    opts.noise_scale = a.noise_scale;
    opts.heteroscedastic = a.heteroscedastic;
    const auto env = make_env(a.env, seed, opts);
    BehaviorSpec spec;
    spec.quality = parse_quality(a.quality);
    spec.noise_scale = a.behavior_noise;

    RunManifest manifest;
    manifest.command = "gen-data";
    manifest.started = utc_timestamp();

    const GeneratedDataset gen = generate_dataset(*env, spec, a.n, seed);
    if (a.csv) {
        std::ofstream out(a.out);
        if (!out) throw DataError("cannot write " + a.out);
        gen.data.save_csv(out);
    } else {
        gen.data.save_file(a.out);
    }
    write_json(sidecar_path(a.out), gen.info.to_json());

    manifest.config = {{"env", a.env},
                       {"quality", a.quality},
                       {"n", a.n},
                       {"behavior_noise", a.behavior_noise},
                       {"heteroscedastic", a.heteroscedastic},
                       {"env_params", env->params()},
                       {"format", a.csv ? "csv" : "binary"}};
    manifest.seeds["seed"] = seed;
    manifest.outputs["dataset"] = a.out;
    manifest.outputs["info"] = sidecar_path(a.out);
    manifest.finished = utc_timestamp();
    manifest.save(a.out + ".manifest.json");

    std::cerr << "wrote " << gen.data.size() << " transitions (" << gen.info.episodes
              << " complete episodes, behavior return " << gen.info.behavior_mean_return << ") to " << a.out << '\n';
    return kExitOk;
}

// --------------------------------------------------------------- fit-model

struct FitArgs {
    std::string data;
    int k = 5;
    std::uint64_t seed = 0;
    std::string out;
    int epochs = 20;
    int batch = 256;
    std::vector<int> hidden = {64, 64};
    double holdout = 0.1;
    double lr = 1e-3;
    std::string config;
};

EnsembleTrainConfig ensemble_config(int epochs, int batch, const std::vector<int>& hidden, double holdout, double lr) {
    if (epochs < 1) throw ConfigError("ensemble epochs must be >= 1");
    if (batch < 1) throw ConfigError("ensemble batch size must be >= 1");
    if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    EnsembleTrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.hidden = hidden;
    cfg.holdout_fraction = holdout;
    cfg.adam.learning_rate = lr;
    return cfg;
}

int run_fit(const FitArgs& a, bool seed_given) {
    require_flag(a.data, "--data");
    require_flag(a.out, "--out");
    if (a.k < 1) throw ConfigError("--k must be at least 1");
    const std::uint64_t seed = resolve_seed(seed_given, a.seed);
    const EnsembleTrainConfig cfg = ensemble_config(a.epochs, a.batch, a.hidden, a.holdout, a.lr);

    RunManifest manifest;
    manifest.command = "fit-model";
    manifest.started = utc_timestamp();
    manifest.add_input(a.data);

    const TransitionDataset data = load_dataset(a.data);
    const Ensemble ensemble = fit_ensemble(data, a.k, cfg, seed);
    ensure_dir(a.out);
    ensemble.save(a.out);

    json report = {{"members", a.k},
                   {"records", data.size()},
                   {"holdout_fraction", a.holdout},
                   {"holdout_nll", ensemble.holdout_nll}};
    write_json((fs::path(a.out) / "report.json").string(), report);

    manifest.config = {{"k", a.k},       {"epochs", a.epochs}, {"batch", a.batch},
                       {"hidden", a.hidden}, {"holdout", a.holdout}, {"lr", a.lr}};
    manifest.seeds["seed"] = seed;
    manifest.outputs["ensemble"] = a.out;
    for (int i = 0; i < a.k; ++i)
        manifest.outputs["member_" + std::to_string(i)] = (fs::path(a.out) / ("member_" + std::to_string(i) + ".bin")).string();
    manifest.outputs["report"] = (fs::path(a.out) / "report.json").string();
    manifest.finished = utc_timestamp();
    manifest.save((fs::path(a.out) / "manifest.json").string());

    std::cerr << "fitted " << a.k << " members; holdout NLL";
    for (double v : ensemble.holdout_nll) std::cerr << ' ' << v;
    std::cerr << '\n';
    return kExitOk;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string model;
    int k = 5;
    int fit_epochs = 20;
    std::string env;
    std::string variant = "ba-mcts";
    std::optional<double> rho;
    double lambda = 1.0;
    int warmup = 0;
    int workers = 1;
    bool sequential = false;
    int epochs = 30;
    int horizon = 5;
    int rollouts = 512;
    int learner_steps = 200;
    int snapshot_interval = 50;
    int batch = 256;
    int n_step = 5;
    int buffer_epochs = 5;
    double gamma = 0.99;
    std::vector<int> hidden = {64, 64};
    int eval_episodes = 10;
    std::string eval_mode = "mean";
    std::string start_from = "any";
    // search
    int simulations = 50;
    int search_depth = 5;
    double exploration = 1.0;
    double eta = 0.1;
    double alpha = 0.5;
    double beta = 0.5;
    int n_a = 20;
    int n_s = 1;
    double concentration = 1.0;
    std::string expand_rule = "parent-visited";
    std::uint64_t seed = 0;
    std::string out = "run";
    std::string emit_plot;
    std::string dump_tree;
    std::string config;
};

TrainConfig build_train_config(const TrainArgs& a, std::uint64_t seed) {
    TrainConfig c;
    c.variant = parse_variant(a.variant);
    c.rho = a.rho;
    if (c.variant == Variant::ba_mbrl) {
        if (a.rho && *a.rho != 0.0)
            std::cerr << "ba-mbrl never searches: rho " << *a.rho << " coerced to 0\n";
        else
            std::cerr << "ba-mbrl never searches: rho coerced to 0\n";
        c.rho = 0.0;
    }
    c.lambda = a.lambda;
    c.warmup_epochs = a.warmup;
    c.workers = a.workers;
    // Several workers run concurrently unless --sequential pins the order.
    c.sequential = a.sequential || a.workers <= 1;
    c.epochs = a.epochs;
    c.horizon = a.horizon;
    c.rollouts_per_epoch = a.rollouts;
    c.learner_steps = a.learner_steps;
    c.snapshot_interval = a.snapshot_interval;
    c.batch_size = a.batch;
    c.n_step = a.n_step;
    c.buffer_epochs = a.buffer_epochs;
    c.gamma = a.gamma;
    c.sac.gamma = a.gamma;
    c.hidden = a.hidden;
    c.eval_episodes = a.eval_episodes;
    if (a.eval_mode == "mean")
        c.eval_mode = EvalMode::mean;
    else if (a.eval_mode == "sample")
        c.eval_mode = EvalMode::sample;
    else
        throw ConfigError("--eval-mode must be mean or sample");
    if (a.start_from == "any")
        c.start_from = StartFrom::any;
    else if (a.start_from == "initial")
        c.start_from = StartFrom::initial;
    else
        throw ConfigError("--start-from must be any or initial");
    c.search.simulations = a.simulations;
    c.search.max_depth = a.search_depth;
    c.search.exploration = a.exploration;
    c.search.root_noise = a.eta;
    c.search.alpha = a.alpha;
    c.search.beta = a.beta;
    c.search.max_actions = a.n_a;
    c.search.max_outcomes = a.n_s;
    c.search.dirichlet_concentration = a.concentration;
    c.search.expand_rule = parse_expand_rule(a.expand_rule);
    c.seed = seed;
    c.validate();
    return c;
}

int run_train(const TrainArgs& a, bool seed_given) {
    require_flag(a.data, "--data");
    const std::uint64_t seed = resolve_seed(seed_given, a.seed);
    const TrainConfig cfg = build_train_config(a, seed);

    RunManifest manifest;
    manifest.command = "train";
    manifest.started = utc_timestamp();
    manifest.add_input(a.data);

    const TransitionDataset data = load_dataset(a.data);
    const std::optional<DatasetInfo> info = load_sidecar(a.data);
    std::string env_name = a.env;
    if (env_name.empty()) {
        if (!info) throw ConfigError("--env is required when the dataset has no .info.json sidecar");
        env_name = info->env;
    }
    const auto env = make_env(env_name, derive_seed(seed, 7));

    Ensemble ensemble;
    if (!a.model.empty()) {
        ensemble = Ensemble::load(a.model);
        manifest.add_input((fs::path(a.model) / "ensemble.json").string());
        for (int i = 0; i < ensemble.size(); ++i)
            manifest.add_input((fs::path(a.model) / ("member_" + std::to_string(i) + ".bin")).string());
    } else {
        if (a.k < 1) throw ConfigError("--k must be at least 1");
        std::cerr << "fitting a " << a.k << "-member ensemble\n";
        ensemble = fit_ensemble(data, a.k, ensemble_config(a.fit_epochs, 256, a.hidden, 0.1, 1e-3),
                                derive_seed(seed, 5));
    }

    ensure_dir(a.out);
    const fs::path out(a.out);
    std::ofstream metrics(out / "metrics.csv");
    if (!metrics) throw DataError("cannot write " + (out / "metrics.csv").string());
    metrics << metrics_csv_header() << '\n';

    TrainingHooks hooks;
    hooks.on_epoch = [&](const EpochRow& row) {
        metrics << metrics_csv_row(row) << '\n';
        metrics.flush();
        std::cerr << "epoch " << row.epoch << " return " << row.mean_return << " +- " << row.std_return
                  << " searches " << row.search_calls << " penalty " << row.mean_penalty << '\n';
    };
    const TrainingResult result = run_training(cfg, ensemble, data, *env, hooks);

    save_policy((out / "policy.bin").string(), result.policy);
    save_value((out / "value.bin").string(), result.value);
    write_json((out / "config.json").string(), cfg.to_json());

    json summary = {{"variant", variant_name(cfg.variant)},
                    {"env", env_name},
                    {"epochs", cfg.epochs},
                    {"final_window", std::min<std::size_t>(10, result.rows.size())},
                    {"final_mean_return", result.final_mean_return}};
    if (info) summary["behavior_mean_return"] = info->behavior_mean_return;
    write_json((out / "summary.json").string(), summary);

    manifest.outputs["metrics"] = (out / "metrics.csv").string();
    manifest.outputs["policy"] = (out / "policy.bin").string();
    manifest.outputs["value"] = (out / "value.bin").string();
    manifest.outputs["summary"] = (out / "summary.json").string();

    if (!a.emit_plot.empty()) {
        std::ofstream plot(a.emit_plot);
        if (!plot) throw DataError("cannot write " + a.emit_plot);
        plot << "x,y,series\n";
        char buf[64];
        for (const auto& row : result.rows) {
            std::snprintf(buf, sizeof buf, "%.10g", row.mean_return);
            plot << row.epoch << ',' << buf << ',' << variant_name(cfg.variant) << '\n';
        }
        for (const auto& row : result.rows) {
            std::snprintf(buf, sizeof buf, "%.10g", row.mean_penalty);
            plot << row.epoch << ',' << buf << ",mean_penalty\n";
        }
        manifest.outputs["plot"] = a.emit_plot;
    }

    if (!a.dump_tree.empty()) {
        // One search from the first dataset state with the trained networks.
        SearchConfig scfg = cfg.effective_search();
        scfg.retain_tree = true;
        const GaussianPolicy& policy = result.policy;
        const CriticPair& critics = result.critics;
        SearchInputs in{[&policy](const Vector& s, Rng& rng) { return policy.sample(s, rng).action; },
                        [&](const Vector& s) {
                            return cfg.variant == Variant::ba_mcts_sl ? result.value(s)
                                                                      : critics.min_q(s, policy.mean_action(s));
                        },
                        env->box()};
        Rng rng(derive_seed(seed, 9));
        const SearchResult res = search(data[0].state, uniform_prior(ensemble.size()), scfg, in, ensemble, rng);
        std::ofstream dump(a.dump_tree);
        if (!dump) throw DataError("cannot write " + a.dump_tree);
        dump << res.tree->dump();
        manifest.outputs["tree"] = a.dump_tree;
    }

    manifest.config = cfg.to_json();
    manifest.config["env"] = env_name;
    manifest.config["model"] = a.model.empty() ? json("inline") : json(a.model);
    manifest.seeds["seed"] = seed;
    manifest.finished = utc_timestamp();
    manifest.save((out / "manifest.json").string());

    std::cout << "final_mean_return " << result.final_mean_return << '\n';
    return kExitOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string env;
    std::string policy;
    int episodes = 10;
    std::uint64_t seed = 0;
    std::string mode = "mean";
    std::optional<double> noise_scale;
    std::string config;
};

int run_eval(const EvalArgs& a, bool seed_given) {
    require_flag(a.env, "--env");
    require_flag(a.policy, "--policy");
    if (a.episodes < 1) throw ConfigError("--episodes must be at least 1");
    const std::uint64_t seed = resolve_seed(seed_given, a.seed);
    EnvOptions opts;
    opts.noise_scale = a.noise_scale;
    const auto env = make_env(a.env, seed, opts);
    EvalMode mode;
    if (a.mode == "mean")
        mode = EvalMode::mean;
    else if (a.mode == "sample")
        mode = EvalMode::sample;
    else
        throw ConfigError("--mode must be mean or sample");
    const GaussianPolicy policy = load_policy(a.policy, env->box());
    if (policy.state_dim() != env->state_dim())
        throw ConfigError("policy expects state dimension " + std::to_string(policy.state_dim()) + " but " + a.env +
                          " has " + std::to_string(env->state_dim()));
    const EvalStats stats = evaluate_policy(*env, make_action_fn(policy, mode), a.episodes, seed);
    std::cout << "mean_return " << stats.mean << "\nstd_return " << stats.std << '\n';
    return kExitOk;
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
    std::size_t samples = 100000;
    std::uint64_t seed = 1;
    int runs = 20;
    int simulations = 5000;
    long fuzz = 10000;
    int gradient_seeds = 5;
    std::string two_model;
    std::string bandit;
    std::string json_out;
    std::string config;
};

int run_verify(const VerifyArgs& a, bool seed_given) {
    if (a.samples == 0) throw ConfigError("--samples must be positive");
    if (a.runs < 1 || a.simulations < 1 || a.fuzz < 1 || a.gradient_seeds < 1)
        throw ConfigError("--runs, --simulations, --fuzz and --gradient-seeds must be positive");
    VerifyOptions opt;
    opt.samples = a.samples;
    opt.seed = resolve_seed(seed_given, a.seed);
    opt.recovery_runs = a.runs;
    opt.recovery_simulations = a.simulations;
    opt.fuzz_simulations = a.fuzz;
    opt.gradient_seeds = a.gradient_seeds;
    if (!a.two_model.empty()) opt.two_model = DiscreteBamdp::load_file(a.two_model);
    if (!a.bandit.empty()) opt.bandit = DiscreteBamdp::load_file(a.bandit);

    const std::vector<CheckRow> rows = run_verification(opt);
    bool failed = false;
    std::cout << "check\tstatus\tdetail\n";
    for (const auto& r : rows) {
        std::cout << r.name << '\t' << status_name(r.status) << '\t' << r.detail << '\n';
        failed = failed || r.status == CheckStatus::fail;
    }
    if (!a.json_out.empty()) write_json(a.json_out, checks_to_json(rows));
    return failed ? kExitCheckFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayes-adaptive Monte Carlo tree search for offline model-based RL"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "bamcts 1.0");

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Roll a scripted behavior policy into an offline dataset");
    gen_cmd->add_option("--env", gen.env, "Environment name");
    gen_cmd->add_option("--quality", gen.quality, "random, medium, expert or medium-replay-mix");
    gen_cmd->add_option("--n", gen.n, "Number of transitions");
    auto* gen_seed = gen_cmd->add_option("--seed", gen.seed, "Seed");
    gen_cmd->add_option("--out", gen.out, "Dataset file");
    gen_cmd->add_option("--noise-scale", gen.noise_scale, "Environment noise override");
    gen_cmd->add_flag("--heteroscedastic", gen.heteroscedastic, "Velocity-dependent pendulum noise");
    gen_cmd->add_option("--behavior-noise", gen.behavior_noise, "Scripted-action noise, fraction of the box");
    gen_cmd->add_flag("--csv", gen.csv, "Write CSV instead of the binary format");
    gen_cmd->add_option("--config", gen.config, "JSON file with flag defaults");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit-model", "Fit a Gaussian world-model ensemble");
    fit_cmd->add_option("--data", fit.data, "Dataset file (.csv or binary)");
    fit_cmd->add_option("--k", fit.k, "Ensemble members");
    auto* fit_seed = fit_cmd->add_option("--seed", fit.seed, "Seed");
    fit_cmd->add_option("--out", fit.out, "Checkpoint directory");
    fit_cmd->add_option("--epochs", fit.epochs, "Training epochs per member");
    fit_cmd->add_option("--batch", fit.batch, "Mini-batch size");
    fit_cmd->add_option("--hidden", fit.hidden, "Hidden layer widths");
    fit_cmd->add_option("--holdout", fit.holdout, "Holdout fraction");
    fit_cmd->add_option("--lr", fit.lr, "Adam learning rate");
    fit_cmd->add_option("--config", fit.config, "JSON file with flag defaults");

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "Run search-based policy iteration in the learned BAMDP");
    tr_cmd->add_option("--data", tr.data, "Dataset file");
    tr_cmd->add_option("--model", tr.model, "Ensemble directory (fits one inline when absent)");
    tr_cmd->add_option("--k", tr.k, "Members of an inline ensemble");
    tr_cmd->add_option("--fit-epochs", tr.fit_epochs, "Epochs of an inline ensemble fit");
    tr_cmd->add_option("--env", tr.env, "Evaluation environment (defaults to the dataset's)");
    tr_cmd->add_option("--variant", tr.variant, "ba-mbrl, ba-mcts or ba-mcts-sl");
    tr_cmd->add_option("--rho", tr.rho, "Fraction of rollout steps that search");
    tr_cmd->add_option("--lambda", tr.lambda, "Uncertainty penalty weight");
    tr_cmd->add_option("--warmup", tr.warmup, "Actor-critic warm-up epochs (ba-mcts-sl)");
    tr_cmd->add_option("--workers", tr.workers, "Actor threads");
    tr_cmd->add_flag("--sequential", tr.sequential, "Deterministic single-threaded schedule");
    tr_cmd->add_option("--epochs", tr.epochs, "Policy iteration epochs");
    tr_cmd->add_option("--horizon", tr.horizon, "Model rollout length");
    tr_cmd->add_option("--rollouts", tr.rollouts, "Rollouts per epoch");
    tr_cmd->add_option("--learner-steps", tr.learner_steps, "Learner updates per epoch");
    tr_cmd->add_option("--snapshot-interval", tr.snapshot_interval, "Learner steps between snapshots");
    tr_cmd->add_option("--batch", tr.batch, "Learner mini-batch size");
    tr_cmd->add_option("--n-step", tr.n_step, "Bootstrap distance of value targets");
    tr_cmd->add_option("--buffer-epochs", tr.buffer_epochs, "Epochs of rollouts kept for replay");
    tr_cmd->add_option("--gamma", tr.gamma, "Discount");
    tr_cmd->add_option("--hidden", tr.hidden, "Hidden layer widths");
    tr_cmd->add_option("--eval-episodes", tr.eval_episodes, "True-environment episodes per epoch");
    tr_cmd->add_option("--eval-mode", tr.eval_mode, "mean or sample");
    tr_cmd->add_option("--start-from", tr.start_from, "any or initial dataset states");
    tr_cmd->add_option("--simulations", tr.simulations, "Search simulations");
    tr_cmd->add_option("--search-depth", tr.search_depth, "Search depth");
    tr_cmd->add_option("--exploration", tr.exploration, "UCT constant c");
    tr_cmd->add_option("--eta", tr.eta, "Root noise probability");
    tr_cmd->add_option("--alpha", tr.alpha, "Action widening exponent");
    tr_cmd->add_option("--beta", tr.beta, "Outcome widening exponent");
    tr_cmd->add_option("--n-a", tr.n_a, "Action cap per node");
    tr_cmd->add_option("--n-s", tr.n_s, "Outcome cap per action");
    tr_cmd->add_option("--concentration", tr.concentration, "Root noise Beta concentration");
    tr_cmd->add_option("--expand-rule", tr.expand_rule, "parent-visited, edge-visited or child-visited");
    auto* tr_seed = tr_cmd->add_option("--seed", tr.seed, "Seed");
    tr_cmd->add_option("--out", tr.out, "Output directory");
    tr_cmd->add_option("--emit-plot", tr.emit_plot, "Write x,y,series plot data");
    tr_cmd->add_option("--dump-tree", tr.dump_tree, "Write the tree of one search with the final networks");
    tr_cmd->add_option("--config", tr.config, "JSON file with flag defaults");

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Score a policy checkpoint in the true environment");
    ev_cmd->add_option("--env", ev.env, "Environment name");
    ev_cmd->add_option("--policy", ev.policy, "Policy checkpoint");
    ev_cmd->add_option("--episodes", ev.episodes, "Episodes");
    auto* ev_seed = ev_cmd->add_option("--seed", ev.seed, "Seed");
    ev_cmd->add_option("--mode", ev.mode, "mean or sample actions");
    ev_cmd->add_option("--noise-scale", ev.noise_scale, "Environment noise override");
    ev_cmd->add_option("--config", ev.config, "JSON file with flag defaults");

    VerifyArgs ver;
    auto* ver_cmd = app.add_subcommand("verify", "Run the oracle self-checks");
    ver_cmd->add_option("--samples", ver.samples, "Root-sampling draws per action sequence");
    auto* ver_seed = ver_cmd->add_option("--seed", ver.seed, "Seed");
    ver_cmd->add_option("--runs", ver.runs, "Seeded runs per recovery check");
    ver_cmd->add_option("--simulations", ver.simulations, "Simulations per recovery search");
    ver_cmd->add_option("--fuzz", ver.fuzz, "Total simulations of the widening fuzz");
    ver_cmd->add_option("--gradient-seeds", ver.gradient_seeds, "Random instances per loss");
    ver_cmd->add_option("--two-model", ver.two_model, "Two-model BAMDP file");
    ver_cmd->add_option("--bandit", ver.bandit, "Bandit BAMDP file");
    ver_cmd->add_option("--json", ver.json_out, "Also write the table as JSON");
    ver_cmd->add_option("--config", ver.config, "JSON file with flag defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) {
            const bool seed_given = gen_seed->count() > 0;
            if (!gen.config.empty()) apply_config_file(*gen_cmd, gen.config);
            return run_gen_data(gen, seed_given);
        }
        if (fit_cmd->parsed()) {
            const bool seed_given = fit_seed->count() > 0;
            if (!fit.config.empty()) apply_config_file(*fit_cmd, fit.config);
            return run_fit(fit, seed_given);
        }
        if (tr_cmd->parsed()) {
            const bool seed_given = tr_seed->count() > 0;
            if (!tr.config.empty()) apply_config_file(*tr_cmd, tr.config);
            return run_train(tr, seed_given);
        }
        if (ev_cmd->parsed()) {
            const bool seed_given = ev_seed->count() > 0;
            if (!ev.config.empty()) apply_config_file(*ev_cmd, ev.config);
            return run_eval(ev, seed_given);
        }
        if (ver_cmd->parsed()) {
            const bool seed_given = ver_seed->count() > 0;
            if (!ver.config.empty()) apply_config_file(*ver_cmd, ver.config);
            return run_verify(ver, seed_given);
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    }
    return kExitUsage;
}
