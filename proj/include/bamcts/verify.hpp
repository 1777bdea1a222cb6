#pragma once

// Self-checks shared by the `verify` command: root-sampling equivalence,
// Bayes-optimal action recovery, widening invariants and loss gradients.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bamcts/discrete_bamdp.hpp"
#include "bamcts/net.hpp"
#include "bamcts/search.hpp"

namespace bamcts {

// Largest relative discrepancy between the analytic gradient and central
// differences, |g - g_fd| / max(|g|, |g_fd|, floor).
double max_gradient_error(const Mlp& net, const Matrix& inputs, const LossDescriptor& loss, double step = 1e-5,
                          double floor = 1e-6);

// Search settings under which continuous search on a finite action proposal
// reproduces the exact Bayes-optimal root decision of small BAMDPs.
SearchConfig discrete_recovery_config(const DiscreteBamdp& m, int simulations);

// Continuous search on a discrete BAMDP. The proposal samples action indices
// uniformly, leaves bootstrap with 0 (the horizon ends there) and the root
// decision is the most visited action index.
int continuous_discrete_root_action(const DiscreteBamdp& m, const SearchConfig& cfg, std::uint64_t seed);

struct FuzzReport {
    int searches = 0;
    long simulations = 0;
    std::vector<std::string> violations;
};

// Random widening configurations over a small random Gaussian ensemble;
// every tree is audited after its search.
FuzzReport fuzz_widening(long total_simulations, std::uint64_t seed);

enum class CheckStatus { pass, fail, skipped };

struct CheckRow {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::string detail;
};

struct VerifyOptions {
    std::size_t samples = 100000;  // root-sampling draws per action sequence
    std::uint64_t seed = 1;
    int recovery_runs = 20;
    int recovery_simulations = 5000;
    long fuzz_simulations = 10000;
    int gradient_seeds = 5;
    DiscreteBamdp two_model = make_two_model_bamdp();
    DiscreteBamdp bandit = make_bandit_bamdp();
};

std::vector<CheckRow> run_verification(const VerifyOptions& opt);

std::string status_name(CheckStatus s);
nlohmann::json checks_to_json(const std::vector<CheckRow>& rows);

}  // namespace bamcts
