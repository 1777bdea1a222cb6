#include <doctest.h>

#include <cmath>

#include "bamcts/envs.hpp"
#include "bamcts/errors.hpp"

using namespace bamcts;

namespace {

// Reward 1 every step for ten steps.
class ConstantEnv final : public Env {
  public:
    std::string name() const override { return "constant"; }
    int state_dim() const override { return 1; }
    const ActionBox& box() const override { return box_; }
    int horizon() const override { return 10; }
    void seed(std::uint64_t) override {}
    Vector reset() override {
        t_ = 0;
        return Vector::Zero(1);
    }
    StepResult step(const Vector&) override { return {Vector::Zero(1), 1.0, ++t_ >= 10}; }
    Vector expert_action(const Vector&) const override { return Vector::Zero(1); }
    nlohmann::json params() const override { return nlohmann::json::object(); }
    std::unique_ptr<Env> clone() const override { return std::make_unique<ConstantEnv>(*this); }

  private:
    ActionBox box_ = ActionBox::symmetric(1, 1.0);
    int t_ = 0;
};

std::vector<StepResult> run(Env& env, std::uint64_t seed, const std::vector<Vector>& actions) {
    env.seed(seed);
    env.reset();
    std::vector<StepResult> out;
    for (const Vector& a : actions) out.push_back(env.step(a));
    return out;
}

std::vector<Vector> random_actions(const Env& env, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vector> out;
    for (int i = 0; i < n; ++i) out.push_back(env.box().sample_uniform(rng));
    return out;
}

ActionSampler expert_of(const Env& env) {
    return [&env](const Vector& s, Rng&) { return env.expert_action(s); };
}

}  // namespace

TEST_CASE("known environments and unknown names") {
    for (const std::string& name : env_names()) {
        auto env = make_env(name, 1);
        CHECK(env->name() == name);
        const Vector s = env->reset();
        CHECK(s.size() == env->state_dim());
        CHECK(env->box().dim() == env->action_dim());
    }
    CHECK(env_names().size() == 4);
    CHECK_THROWS_AS(make_env("cartpole", 1), ConfigError);
}

TEST_CASE("seed and actions determine trajectories") {
    for (const std::string& name : env_names()) {
        auto a = make_env(name, 0), b = make_env(name, 99);
        const auto actions = random_actions(*a, 40, 5);
        const auto ra = run(*a, 17, actions), rb = run(*b, 17, actions);
        for (std::size_t i = 0; i < ra.size(); ++i) {
            CHECK(ra[i].next_state == rb[i].next_state);
            CHECK(ra[i].reward == rb[i].reward);
            CHECK(ra[i].done == rb[i].done);
        }
    }
    auto env = make_env("nav2d-noisy", 0);
    const auto actions = random_actions(*env, 10, 5);
    CHECK(run(*env, 1, actions).back().next_state != run(*env, 2, actions).back().next_state);
}

TEST_CASE("episodes end at the horizon with finite rewards and stable dimensions") {
    for (const std::string& name : env_names()) {
        auto env = make_env(name, 3);
        env->reset();
        Rng rng(3);
        int steps = 0;
        StepResult r;
        do {
            r = env->step(env->box().sample_uniform(rng));
            ++steps;
            CHECK(r.next_state.size() == env->state_dim());
            CHECK(std::isfinite(r.reward));
        } while (!r.done);
        CHECK(steps == env->horizon());
    }
}

TEST_CASE("nav2d dynamics follow the closed form") {
    const std::uint64_t seed = 21;
    Nav2dEnv env;
    env.seed(seed);
    Vector s = env.reset();
    // replay the environment's own noise stream: two uniforms at reset, then two normals per step
    Rng noise(seed);
    noise.uniform();
    noise.uniform();
    const Vector goal = Vector::Ones(2);
    Rng act(4);
    for (int t = 0; t < 50; ++t) {
        const Vector a = env.box().sample_uniform(act);
        const StepResult r = env.step(a);
        Vector expect = s + 0.1 * a;
        expect[0] += 0.05 * noise.normal();
        expect[1] += 0.05 * noise.normal();
        CHECK((r.next_state - expect).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(r.reward == doctest::Approx(-(s - goal).squaredNorm() * 0.1).epsilon(1e-12));
        s = r.next_state;
    }
}

TEST_CASE("nav2d noise has the stated scale") {
    Nav2dEnv env;
    env.seed(5);
    Vector s = env.reset();
    double sq = 0.0;
    int n = 0;
    for (int ep = 0; ep < 200; ++ep) {
        s = env.reset();
        for (int t = 0; t < 50; ++t) {
            const StepResult r = env.step(Vector::Zero(2));
            sq += (r.next_state - s).squaredNorm();
            n += 2;
            s = r.next_state;
        }
    }
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.05).epsilon(0.02));
}

TEST_CASE("zero action without noise is a fixed point") {
    EnvOptions quiet;
    quiet.noise_scale = 0.0;
    auto env = make_env("nav2d-noisy", 6, quiet);
    const Vector s = env->reset();
    for (int t = 0; t < 10; ++t) CHECK(env->step(Vector::Zero(2)).next_state == s);
}

TEST_CASE("tracker reward peaks at perfect tracking") {
    EnvOptions quiet;
    quiet.noise_scale = 0.0;
    auto env = make_env("tracker-1d", 7, quiet);
    Vector s = env->reset();
    // steer onto the target first; the expert then tracks exactly
    for (int t = 0; t < 10; ++t) s = env->step(env->expert_action(s)).next_state;
    for (int t = 0; t < 20; ++t) {
        const StepResult r = env->step(env->expert_action(s));
        CHECK(r.reward <= 0.0);
        CHECK(r.reward >= -1e-20);
        CHECK(r.next_state[0] == doctest::Approx(r.next_state[1]).epsilon(1e-12));
        s = r.next_state;
    }
}

TEST_CASE("tracker proportional controller reaches the return bound") {
    auto env = make_env("tracker-1d", 8);
    const EvalStats st = evaluate_policy(*env, expert_of(*env), 20, 8);
    MESSAGE("tracker controller return " << st.mean);
    CHECK(st.mean >= -0.5);
}

TEST_CASE("pendulum torque disturbance is heteroscedastic on request") {
    PendulumEnv flat(0.2, false), het(0.2, true);
    CHECK(flat.disturbance_scale(0.0) == flat.disturbance_scale(5.0));
    CHECK(het.disturbance_scale(5.0) > het.disturbance_scale(0.0));
    auto env = make_env("pendulum-noisy", 9);
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
        const Vector s = env->step(env->box().sample_uniform(rng)).next_state;
        CHECK(s[0] * s[0] + s[1] * s[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("expert controllers beat random behavior") {
    for (const std::string& name : {"nav2d-noisy", "pendulum-noisy", "tracker-1d"}) {
        auto env = make_env(name, 10);
        const EvalStats expert = evaluate_policy(*env, expert_of(*env), 20, 10);
        const EvalStats random =
            evaluate_policy(*env, [&](const Vector&, Rng& r) { return env->box().sample_uniform(r); }, 20, 10);
        MESSAGE(name << " expert " << expert.mean << " random " << random.mean);
        CHECK(expert.mean > random.mean);
    }
}

TEST_CASE("random behavior draws uniform actions") {
    auto env = make_env("nav2d-noisy", 11);
    BehaviorSpec spec;
    spec.quality = Quality::random;
    const auto g = generate_dataset(*env, spec, 20000, 11);
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (const auto& t : g.data.records()) {
        CHECK(env->box().contains(t.action));
        for (int i = 0; i < 2; ++i) {
            sum[i] += t.action[i];
            sq[i] += t.action[i] * t.action[i];
        }
    }
    const double n = 20000.0;
    for (int i = 0; i < 2; ++i) {
        // uniform on [-1, 1]: mean 0, variance 1/3
        CHECK(std::abs(sum[i] / n) <= 3.0 * std::sqrt(1.0 / 3.0 / n));
        CHECK(sq[i] / n == doctest::Approx(1.0 / 3.0).epsilon(0.02));
    }
}

TEST_CASE("expert data on nav2d costs at most a third of random data") {
    auto env = make_env("nav2d-noisy", 12);
    BehaviorSpec expert, random;
    expert.quality = Quality::expert;
    random.quality = Quality::random;
    const auto e = generate_dataset(*env, expert, 5000, 12).info;
    const auto r = generate_dataset(*env, random, 5000, 12).info;
    MESSAGE("behavior returns: expert " << e.behavior_mean_return << " random " << r.behavior_mean_return);
    CHECK(e.behavior_mean_return > r.behavior_mean_return);
    CHECK(-r.behavior_mean_return >= 3.0 * -e.behavior_mean_return);
}

TEST_CASE("datasets have the requested size and recomputable statistics") {
    for (auto q : {Quality::random, Quality::medium, Quality::expert, Quality::medium_replay_mix}) {
        auto env = make_env("nav2d-noisy", 13);
        BehaviorSpec spec;
        spec.quality = q;
        const auto g = generate_dataset(*env, spec, 1000, 13);
        CHECK(g.data.size() == 1000);
        CHECK(g.info.transitions == 1000);
        CHECK(g.info.episodes == 20);

        // recompute the behavior statistics from raw records
        std::vector<double> returns;
        double acc = 0.0;
        for (const auto& t : g.data.records()) {
            acc += t.reward;
            if (t.done) {
                returns.push_back(acc);
                acc = 0.0;
            }
        }
        double mean = 0.0;
        for (double r : returns) mean += r;
        mean /= returns.size();
        double var = 0.0;
        for (double r : returns) var += (r - mean) * (r - mean);
        CHECK(std::abs(g.info.behavior_mean_return - mean) <= 1e-9);
        CHECK(std::abs(g.info.behavior_std_return - std::sqrt(var / returns.size())) <= 1e-9);
        CHECK(g.info.quality == quality_name(q));
    }
    auto env = make_env("nav2d-noisy", 14);
    const auto partial = generate_dataset(*env, BehaviorSpec{}, 75, 14);
    CHECK(partial.data.size() == 75);
    CHECK(partial.info.episodes == 1);  // the cut episode is excluded
    CHECK_THROWS_AS(generate_dataset(*env, BehaviorSpec{}, 0, 14), ConfigError);
}

TEST_CASE("dataset generation is deterministic") {
    auto env = make_env("pendulum-noisy", 15);
    const auto a = generate_dataset(*env, BehaviorSpec{}, 500, 15);
    const auto b = generate_dataset(*env, BehaviorSpec{}, 500, 15);
    for (std::size_t i = 0; i < 500; ++i) {
        CHECK(a.data[i].state == b.data[i].state);
        CHECK(a.data[i].action == b.data[i].action);
    }
    CHECK(a.info.to_json() == b.info.to_json());
    CHECK(DatasetInfo::from_json(a.info.to_json()).to_json() == a.info.to_json());
}

TEST_CASE("evaluation statistics") {
    ConstantEnv env;
    const EvalStats st = evaluate_policy(env, [](const Vector&, Rng&) { return Vector::Zero(1); }, 10, 1);
    CHECK(st.mean == 10.0);
    CHECK(st.std == 0.0);
    CHECK(st.returns.size() == 10);

    auto nav = make_env("nav2d-noisy", 16);
    auto sampler = [&](const Vector&, Rng& r) { return nav->box().sample_uniform(r); };
    const EvalStats x = evaluate_policy(*nav, sampler, 10, 4), y = evaluate_policy(*nav, sampler, 10, 4);
    CHECK(x.returns == y.returns);
    CHECK(x.std > 0.0);

    const EvalStats h = return_stats({1.0, 3.0});
    CHECK(h.mean == 2.0);
    CHECK(h.std == 1.0);
}

TEST_CASE("bandit environment plays the true model") {
    auto env = make_env("bandit-bamdp", 17);
    auto* bandit = dynamic_cast<DiscreteBamdpEnv*>(env.get());
    REQUIRE(bandit != nullptr);
    CHECK(bandit->action_index(Vector::Constant(1, 0.2)) == 0);
    CHECK(bandit->action_index(Vector::Constant(1, 1.7)) == 1);
    CHECK(bandit->expert_action(Vector::Zero(1))[0] == doctest::Approx(0.5));
    int counts[2] = {0, 0};
    for (int ep = 0; ep < 2000; ++ep) {
        env->reset();
        ++counts[bandit->true_model()];
    }
    const auto& prior = bandit->model().prior;
    CHECK(counts[0] / 2000.0 == doctest::Approx(prior[0]).epsilon(0.1));
}

TEST_CASE("actions of the wrong shape are rejected") {
    auto env = make_env("nav2d-noisy", 18);
    env->reset();
    CHECK_THROWS_AS(env->step(Vector::Zero(3)), ShapeError);
    const Vector far = Vector::Constant(2, 50.0);
    EnvOptions quiet;
    quiet.noise_scale = 0.0;
    auto q = make_env("nav2d-noisy", 18, quiet);
    const Vector s0 = q->reset();
    CHECK(q->step(far).next_state == s0 + 0.1 * Vector::Ones(2));  // clipped to the box
}
