#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "constrdyn/evaluation.hpp"
#include "constrdyn/training.hpp"
#include "test_util.hpp"

using namespace constrdyn;

namespace {

// independent oracle: sort a copy and interpolate with the complementary form
double percentile_oracle(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n == 1) return values[0];
    const double rank = p / 100.0 * double(n - 1);
    const size_t lo = size_t(std::floor(rank));
    const double frac = rank - double(lo);
    if (frac == 0.0) return values[lo];
    if (values[lo] == values[lo + 1]) return values[lo];
    return (1.0 - frac) * values[lo] + frac * values[lo + 1];
}

}  // namespace

TEST_CASE("percentiles by linear interpolation", "[evaluation]") {
    SECTION("1..100 reference values") {
        std::vector<double> v(100);
        for (int i = 0; i < 100; ++i) v[i] = double(i + 1);
        REQUIRE(percentile_sorted(v, 50.0) == Catch::Approx(50.5).epsilon(1e-15));
        REQUIRE(percentile_sorted(v, 2.5) == Catch::Approx(3.475).epsilon(1e-14));
        REQUIRE(percentile_sorted(v, 97.5) == Catch::Approx(97.525).epsilon(1e-14));
    }
    SECTION("all-equal arrays return that value at every percentile") {
        std::vector<double> v(17, 3.25);
        for (double p : {0.0, 2.5, 50.0, 97.5, 100.0}) REQUIRE(percentile_sorted(v, p) == 3.25);
    }
    SECTION("one infinity among 100 stays in the tail") {
        std::vector<double> v(100);
        for (int i = 0; i < 99; ++i) v[i] = double(i + 1);
        v[99] = std::numeric_limits<double>::infinity();
        std::sort(v.begin(), v.end());
        REQUIRE(std::isfinite(percentile_sorted(v, 50.0)));
        REQUIRE(std::isfinite(percentile_sorted(v, 97.5)));
        REQUIRE(percentile_sorted(v, 100.0) == std::numeric_limits<double>::infinity());
    }
    SECTION("agrees with the brute-force oracle on random arrays") {
        Rng rng(31337);
        for (int trial = 0; trial < 1000; ++trial) {
            const size_t n = 1 + size_t(rng.below(40));
            std::vector<double> v = testutil::random_vector(rng, n, -50.0, 50.0);
            std::vector<double> sorted = v;
            std::sort(sorted.begin(), sorted.end());
            const double p = rng.uniform(0.0, 100.0);
            const double got = percentile_sorted(sorted, p);
            const double want = percentile_oracle(v, p);
            REQUIRE(got == Catch::Approx(want).epsilon(1e-13).margin(1e-13));
        }
    }
}

TEST_CASE("energy-deviation rmse on reference fields", "[evaluation]") {
    SECTION("the true field scores near zero against itself") {
        const SystemDef& def = system(Task::mass_spring);
        RhsFn rhs = [&def](const std::vector<double>& s) { return def.rhs(s); };
        const double r = energy_deviation_rmse(rhs, Task::mass_spring, {1.0, 0.0});
        REQUIRE(r < 1e-4);
    }
    SECTION("a frozen state keeps its energy, so the rmse is zero") {
        RhsFn zero = [](const std::vector<double>& s) { return std::vector<double>(s.size(), 0.0); };
        const double r = energy_deviation_rmse(zero, Task::mass_spring, {1.0, 0.0});
        REQUIRE(r == 0.0);
    }
    SECTION("a diverging field reports the overflow sentinel") {
        RhsFn blowup = [](const std::vector<double>& s) {
            std::vector<double> out(s.size());
            for (size_t i = 0; i < s.size(); ++i) out[i] = 1e3 * s[i] + 1.0;
            return out;
        };
        REQUIRE(energy_deviation_rmse(blowup, Task::mass_spring, {1.0, 0.0}) ==
                std::numeric_limits<double>::infinity());
    }
    SECTION("damped task compares against the dissipating reference energy") {
        const SystemDef& def = system(Task::damped_pendulum_xy);
        RhsFn rhs = [&def](const std::vector<double>& s) { return def.rhs(s); };
        const std::vector<double> s0 = damped_pendulum_angular_to_xy(std::vector<double>{1.0, 0.5});
        EnergySeries series;
        const double r = energy_deviation_rmse(rhs, Task::damped_pendulum_xy, s0, 20.0, 0.1, &series);
        REQUIRE(r < 1e-3);
        REQUIRE(series.t.size() == 201);
        // the reference energy must actually decay
        REQUIRE(series.true_energy.back() < 0.9 * series.true_energy.front());
    }
}

TEST_CASE("aggregate reports percentiles, overflow counts, and is deterministic", "[evaluation]") {
    // a model-free scenario: the true field plus a controlled blow-up region
    auto make_rhs = []() -> RhsFn {
        return [](const std::vector<double>& s) {
            const double e = energy_mass_spring(s);
            std::vector<double> out = rhs_mass_spring(s);
            if (e > 4.0) {  // high-energy starts diverge
                out[0] = 1e6 * (s[0] + 1.0);
                out[1] = 1e6 * (s[1] + 1.0);
            }
            return out;
        };
    };
    EvalOptions opt;
    opt.n_test = 40;
    opt.t_end = 20.0;
    opt.seed = 99;
    EvalReport a = aggregate(make_rhs, Task::mass_spring, opt);
    REQUIRE(a.per_trajectory_rmse.size() == 40);
    REQUIRE(a.overflow_count > 0);
    REQUIRE(std::isfinite(a.median));
    REQUIRE(a.n_test == 40);

    EvalReport b = aggregate(make_rhs, Task::mass_spring, opt);
    REQUIRE(a.per_trajectory_rmse == b.per_trajectory_rmse);

    EvalOptions par = opt;
    par.jobs = 4;
    EvalReport c = aggregate(make_rhs, Task::mass_spring, par);
    REQUIRE(a.per_trajectory_rmse == c.per_trajectory_rmse);

    // percentile fields are consistent with the stored per-trajectory array
    std::vector<double> sorted = a.per_trajectory_rmse;
    std::sort(sorted.begin(), sorted.end());
    REQUIRE(a.median == percentile_sorted(sorted, 50.0));
    REQUIRE(a.p2_5 == percentile_sorted(sorted, 2.5));
    REQUIRE(a.p97_5 == percentile_sorted(sorted, 97.5));
}

TEST_CASE("trained hnn keeps its energy error flat when the horizon doubles", "[evaluation]") {
    DataProtocol protocol{10, 30, 0.0, 2.0 * 3.141592653589793};
    Dataset ds = generate_dataset(Task::mass_spring, protocol, 0.05, 21, Sampler::normal);

    TrainConfig cfg;
    cfg.task = Task::mass_spring;
    cfg.model_kind = ModelKind::hnn;
    cfg.constraint.kind = ConstraintKind::none;
    cfg.epochs = 150;
    cfg.batch_size = 32;
    cfg.seed = 5;
    cfg.mlp = MlpConfig{2, 2, 32, Activation::softplus, 1};
    TrainResult tr = train(cfg, ds);
    REQUIRE_FALSE(tr.aborted);

    auto make_rhs = [&]() -> RhsFn { return ModelRhs(tr.model); };
    EvalOptions opt;
    opt.n_test = 10;
    opt.seed = 3;
    opt.t_end = 100.0;
    EvalReport at100 = aggregate(make_rhs, Task::mass_spring, opt);
    opt.t_end = 200.0;
    EvalReport at200 = aggregate(make_rhs, Task::mass_spring, opt);
    REQUIRE(std::isfinite(at100.median));
    REQUIRE(std::isfinite(at200.median));
    REQUIRE(at200.median <= 2.0 * at100.median);
}
