#include "poinv/belief_gauss.hpp"
#include "poinv/belief_grid.hpp"
#include "poinv/normal.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

namespace {

using namespace poinv;

ProblemConfig fine_config(double delta) {
    ProblemConfig cfg;
    cfg.delta = delta;
    return cfg;
}

BeliefGrid point_mass(double x, const ProblemConfig& cfg) {
    return init_belief([x](double v) { return std::abs(v - x) < 1e-9 ? 1.0 : 0.0; },
                       build_grid(cfg.x_lower, cfg.x_upper, cfg.delta));
}

void expect_normalised(const BeliefGrid& z) {
    EXPECT_NEAR(z.mass(), 1.0, 1e-9);
    for (double v : z.density) EXPECT_GE(v, 0.0);
    EXPECT_LE(z.lo, z.hi);
    for (std::size_t i = 0; i < z.size(); ++i)
        if (!z.in_support(i)) {
            EXPECT_EQ(z.density[i], 0.0);
        }
}

TEST(BeliefGrid, InitialPrior) {
    const ProblemConfig cfg;
    const auto z = init_belief(cfg);
    EXPECT_EQ(z.size(), 101u);
    expect_normalised(z);
    const auto peak = std::max_element(z.density.begin(), z.density.end()) - z.density.begin();
    EXPECT_DOUBLE_EQ(z.grid[static_cast<std::size_t>(peak)], 2.0);
    EXPECT_NEAR(z.mean(), 2.0, 1e-3);
    EXPECT_NEAR(z.variance(), 4.0, 0.05);
}

TEST(BeliefGrid, ZeroMassPriorRejected) {
    EXPECT_THROW(init_belief([](double) { return 0.0; }, build_grid(0, 1, 0.5)), FilterError);
    ProblemConfig cfg;
    cfg.initial_var = 0;
    EXPECT_THROW(init_belief(cfg), std::invalid_argument);
}

TEST(BeliefGrid, ObservationConditioningMatchesPosteriorInit) {
    const auto cfg = fine_config(0.1);
    for (double y0 : {-3.0, 0.0, 2.0, 7.0}) {
        const auto z = condition_on_observation(init_belief(cfg), y0, cfg);
        const auto g = posterior_init(cfg, y0);
        expect_normalised(z);
        EXPECT_NEAR(z.mean(), g.mean, 1e-2);
        EXPECT_NEAR(z.variance(), g.var, 2e-2);
    }
}

TEST(BeliefGrid, NextBeliefMatchesClosedFormOnRandomSequences) {
    const auto cfg = fine_config(0.1);
    const auto prior = init_belief(cfg);
    Engine rng(2024);
    std::uniform_real_distribution<double> act(0.0, 4.0);
    for (int seq = 0; seq < 100; ++seq) {
        const auto draws = draw_episode(cfg, 77, static_cast<std::uint64_t>(seq));
        double x = draws.x0;
        double y = observe(x, draws.noise[0]);
        auto z = condition_on_observation(prior, y, cfg);
        auto g = posterior_init(cfg, y);
        for (int t = 0; t < cfg.len_episode; ++t) {
            const double a = act(rng);
            x = dynamics_step(x, a, draws.demand[static_cast<std::size_t>(t)], cfg.dynamics_kind);
            y = observe(x, draws.noise[static_cast<std::size_t>(t) + 1]);
            z = next_belief(z, a, y, cfg);
            g = mean_update(g, a, y, cfg);
            expect_normalised(z);
            ASSERT_NEAR(z.mean(), g.mean, 1e-2) << "sequence " << seq << " t " << t;
            ASSERT_NEAR(z.variance(), g.var, 2e-2) << "sequence " << seq << " t " << t;
        }
    }
}

TEST(BeliefGrid, PointMassWithDeterministicDemand) {
    auto cfg = fine_config(0.5);
    cfg.sigma_d_sq = 1e-6;
    const auto z = point_mass(2.0, cfg);
    EXPECT_EQ(z.lo, z.hi);
    for (double y : {-5.0, 1.0, 3.3, 12.0}) {
        const auto next = next_belief(z, 0.0, y, cfg);
        ASSERT_EQ(next.lo, next.hi);
        EXPECT_DOUBLE_EQ(next.grid[next.lo], 1.0);
        EXPECT_NEAR(next.mean(), 1.0, 1e-12);
        EXPECT_NEAR(next.mass(), 1.0, 1e-12);
    }
}

// Predictive density of x2 = x1 - D with x1 ~ N(m, s^2) and D ~ Exp(1):
// e^{x2} e^{-m + s^2/2} Phi((m - s^2 - x2) / s).
double exponential_predictive(double x2, double m, double s) {
    return std::exp(x2 - m + 0.5 * s * s) * normal::cdf((m - s * s - x2) / s);
}

TEST(BeliefGrid, ExponentialDemandAgainstDenseReference) {
    auto cfg = exponential_demand_config(fine_config(0.05));
    cfg.min_zvalue = 0;
    const double y = 1.0;
    // Reference posterior mean on a 0.001 grid.
    double mass = 0, first = 0;
    for (double x = -15; x <= 15; x += 0.001) {
        const double w = exponential_predictive(x, 2.0, 2.0) * normal::density(y, x, 1.0);
        mass += w;
        first += w * x;
    }
    const double reference = first / mass;
    const auto z = next_belief(init_belief(cfg), 0.0, y, cfg);
    expect_normalised(z);
    EXPECT_NEAR(z.mean(), reference, 1e-2);
    // Gaussian moment matching of the predictive gives exactly 1.
    EXPECT_GT(std::abs(reference - 1.0), 0.01);

    // Default grid still normalises and stays close.
    auto coarse = exponential_demand_config();
    const auto zc = next_belief(init_belief(coarse), 0.0, y, coarse);
    expect_normalised(zc);
    EXPECT_NEAR(zc.mean(), reference, 0.05);
}

TEST(BeliefGrid, InconsistentObservationFailsLoudly) {
    auto cfg = fine_config(0.5);
    cfg.sigma_d_sq = 1e-4;
    cfg.sigma_eta_sq = 0.01;
    const auto z = point_mass(-20.0, cfg);
    EXPECT_THROW(next_belief(z, 0.0, 30.0, cfg), FilterError);
}

TEST(BeliefGrid, TrimmingDiscardsLittleMass) {
    const ProblemConfig cfg;
    const auto draws = draw_episode(cfg, 5, 0);
    auto z = condition_on_observation(init_belief(cfg), observe(draws.x0, draws.noise[0]), cfg);
    EXPECT_LT(z.trimmed_mass, 0.005);
    Engine rng(1);
    std::uniform_real_distribution<double> act(0, 5), obs(-4, 8);
    for (int k = 0; k < 200; ++k) {
        z = next_belief(z, act(rng), obs(rng), cfg);
        EXPECT_LT(z.trimmed_mass, 0.005);
        expect_normalised(z);
        if (k % 4 == 3) z = condition_on_observation(init_belief(cfg), obs(rng), cfg);
    }
}

TEST(BeliefGrid, ExpectedCostOfPointMass) {
    const ProblemConfig cfg;
    const auto z = point_mass(1.5, cfg);
    for (double a : {0.0, 0.7, 3.0}) EXPECT_NEAR(belief_expected_cost(z, a, cfg), expected_stage_cost(1.5, a, cfg), 1e-9);
}

TEST(BeliefGrid, ExpectedCostOfGaussianBelief) {
    const auto cfg = fine_config(0.1);
    for (double y0 : {-1.0, 2.0, 5.0}) {
        const auto z = condition_on_observation(init_belief(cfg), y0, cfg);
        const auto g = posterior_init(cfg, y0);
        for (double a : {0.0, 1.0, 4.0})
            EXPECT_NEAR(belief_expected_cost(z, a, cfg), gauss_belief_cost(g, a, cfg), 1e-3) << y0 << " " << a;
    }
}

TEST(BeliefGrid, ExpectedCostNondecreasingInFixedCost) {
    ProblemConfig cfg;
    const auto z = condition_on_observation(init_belief(cfg), 1.0, cfg);
    double prev = -1;
    for (double K : {0.0, 0.5, 1.0, 4.0}) {
        cfg.fixed_cost = K;
        const double c = belief_expected_cost(z, 1.0, cfg);
        EXPECT_GE(c, prev);
        prev = c;
    }
}

TEST(BeliefGrid, CsvExport) {
    const ProblemConfig cfg;
    const auto z = init_belief(cfg);
    std::ostringstream out;
    write_belief_csv(out, z);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,density");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        EXPECT_EQ(std::stod(line.substr(0, comma)), z.grid[rows]);
        EXPECT_EQ(std::stod(line.substr(comma + 1)), z.density[rows]);
        ++rows;
    }
    EXPECT_EQ(rows, z.size());
}

}  // namespace
