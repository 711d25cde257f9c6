#include "oracles.hpp"

#include "emaxbr/data_io.hpp"
#include "emaxbr/estimators.hpp"
#include "emaxbr/inference.hpp"
#include "emaxbr/linalg.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace emaxbr;
using namespace emaxbr::testing;

namespace {

ObservationSet turandot() { return read_data_csv(std::string(EMAXBR_DATA_DIR) + "/turandot_4arm.csv"); }

const std::vector<double> kArmDoses{0, 7.5, 22.5, 75};

}  // namespace

TEST(NormalCriticalValue, KnownQuantiles) {
    EXPECT_NEAR(normal_critical_value(0.95), 1.959964, 5e-7);
    EXPECT_NEAR(normal_critical_value(0.90), 1.644854, 5e-7);
    EXPECT_NEAR(normal_critical_value(0.50), 0.674490, 5e-7);
}

TEST(WaldCi, TurandotLogEd50Row) {
    const WaldInterval w = wald_ci(0.480, 1.856, 0.95);
    EXPECT_NEAR(w.lower, -3.159, 0.002);
    EXPECT_NEAR(w.upper, 4.119, 0.002);
    EXPECT_EQ(w.level, 0.95);
}

TEST(WaldCi, WidthAndSymmetry) {
    const WaldInterval w = wald_ci(1.3, 0.4);
    EXPECT_NEAR(w.upper - w.lower, 2 * 1.959964 * 0.4, 1e-6);
    EXPECT_NEAR(0.5 * (w.upper + w.lower), 1.3, 1e-15);
    EXPECT_LT(w.lower, w.upper);
    const WaldInterval h = wald_ci(0.0, 1.0, 0.5);
    EXPECT_NEAR(h.upper, 0.67449, 1e-5);
}

TEST(WaldCi, RejectsBadInputs) {
    EXPECT_THROW(wald_ci(0, 1, 0.0), InvalidLevel);
    EXPECT_THROW(wald_ci(0, 1, 1.0), InvalidLevel);
    EXPECT_THROW(wald_ci(0, 1, std::nan("")), InvalidLevel);
    EXPECT_THROW(wald_ci(0, 0, 0.95), std::invalid_argument);
    EXPECT_THROW(wald_ci(0, -1, 0.95), std::invalid_argument);
}

TEST(WaldIntervals, EmptyWithoutStandardErrors) {
    FitResult f;
    f.params = EmaxParams{0, 1, 1};
    for (const auto& w : wald_intervals(f)) EXPECT_FALSE(w.has_value());
    f.std_errors = Vec3(0.1, 0.2, 0.3);
    const auto w = wald_intervals(f, 0.9);
    ASSERT_TRUE(w[2].has_value());
    EXPECT_NEAR(w[2]->upper - w[2]->lower, 2 * 1.644854 * 0.3, 1e-6);
}

TEST(Covariance, MatchesFitCovariance) {
    const ObservationSet d = turandot();
    for (EstimatorKind k : kAllEstimators) {
        const FitResult f = fit(k, d);
        if (!f.covariance) continue;
        EXPECT_LT(rel_err(covariance(k, *f.params, d), *f.covariance), 1e-10) << to_string(k);
    }
}

TEST(Covariance, MpleUsesPenalizedCurvature) {
    const ObservationSet d = turandot();
    const FitResult f = fit_mple(d);
    const Mat3 want = symmetric_inverse(symmetrize(penalized_observed_information(*f.params, d))).value();
    EXPECT_LT(rel_err(covariance(EstimatorKind::MPLE, *f.params, d), want), 1e-10);
}

TEST(Covariance, ShrinksWithSampleSize) {
    std::vector<DoseGroup> g1, g4;
    const int events[] = {3, 6, 9, 12, 13};
    const double doses[] = {0, 7.5, 22.5, 75, 225};
    for (int a = 0; a < 5; ++a) {
        g1.push_back({doses[a], 20, events[a]});
        g4.push_back({doses[a], 80, 4 * events[a]});
    }
    const ObservationSet d1 = ObservationSet::from_groups(g1), d4 = ObservationSet::from_groups(g4);
    const FitResult f1 = fit_mle(d1), f4 = fit_mle(d4);
    ASSERT_TRUE(f1.covariance && f4.covariance);
    // Same proportions give the same MLE, so the curvature scales exactly.
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            EXPECT_NEAR((*f4.covariance)(a, b) * 4.0, (*f1.covariance)(a, b), 0.1 * std::abs((*f1.covariance)(a, b)));
}

TEST(Covariance, SingularThrows) {
    EXPECT_THROW(covariance(EstimatorKind::MLE, {0, 1, 1}, ObservationSet::from_groups({{0, 10, 4}})),
                 SingularInformation);
}

TEST(SortedQuantile, TypeSeven) {
    const std::vector<double> v{1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(sorted_quantile(v, 1.0), 5.0);
    EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(sorted_quantile(v, 0.1), 1.4);
    EXPECT_DOUBLE_EQ(sorted_quantile({7.0}, 0.3), 7.0);
}

TEST(BootstrapResample, StratifiedAndReproducible) {
    const ObservationSet d = turandot();
    const ObservationSet a = bootstrap_resample(d, 5, 17), b = bootstrap_resample(d, 5, 17);
    EXPECT_EQ(a.groups(), b.groups());
    const auto arms = a.arms(), orig = d.arms();
    ASSERT_EQ(arms.size(), orig.size());
    for (std::size_t k = 0; k < arms.size(); ++k) {
        EXPECT_EQ(arms[k].dose, orig[k].dose);
        EXPECT_EQ(arms[k].n, orig[k].n);
    }
    bool differs = false;
    for (int r = 0; r < 20 && !differs; ++r) differs = bootstrap_resample(d, 5, r).arms()[1].events != orig[1].events;
    EXPECT_TRUE(differs);
}

TEST(BootstrapBands, SingleReplicateDegenerates) {
    const auto r = bootstrap_bands(turandot(), EstimatorKind::MLE, kArmDoses, 1, 3, SolverConfig{});
    ASSERT_EQ(r.bands.size(), kArmDoses.size());
    if (r.n_failed == 0)
        for (const auto& b : r.bands) EXPECT_EQ(b.lower, b.upper);
}

TEST(BootstrapBands, RejectsNonPositiveCount) {
    EXPECT_THROW(bootstrap_bands(turandot(), EstimatorKind::MLE, kArmDoses, 0, 3, SolverConfig{}),
                 std::invalid_argument);
}

TEST(BootstrapBands, OrderedAndReproducible) {
    const ObservationSet d = turandot();
    const auto a = bootstrap_bands(d, EstimatorKind::MPLE, kArmDoses, 200, 11, SolverConfig{});
    const auto b = bootstrap_bands(d, EstimatorKind::MPLE, kArmDoses, 200, 11, SolverConfig{}, 0.95, 4);
    ASSERT_EQ(a.bands.size(), b.bands.size());
    for (std::size_t k = 0; k < a.bands.size(); ++k) {
        EXPECT_EQ(a.bands[k].lower, b.bands[k].lower);
        EXPECT_EQ(a.bands[k].upper, b.bands[k].upper);
        EXPECT_LE(0.0, a.bands[k].lower);
        EXPECT_LE(a.bands[k].lower, a.bands[k].upper);
        EXPECT_LE(a.bands[k].upper, 1.0);
        EXPECT_EQ(a.bands[k].n_boot, 200);
        EXPECT_EQ(a.bands[k].seed, 11u);
    }
}

TEST(BootstrapBands, NinetyInsideNinetyFive) {
    const ObservationSet d = turandot();
    const auto b95 = bootstrap_bands(d, EstimatorKind::MPLE, kArmDoses, 300, 21, SolverConfig{}, 0.95);
    const auto b90 = bootstrap_bands(d, EstimatorKind::MPLE, kArmDoses, 300, 21, SolverConfig{}, 0.90);
    for (std::size_t k = 0; k < kArmDoses.size(); ++k) {
        EXPECT_GE(b90.bands[k].lower, b95.bands[k].lower);
        EXPECT_LE(b90.bands[k].upper, b95.bands[k].upper);
    }
}

TEST(BootstrapBands, MpleNarrowerThanMleAtLowDoses) {
    const ObservationSet d = turandot();
    const auto mle = bootstrap_bands(d, EstimatorKind::MLE, kArmDoses, 1000, 2024, SolverConfig{}, 0.95, 4);
    const auto mple = bootstrap_bands(d, EstimatorKind::MPLE, kArmDoses, 1000, 2024, SolverConfig{}, 0.95, 4);
    for (std::size_t k : {1u, 2u}) {
        const double w_mle = mle.bands[k].upper - mle.bands[k].lower;
        const double w_mple = mple.bands[k].upper - mple.bands[k].lower;
        EXPECT_LT(w_mple, w_mle) << "dose " << kArmDoses[k];
    }
}

TEST(BootstrapBands, CoxSnellHasHighestPlaceboPoint) {
    const ObservationSet d = turandot();
    double cs = 0.0, others = 0.0;
    for (EstimatorKind k : kAllEstimators) {
        const FitResult f = fit(k, d);
        ASSERT_TRUE(f.params.has_value());
        const double p0 = predict_prob(*f.params, 0.0);
        if (k == EstimatorKind::CoxSnell)
            cs = p0;
        else
            others = std::max(others, p0);
    }
    EXPECT_GT(cs, others);
}

TEST(BootstrapBands, TooManyFailures) {
    // Pure arms almost always resample to a completely separated set, where
    // the MLE does not exist.
    const ObservationSet d = ObservationSet::from_groups({{0, 10, 0}, {10, 10, 1}, {100, 10, 10}});
    EXPECT_THROW(bootstrap_bands(d, EstimatorKind::MLE, {0, 10, 100}, 100, 1, SolverConfig{}), TooManyFailures);
}
