#pragma once

#include "emaxbr/estimators.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace emaxbr {

class InvalidLevel : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct WaldInterval {
    double estimate = 0.0;
    double std_err = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.95;
};

/// Two-sided standard-normal critical value z with P(|Z| <= z) = level.
double normal_critical_value(double level);

/// estimate -/+ z * se. Throws InvalidLevel unless level is in (0, 1) and
/// std::invalid_argument unless se > 0.
WaldInterval wald_ci(double estimate, double se, double level = 0.95);

/// One interval per parameter; empty where the fit has no standard error.
std::array<std::optional<WaldInterval>, 3> wald_intervals(const FitResult& fit, double level = 0.95);

/// [-H]^{-1} for MLE, CoxSnell and Firth; [O*]^{-1} for MPLE. Throws
/// SingularInformation when the matrix cannot be inverted.
Mat3 covariance(EstimatorKind kind, const EmaxParams& params, const ObservationSet& data);

struct BootstrapBand {
    double dose = 0.0;
    double point = 0.0;  // from the fit on the original data
    double lower = 0.0;
    double upper = 0.0;
    int n_boot = 0;
    std::uint64_t seed = 0;
};

struct BootstrapResult {
    EstimatorKind kind = EstimatorKind::MLE;
    std::vector<BootstrapBand> bands;
    int n_boot = 0;
    int n_failed = 0;  // replicates dropped because the refit failed
    std::uint64_t seed = 0;
    double level = 0.95;
    std::optional<EmaxParams> point_params;
};

class TooManyFailures : public std::runtime_error {
public:
    TooManyFailures(int failed, int total);
    int failed;
    int total;
};

/// Resamples subjects with replacement within each dose arm (arm sizes
/// fixed). Replicate r of a given seed is always the same dataset.
ObservationSet bootstrap_resample(const ObservationSet& data, std::uint64_t seed, std::uint64_t replicate);

/// Percentile bands of predict_prob at `doses` over n_boot stratified
/// bootstrap refits of `kind`. Failed refits are dropped and counted; more
/// than half failing throws TooManyFailures.
BootstrapResult bootstrap_bands(const ObservationSet& data, EstimatorKind kind, const std::vector<double>& doses,
                                int n_boot, std::uint64_t seed, const SolverConfig& config, double level = 0.95,
                                std::size_t threads = 1);

/// Type-7 sample quantile of an already sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double p);

}  // namespace emaxbr
