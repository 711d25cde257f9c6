#pragma once

#include "emaxbr/diagnostics.hpp"
#include "emaxbr/estimators.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace emaxbr {

class StudyValidationError : public std::invalid_argument {
public:
    explicit StudyValidationError(std::vector<std::string> problems);
    std::vector<std::string> problems;  // each starts with the offending key
};

struct SimStudy {
    std::vector<double> doses;
    int n_total = 0;
    EmaxParams truth;
    int n_reps = 0;
    std::vector<EstimatorKind> estimators{kAllEstimators.begin(), kAllEstimators.end()};
    std::uint64_t seed = 0;
    SolverConfig solver;
    double level = 0.95;

    /// Throws StudyValidationError listing every bad field.
    void validate() const;
    /// Even split; the remainder goes to the lowest doses, one each.
    std::vector<int> arm_sizes() const;
};

/// Dataset for one replicate. Subject k of arm a in replicate r responds
/// when uniform(seed, r, a, k) < pi(dose_a).
ObservationSet generate_dataset(const SimStudy& study, std::uint64_t rep_index);

struct ParamMetrics {
    double mean_estimate = 0.0;
    double mbe = 0.0;
    double mse = 0.0;
    double mean_se = 0.0;
    double coverage = 0.0;
    double mean_ci_length = 0.0;
    int n_used = 0;     // replicates with an estimate
    int n_se_used = 0;  // of those, replicates with a standard error
};

struct EstimatorMetrics {
    EstimatorKind kind = EstimatorKind::MLE;
    std::array<ParamMetrics, 3> params{};
    int n_reps = 0;
    int n_fail = 0;
    int n_unstable = 0;
    double fail_pct = 0.0;
    double unstable_pct = 0.0;
};

struct ReplicateRecord {
    int rep = 0;
    EstimatorKind kind = EstimatorKind::MLE;
    FitStatus status = FitStatus::FailedToEstimate;
    StatusReason reason = StatusReason::None;
    std::optional<Vec3> estimate;
    std::optional<Vec3> std_err;
    int iterations = 0;
};

struct SimMetrics {
    EmaxParams truth;
    double level = 0.95;
    int n_reps = 0;
    std::vector<EstimatorMetrics> per_estimator;
    // Shape-conditioned runs only: kept / drawn.
    long long draws = 0;
    double acceptance_rate = 1.0;
    std::vector<ReplicateRecord> audit;

    const EstimatorMetrics* find(EstimatorKind kind) const;
};

/// Folds per-replicate records (in replicate order) into metrics. Failed
/// fits are excluded from every estimate-based cell.
SimMetrics aggregate(const std::vector<ReplicateRecord>& records, const std::vector<EstimatorKind>& estimators,
                     const EmaxParams& truth, double level, int n_reps);

SimMetrics run_study(const SimStudy& study, std::size_t threads = 1);

class ShapeUnreachable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Draws replicates 0, 1, 2, ... and keeps the first n_keep whose arm means
/// classify as `target` (any shape when empty), then fits and aggregates
/// them like run_study.
SimMetrics run_shape_conditioned_study(const SimStudy& study, std::optional<Shape> target, int n_keep,
                                       std::size_t threads = 1);

/// Logistic regression on (1, d, d^2).
struct QuadraticFit {
    Vec3 beta = Vec3::Zero();
    std::optional<Mat3> covariance;
    FitStatus status = FitStatus::FailedToEstimate;
    StatusReason reason = StatusReason::None;
    int iterations = 0;
    std::optional<double> peak_dose;  // -beta1 / (2 beta2), only when beta2 < 0
};
QuadraticFit fit_quadratic_logit(const ObservationSet& data, const SolverConfig& config = {});

/// Mean Bernoulli log-loss of fitted probabilities at the observed doses.
double mean_log_loss(const ObservationSet& data, const std::vector<double>& fitted_probs);

enum class TableFormat { Csv, Text };

/// Estimate, MBE, MSE, Est.SE, CP, Est.Length per (parameter, estimator),
/// parameters in the order log ED50, Emax, E0.
std::string emit_table(const SimMetrics& metrics, TableFormat format);
/// Fail / unstable percentages, one row per estimator.
std::string emit_failure_table(const SimMetrics& metrics, TableFormat format);
/// rep, estimator, status, estimates, standard errors, iterations, reason.
std::string emit_audit_csv(const SimMetrics& metrics);

/// Inverse of emit_table(.., Csv): rebuilds per_estimator (parameter cells
/// and fail/unstable counts). Throws std::invalid_argument on malformed input.
SimMetrics parse_table_csv(const std::string& csv);

}  // namespace emaxbr
