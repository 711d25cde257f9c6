#pragma once

#include "emaxbr/cumulants.hpp"
#include "emaxbr/model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emaxbr {

enum class EstimatorKind { MLE, CoxSnell, Firth, MPLE };

inline constexpr std::array<EstimatorKind, 4> kAllEstimators = {
    EstimatorKind::MLE, EstimatorKind::CoxSnell, EstimatorKind::Firth, EstimatorKind::MPLE};

std::string_view to_string(EstimatorKind kind);
/// Accepts "mle", "coxsnell"/"cox-snell"/"cox_snell", "firth", "mple" (case-insensitive).
std::optional<EstimatorKind> parse_estimator(std::string_view name);

class SingularInformation : public std::runtime_error {
public:
    SingularInformation() : std::runtime_error("expected information is singular") {}
};

struct SolverConfig {
    double grad_tol = 1e-6;
    double rel_change_tol = 1e-8;
    int max_iter = 2000;
    double ed50_upper_mult = 10.0;   // times the largest dose
    double ed50_lower_mult = 0.02;   // times the smallest positive dose
    double rel_se_threshold = 5.0;
    std::uint64_t seed = 0;
    // A relative-change stop only counts as convergence when the gradient
    // (or modified score) is below stationarity_tol and the full Newton step
    // from the final iterate, relative to max(1, |theta|), is below step_tol.
    // Otherwise the objective is flat because the iterate is drifting.
    double stationarity_tol = 1e-3;
    double step_tol = 1e-3;
    // Trust-region radius on |delta theta|_inf for every solver.
    double max_step = 2.0;

    void validate() const;  // throws std::invalid_argument naming the field
};

enum class FitStatus { Converged, FailedToEstimate, Unstable };

enum class StatusReason {
    None,
    IterationLimit,       // budget exhausted
    NonStationary,        // stopped by the relative-change rule away from a root
    NonFinite,            // objective or parameters left the finite range
    SingularCurvature,    // final -H (or O*) not invertible
    SingularInformation,  // expected information not invertible
    BoundHit,             // ED50 outside [lower_mult * D_min+, upper_mult * D_max]
    UndefinedSE,          // covariance missing, indefinite, or a variance <= 0
    RelativeSEExceeded,   // SE / |estimate| above rel_se_threshold
    Separation,           // fitted probabilities driven to 0 or 1
};

std::string_view to_string(FitStatus s);
std::string_view to_string(StatusReason r);

enum class StopRule { None, Gradient, RelativeChange, Stalled, IterationLimit, NonFinite };

struct FitResult {
    EstimatorKind kind = EstimatorKind::MLE;
    std::optional<EmaxParams> params;
    std::optional<Mat3> covariance;
    std::optional<Vec3> std_errors;
    FitStatus status = FitStatus::FailedToEstimate;
    StatusReason reason = StatusReason::None;
    int iterations = 0;
    std::optional<EmaxParams> base_mle;  // CoxSnell only
    // Where the solver stopped, kept even on failure for diagnostics.
    EmaxParams last_iterate;
    StopRule stop = StopRule::None;
    double residual = 0.0;  // max-abs of the estimating equation at last_iterate
    int restarts = 0;

    bool has_params() const { return params.has_value(); }
};

/// Deterministic starting triple: empirical logit of the lowest-dose arm
/// seeds a two-parameter logistic fit on dose / (ED50 + dose) over a
/// 21-point log-ED50 grid; the best grid point wins.
struct StartingValues {
    EmaxParams params;
    bool degenerate = false;  // every subject had the same response
};
StartingValues starting_values(const ObservationSet& data);

FitResult fit_mle(const ObservationSet& data, const SolverConfig& config = {});

/// First-order bias B(theta), contracted with K = (-I)^{-1}.
Vec3 cox_snell_bias(const EmaxParams& params, const ObservationSet& data);
/// The contraction B_s = sum K_sr K_jl (k3_rjl / 2 + k2_1_rj,l) for a given K.
Vec3 cox_snell_contraction(const Mat3& neg_info_inverse, const CumulantBundle& c);
FitResult fit_cox_snell(const ObservationSet& data, const SolverConfig& config = {});

/// U_s + 1/2 tr(I^{-1}(P_s + k2_1(., ., s))).
Vec3 firth_modified_score(const EmaxParams& params, const ObservationSet& data);
FitResult fit_firth(const ObservationSet& data, const SolverConfig& config = {});

/// log L + 1/2 log det I; -inf when I is not positive definite.
double penalized_loglik(const EmaxParams& params, const ObservationSet& data);
/// U_s + 1/2 tr(I^{-1} dI/dtheta_s), the exact gradient of penalized_loglik.
Vec3 penalized_score(const EmaxParams& params, const ObservationSet& data);
/// O* = -d U* / d theta by central differences of the analytic penalized score.
Mat3 penalized_observed_information(const EmaxParams& params, const ObservationSet& data);
FitResult fit_mple(const ObservationSet& data, const SolverConfig& config = {});

FitResult fit(EstimatorKind kind, const ObservationSet& data, const SolverConfig& config = {});

/// Applies the instability rules to (params, covariance). Returns
/// Converged/None when none fire.
std::pair<FitStatus, StatusReason> classify_stability(const EmaxParams& params,
                                                      const std::optional<Mat3>& covariance,
                                                      const ObservationSet& data,
                                                      const SolverConfig& config);

}  // namespace emaxbr
