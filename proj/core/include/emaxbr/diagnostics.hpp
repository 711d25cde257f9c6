#pragma once

#include "emaxbr/estimators.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emaxbr {

enum class Separation { None, Quasi, Complete };

enum class Shape { ConcaveIncreasing, ConvexIncreasing, NonMonotone, Flat };

std::string_view to_string(Separation s);
std::string_view to_string(Shape s);
/// Accepts the enumerator names plus "case_i" (NonMonotone) and "case_ii"
/// (ConvexIncreasing), case-insensitive.
std::optional<Shape> parse_shape(std::string_view name);

class InsufficientArms : public std::invalid_argument {
public:
    InsufficientArms() : std::invalid_argument("shape classification needs at least three dose arms") {}
};

/// Threshold scan over the sorted dose arms, in both directions. Complete
/// when every arm is pure and a dose cut splits non-responders from
/// responders (all responses identical counts as complete). Quasi when the arms on one side of some cut are pure with the
/// predicted label and the arm at the boundary is mixed.
Separation detect_separation(const ObservationSet& data);

/// Arm-mean shape. With three arms: increasing with m1 > m2 is concave,
/// increasing with m1 <= m2 is convex, anything else is non-monotone, where
/// m_k is the secant slope from the lowest dose to dose k+1. More arms: flat
/// when the spread of arm proportions is below 1/sqrt(N), non-monotone when
/// they are not nondecreasing, concave when the anchored secant slopes are
/// strictly decreasing, convex otherwise.
Shape classify_shape(const ObservationSet& data);

struct DiagnosticReport {
    Separation separation = Separation::None;
    std::optional<Shape> shape;  // empty with fewer than three arms
    std::vector<ArmSummary> per_arm;
    std::vector<std::string> flags;
    // Filled by stability_report only.
    std::optional<FitStatus> status;
    StatusReason reason = StatusReason::None;
};

/// Data-only diagnostics: separation, shape and the per-arm table.
DiagnosticReport diagnose(const ObservationSet& data);

/// Re-applies the instability rules to a fit that carries parameters and
/// adds the data diagnostics. An estimator status of Unstable is kept even
/// when the rules alone would pass, so the report never contradicts the fit.
DiagnosticReport stability_report(const FitResult& fit, const ObservationSet& data, const SolverConfig& config);

}  // namespace emaxbr
