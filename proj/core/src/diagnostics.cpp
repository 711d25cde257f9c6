#include "emaxbr/diagnostics.hpp"

#include "emaxbr/linalg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace emaxbr {

std::string_view to_string(Separation s) {
    switch (s) {
        case Separation::None: return "None";
        case Separation::Quasi: return "Quasi";
        case Separation::Complete: return "Complete";
    }
    return "?";
}

std::string_view to_string(Shape s) {
    switch (s) {
        case Shape::ConcaveIncreasing: return "ConcaveIncreasing";
        case Shape::ConvexIncreasing: return "ConvexIncreasing";
        case Shape::NonMonotone: return "NonMonotone";
        case Shape::Flat: return "Flat";
    }
    return "?";
}

std::optional<Shape> parse_shape(std::string_view name) {
    std::string s(name);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "concaveincreasing" || s == "concave") return Shape::ConcaveIncreasing;
    if (s == "convexincreasing" || s == "convex" || s == "case_ii") return Shape::ConvexIncreasing;
    if (s == "nonmonotone" || s == "case_i") return Shape::NonMonotone;
    if (s == "flat") return Shape::Flat;
    return std::nullopt;
}

namespace {

enum class Purity { Zero, One, Mixed };

Purity purity(const ArmSummary& a) {
    if (a.events == 0) return Purity::Zero;
    if (a.events == a.n) return Purity::One;
    return Purity::Mixed;
}

// Scan with responders expected at the high-dose end.
Separation scan(const std::vector<Purity>& arms) {
    const std::size_t m = arms.size();
    std::size_t low = 0;
    while (low < m && arms[low] == Purity::Zero) ++low;
    std::size_t high = 0;
    while (high < m - low && arms[m - 1 - high] == Purity::One) ++high;
    if (low + high == m) return Separation::Complete;  // includes all-identical responses
    if ((low > 0 || high > 0) && low + high < m) return Separation::Quasi;
    return Separation::None;
}

}  // namespace

Separation detect_separation(const ObservationSet& data) {
    const auto arms = data.arms();
    if (arms.empty()) return Separation::None;
    std::vector<Purity> up;
    for (const auto& a : arms) up.push_back(purity(a));
    // Responders at the low-dose end: swap the labels and scan again.
    std::vector<Purity> down = up;
    for (auto& p : down)
        if (p != Purity::Mixed) p = p == Purity::Zero ? Purity::One : Purity::Zero;

    const Separation a = scan(up);
    const Separation b = scan(down);
    if (a == Separation::Complete || b == Separation::Complete) return Separation::Complete;
    if (a == Separation::Quasi || b == Separation::Quasi) return Separation::Quasi;
    return Separation::None;
}

Shape classify_shape(const ObservationSet& data) {
    const auto arms = data.arms();
    if (arms.size() < 3) throw InsufficientArms();
    std::vector<double> y;
    for (const auto& a : arms) y.push_back(a.proportion());

    auto slope = [&](std::size_t k) { return (y[k] - y[0]) / (arms[k].dose - arms[0].dose); };

    if (arms.size() == 3) {
        const bool increasing = y[0] < y[1] && y[1] < y[2];
        if (!increasing) return Shape::NonMonotone;
        return slope(1) > slope(2) ? Shape::ConcaveIncreasing : Shape::ConvexIncreasing;
    }

    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (*hi - *lo < 1.0 / std::sqrt(static_cast<double>(data.total_n()))) return Shape::Flat;
    for (std::size_t k = 1; k < y.size(); ++k)
        if (y[k] < y[k - 1]) return Shape::NonMonotone;
    for (std::size_t k = 2; k < y.size(); ++k)
        if (!(slope(k) < slope(k - 1))) return Shape::ConvexIncreasing;
    return Shape::ConcaveIncreasing;
}

DiagnosticReport diagnose(const ObservationSet& data) {
    DiagnosticReport r;
    r.per_arm = data.arms();
    r.separation = detect_separation(data);
    if (r.separation == Separation::Complete) r.flags.push_back("complete separation");
    if (r.separation == Separation::Quasi) r.flags.push_back("quasi-complete separation");
    try {
        r.shape = classify_shape(data);
        if (*r.shape == Shape::NonMonotone) r.flags.push_back("non-monotone arm proportions");
        if (*r.shape == Shape::ConvexIncreasing) r.flags.push_back("convex increasing arm proportions");
        if (*r.shape == Shape::Flat) r.flags.push_back("flat arm proportions");
    } catch (const InsufficientArms& e) {
        r.flags.push_back(e.what());
    }
    return r;
}

DiagnosticReport stability_report(const FitResult& fit, const ObservationSet& data, const SolverConfig& config) {
    if (!fit.params) throw std::invalid_argument("stability_report needs a fit with parameters");
    DiagnosticReport r = diagnose(data);
    const EmaxParams& p = *fit.params;

    const double ed50 = p.ed50();
    if (!(ed50 <= config.ed50_upper_mult * data.max_dose()) ||
        !(ed50 >= config.ed50_lower_mult * data.min_positive_dose()))
        r.flags.push_back("ED50 outside bounds");

    const auto& cov = fit.covariance;
    const bool se_defined = cov && cov->allFinite() && (cov->diagonal().array() > 0.0).all() &&
                            is_positive_definite(*cov);
    if (!se_defined) {
        r.flags.push_back("undefined standard error");
    } else {
        const Vec3 se = cov->diagonal().cwiseSqrt();
        const Vec3 est = p.vec();
        for (int s = 0; s < 3; ++s)
            if (!(se[s] <= config.rel_se_threshold * std::abs(est[s])))
                r.flags.push_back(std::string("relative standard error of ") + kParamNames[s] +
                                  " exceeds threshold");
    }

    auto [status, reason] = classify_stability(p, cov, data, config);
    if (status == FitStatus::Converged && fit.status == FitStatus::Unstable) {
        status = FitStatus::Unstable;
        reason = fit.reason;
        r.flags.push_back(std::string("estimator reported ") + std::string(to_string(fit.reason)));
    }
    r.status = status;
    r.reason = reason;
    return r;
}

}  // namespace emaxbr
