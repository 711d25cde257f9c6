#include "emaxbr/inference.hpp"

#include "emaxbr/linalg.hpp"
#include "emaxbr/parallel.hpp"
#include "emaxbr/rng.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace emaxbr {

double normal_critical_value(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidLevel("confidence level must lie in (0, 1)");
    static const boost::math::normal_distribution<double> standard;
    return boost::math::quantile(standard, 0.5 + 0.5 * level);
}

WaldInterval wald_ci(double estimate, double se, double level) {
    const double z = normal_critical_value(level);
    if (!(se > 0.0) || !std::isfinite(se)) throw std::invalid_argument("standard error must be positive and finite");
    return {estimate, se, estimate - z * se, estimate + z * se, level};
}

std::array<std::optional<WaldInterval>, 3> wald_intervals(const FitResult& fit, double level) {
    std::array<std::optional<WaldInterval>, 3> out;
    if (!fit.params || !fit.std_errors) return out;
    const Vec3 est = fit.params->vec();
    for (int s = 0; s < 3; ++s) {
        const double se = (*fit.std_errors)[s];
        if (se > 0.0 && std::isfinite(se)) out[s] = wald_ci(est[s], se, level);
    }
    return out;
}

Mat3 covariance(EstimatorKind kind, const EmaxParams& params, const ObservationSet& data) {
    const Mat3 curvature =
        kind == EstimatorKind::MPLE ? penalized_observed_information(params, data) : Mat3(-hessian(params, data));
    const auto inv = symmetric_inverse(curvature);
    if (!inv) throw SingularInformation();
    return *inv;
}

TooManyFailures::TooManyFailures(int f, int t)
    : std::runtime_error(std::to_string(f) + " of " + std::to_string(t) + " bootstrap refits failed"),
      failed(f),
      total(t) {}

ObservationSet bootstrap_resample(const ObservationSet& data, std::uint64_t seed, std::uint64_t replicate) {
    const ObservationSet agg = data.aggregated();
    std::vector<DoseGroup> out;
    out.reserve(agg.size());
    std::uint64_t arm = 0;
    for (const auto& g : agg.groups()) {
        int events = 0;
        for (int k = 0; k < g.n; ++k) {
            const double u = rng::uniform(seed, rng::kStreamBootstrap, replicate, (arm << 32) | std::uint64_t(k));
            // Subjects 0..events-1 of the arm are responders.
            const int pick = std::min(g.n - 1, static_cast<int>(u * g.n));
            if (pick < g.events) ++events;
        }
        out.push_back({g.dose, g.n, events});
        ++arm;
    }
    return ObservationSet::from_groups(std::move(out));
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap_bands(const ObservationSet& data, EstimatorKind kind, const std::vector<double>& doses,
                                int n_boot, std::uint64_t seed, const SolverConfig& config, double level,
                                std::size_t threads) {
    if (n_boot < 1) throw std::invalid_argument("n_boot must be at least 1");
    if (!(level > 0.0 && level < 1.0)) throw InvalidLevel("confidence level must lie in (0, 1)");
    for (double d : doses)
        if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("doses must be finite and nonnegative");

    const ObservationSet agg = data.aggregated();
    BootstrapResult res;
    res.kind = kind;
    res.n_boot = n_boot;
    res.seed = seed;
    res.level = level;

    const FitResult base = fit(kind, agg, config);
    res.point_params = base.params;

    std::vector<std::optional<EmaxParams>> refits(static_cast<std::size_t>(n_boot));
    parallel_for(refits.size(), threads, [&](std::size_t r) {
        SolverConfig cfg = config;
        cfg.seed = rng::hash_key(config.seed, rng::kStreamBootstrap, r, 0);
        const FitResult f = fit(kind, bootstrap_resample(agg, seed, r), cfg);
        if (f.status != FitStatus::FailedToEstimate && f.params) refits[r] = f.params;
    });

    std::vector<EmaxParams> ok;
    for (const auto& p : refits)
        if (p) ok.push_back(*p);
    res.n_failed = n_boot - static_cast<int>(ok.size());
    if (2 * res.n_failed > n_boot) throw TooManyFailures(res.n_failed, n_boot);

    const double alpha = 1.0 - level;
    for (double d : doses) {
        std::vector<double> probs;
        probs.reserve(ok.size());
        for (const auto& p : ok) probs.push_back(predict_prob(p, d));
        std::sort(probs.begin(), probs.end());
        BootstrapBand b;
        b.dose = d;
        b.point = base.params ? predict_prob(*base.params, d) : sorted_quantile(probs, 0.5);
        b.lower = sorted_quantile(probs, 0.5 * alpha);
        b.upper = sorted_quantile(probs, 1.0 - 0.5 * alpha);
        b.n_boot = n_boot;
        b.seed = seed;
        res.bands.push_back(b);
    }
    return res;
}

}  // namespace emaxbr
