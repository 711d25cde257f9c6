#include "emaxbr/model.hpp"

#include <algorithm>
#include <limits>
#include <map>

namespace emaxbr {

double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double log1pexp(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

ObservationSet ObservationSet::from_subjects(std::span<const double> doses, std::span<const int> y) {
    if (doses.size() != y.size()) throw InvalidData("dose and response vectors differ in length");
    std::vector<DoseGroup> g;
    g.reserve(doses.size());
    for (std::size_t i = 0; i < doses.size(); ++i) {
        if (y[i] != 0 && y[i] != 1) throw InvalidData("response must be 0 or 1");
        g.push_back({doses[i], 1, y[i]});
    }
    return from_groups(std::move(g));
}

ObservationSet ObservationSet::from_groups(std::vector<DoseGroup> groups) {
    for (const auto& gr : groups) {
        if (!std::isfinite(gr.dose) || gr.dose < 0.0) throw InvalidData("dose must be finite and nonnegative");
        if (gr.n <= 0) throw InvalidData("group size must be positive");
        if (gr.events < 0 || gr.events > gr.n) throw InvalidData("events must lie in [0, n]");
    }
    return ObservationSet(std::move(groups));
}

int ObservationSet::total_n() const {
    int s = 0;
    for (const auto& g : groups_) s += g.n;
    return s;
}

int ObservationSet::total_events() const {
    int s = 0;
    for (const auto& g : groups_) s += g.events;
    return s;
}

std::vector<double> ObservationSet::dose_levels() const {
    std::vector<double> d;
    d.reserve(groups_.size());
    for (const auto& g : groups_) d.push_back(g.dose);
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    return d;
}

double ObservationSet::max_dose() const {
    double m = 0.0;
    for (const auto& g : groups_) m = std::max(m, g.dose);
    return m;
}

double ObservationSet::min_positive_dose() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& g : groups_)
        if (g.dose > 0.0) m = std::min(m, g.dose);
    return std::isfinite(m) ? m : 0.0;
}

ObservationSet ObservationSet::aggregated() const {
    std::map<double, DoseGroup> by_dose;
    for (const auto& g : groups_) {
        auto& a = by_dose[g.dose];
        a.dose = g.dose;
        a.n += g.n;
        a.events += g.events;
    }
    std::vector<DoseGroup> out;
    out.reserve(by_dose.size());
    for (const auto& [d, g] : by_dose) out.push_back(g);
    return ObservationSet(std::move(out));
}

ObservationSet ObservationSet::expanded() const {
    std::vector<DoseGroup> out;
    out.reserve(static_cast<std::size_t>(total_n()));
    for (const auto& g : groups_) {
        for (int k = 0; k < g.events; ++k) out.push_back({g.dose, 1, 1});
        for (int k = g.events; k < g.n; ++k) out.push_back({g.dose, 1, 0});
    }
    return ObservationSet(std::move(out));
}

std::vector<ArmSummary> ObservationSet::arms() const {
    const ObservationSet agg = aggregated();
    std::vector<ArmSummary> out;
    for (const auto& g : agg.groups()) out.push_back({g.dose, g.n, g.events});
    return out;
}

void ObservationSet::require_fittable() const {
    const auto levels = dose_levels();
    if (levels.size() < 2) throw InvalidData("at least two distinct dose levels are required");
    if (levels.back() <= 0.0) throw InvalidData("at least one positive dose is required");
}

namespace {

// q = dose / (ED50 + dose) and a = q(1 - q), both evaluated without forming exp(phi).
struct Saturation {
    double q = 0.0;
    double a = 0.0;
};

Saturation saturation(double phi, double dose) {
    if (dose <= 0.0) return {};
    const double x = std::log(dose) - phi;
    const double q = expit(x);
    return {q, q * expit(-x)};
}

}  // namespace

double eta(const EmaxParams& params, double dose) {
    if (dose <= 0.0) return params.e0;
    return params.e0 + params.emax * saturation(params.phi, dose).q;
}

double predict_prob(const EmaxParams& params, double dose) { return expit(eta(params, dose)); }

ObsDerivs obs_derivs(const EmaxParams& params, double dose, bool with_third) {
    const auto [q, a] = saturation(params.phi, dose);
    const double b = 1.0 - 2.0 * q;

    ObsDerivs o;
    o.eta = params.e0 + params.emax * q;
    o.pi = expit(o.eta);
    o.g = {1.0, q, -params.emax * a};

    o.h(kEmax, kLogEd50) = o.h(kLogEd50, kEmax) = -a;
    o.h(kLogEd50, kLogEd50) = params.emax * a * b;

    if (with_third) {
        // d/dphi of a is -a*b; d/dphi of b is 2a.
        const double emax_phi_phi = a * b;
        o.t[kLogEd50](kEmax, kLogEd50) = emax_phi_phi;
        o.t[kLogEd50](kLogEd50, kEmax) = emax_phi_phi;
        o.t[kEmax](kLogEd50, kLogEd50) = emax_phi_phi;
        o.t[kLogEd50](kLogEd50, kLogEd50) = -params.emax * a * (b * b - 2.0 * a);
    }
    return o;
}

DerivTensors deriv_tensors(const EmaxParams& params, const ObservationSet& data) {
    DerivTensors d;
    d.obs.reserve(data.size());
    for (const auto& g : data.groups()) d.obs.push_back(obs_derivs(params, g.dose));
    return d;
}

LikelihoodParts likelihood_parts(const EmaxParams& params, const ObservationSet& data) {
    LikelihoodParts out;
    for (const auto& gr : data.groups()) {
        const ObsDerivs o = obs_derivs(params, gr.dose, false);
        const double n = gr.n;
        const double resid = gr.events - n * o.pi;
        const double w = n * o.pi * expit(-o.eta);
        out.loglik += gr.events * o.eta - n * log1pexp(o.eta);
        out.score += resid * o.g;
        const Mat3 ggt = o.g * o.g.transpose();
        out.information += w * ggt;
        out.hessian += -w * ggt + resid * o.h;
    }
    return out;
}

double log_likelihood(const EmaxParams& params, const ObservationSet& data) {
    double ll = 0.0;
    for (const auto& gr : data.groups()) {
        const double e = eta(params, gr.dose);
        ll += gr.events * e - gr.n * log1pexp(e);
    }
    return ll;
}

Vec3 score(const EmaxParams& params, const ObservationSet& data) {
    Vec3 u = Vec3::Zero();
    for (const auto& gr : data.groups()) {
        const ObsDerivs o = obs_derivs(params, gr.dose, false);
        u += (gr.events - gr.n * o.pi) * o.g;
    }
    return u;
}

Mat3 hessian(const EmaxParams& params, const ObservationSet& data) {
    return likelihood_parts(params, data).hessian;
}

Mat3 expected_information(const EmaxParams& params, const ObservationSet& data) {
    Mat3 info = Mat3::Zero();
    for (const auto& gr : data.groups()) {
        const ObsDerivs o = obs_derivs(params, gr.dose, false);
        info += (gr.n * o.pi * expit(-o.eta)) * (o.g * o.g.transpose());
    }
    return info;
}

}  // namespace emaxbr
