#include "emaxbr/estimators.hpp"

#include "emaxbr/diagnostics.hpp"
#include "emaxbr/linalg.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <limits>
#include <random>

namespace emaxbr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Iterates with |log ED50| beyond this are treated as having left the domain.
constexpr double kPhiLimit = 60.0;

double max_abs(const Vec3& v) { return v.cwiseAbs().maxCoeff(); }

bool in_domain(const Vec3& x) { return x.allFinite() && std::abs(x[kLogEd50]) <= kPhiLimit; }

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::string_view to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::MLE: return "MLE";
        case EstimatorKind::CoxSnell: return "CoxSnell";
        case EstimatorKind::Firth: return "Firth";
        case EstimatorKind::MPLE: return "MPLE";
    }
    return "?";
}

std::optional<EstimatorKind> parse_estimator(std::string_view name) {
    const std::string s = lower(name);
    if (s == "mle") return EstimatorKind::MLE;
    if (s == "coxsnell" || s == "cox-snell" || s == "cox_snell" || s == "cox") return EstimatorKind::CoxSnell;
    if (s == "firth") return EstimatorKind::Firth;
    if (s == "mple" || s == "jeffreys") return EstimatorKind::MPLE;
    return std::nullopt;
}

std::string_view to_string(FitStatus s) {
    switch (s) {
        case FitStatus::Converged: return "Converged";
        case FitStatus::FailedToEstimate: return "FailedToEstimate";
        case FitStatus::Unstable: return "Unstable";
    }
    return "?";
}

std::string_view to_string(StatusReason r) {
    switch (r) {
        case StatusReason::None: return "none";
        case StatusReason::IterationLimit: return "iteration_limit";
        case StatusReason::NonStationary: return "non_stationary";
        case StatusReason::NonFinite: return "non_finite";
        case StatusReason::SingularCurvature: return "singular_curvature";
        case StatusReason::SingularInformation: return "singular_information";
        case StatusReason::BoundHit: return "ed50_bound_hit";
        case StatusReason::UndefinedSE: return "undefined_standard_error";
        case StatusReason::RelativeSEExceeded: return "relative_se_exceeded";
        case StatusReason::Separation: return "separation";
    }
    return "?";
}

void SolverConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + ": must be positive");
    };
    positive(grad_tol, "grad_tol");
    positive(rel_change_tol, "rel_change_tol");
    positive(ed50_upper_mult, "ed50_upper_mult");
    positive(ed50_lower_mult, "ed50_lower_mult");
    positive(rel_se_threshold, "rel_se_threshold");
    positive(stationarity_tol, "stationarity_tol");
    positive(step_tol, "step_tol");
    positive(max_step, "max_step");
    if (max_iter < 1) throw std::invalid_argument("max_iter: must be at least 1");
}

// ---------------------------------------------------------------------------
// Starting values
// ---------------------------------------------------------------------------

namespace {

struct TwoParamFit {
    double e0 = 0.0;
    double emax = 0.0;
    double loglik = -kInf;
};

// Logistic regression of y on (1, q) with q = dose / (exp(phi) + dose).
TwoParamFit fit_two_param(const ObservationSet& agg, double phi, double e0_init) {
    constexpr double kClamp = 15.0;
    Eigen::Vector2d beta(e0_init, 0.0);
    auto loglik = [&](const Eigen::Vector2d& b) {
        double ll = 0.0;
        for (const auto& g : agg.groups()) {
            const double e = eta({b[0], b[1], phi}, g.dose);
            ll += g.events * e - g.n * log1pexp(e);
        }
        return ll;
    };
    double ll = loglik(beta);
    for (int it = 0; it < 50; ++it) {
        Eigen::Vector2d grad = Eigen::Vector2d::Zero();
        Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
        for (const auto& g : agg.groups()) {
            const double q = eta({0.0, 1.0, phi}, g.dose);
            const double e = beta[0] + beta[1] * q;
            const double p = expit(e);
            const Eigen::Vector2d x(1.0, q);
            grad += (g.events - g.n * p) * x;
            info += (g.n * p * expit(-e)) * x * x.transpose();
        }
        info.diagonal().array() += 1e-10;
        Eigen::Vector2d step = info.ldlt().solve(grad);
        if (!step.allFinite()) break;
        double s = 1.0;
        Eigen::Vector2d next = beta;
        double ll_next = -kInf;
        for (int k = 0; k < 30; ++k, s *= 0.5) {
            next = (beta + s * step).cwiseMax(-kClamp).cwiseMin(kClamp);
            ll_next = loglik(next);
            if (ll_next >= ll) break;
        }
        if (!(ll_next >= ll)) break;
        const double change = (next - beta).cwiseAbs().maxCoeff();
        beta = next;
        ll = ll_next;
        if (change < 1e-10) break;
    }
    return {beta[0], beta[1], ll};
}

struct StartCandidates {
    std::vector<EmaxParams> ranked;  // best profile log-likelihood first
    bool degenerate = false;
};

StartCandidates start_candidates(const ObservationSet& data) {
    data.require_fittable();
    const ObservationSet agg = data.aggregated();
    const auto& groups = agg.groups();
    const auto levels = agg.dose_levels();

    const DoseGroup& lowest = groups.front();
    const double e0_start = logit((lowest.events + 0.5) / (lowest.n + 1.0));

    const double d_pos = agg.min_positive_dose();
    const double lo = std::log(0.1 * d_pos);
    const double hi = std::log(5.0 * agg.max_dose());
    constexpr int kGrid = 21;

    StartCandidates out;
    const int events = agg.total_events();
    if (events == 0 || events == agg.total_n()) {
        out.degenerate = true;
        out.ranked.push_back({e0_start, 0.0, 0.5 * (lo + hi)});
        return out;
    }

    std::vector<std::pair<double, EmaxParams>> scored;
    for (int k = 0; k < kGrid; ++k) {
        const double phi = lo + (hi - lo) * k / (kGrid - 1);
        const TwoParamFit f = fit_two_param(agg, phi, e0_start);
        if (std::isfinite(f.loglik)) scored.push_back({f.loglik, {f.e0, f.emax, phi}});
    }
    // Stable sort keeps the grid order among ties, so the result is deterministic.
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [ll, p] : scored) out.ranked.push_back(p);
    if (out.ranked.empty()) out.ranked.push_back({e0_start, 0.0, 0.5 * (lo + hi)});
    return out;
}

}  // namespace

StartingValues starting_values(const ObservationSet& data) {
    const StartCandidates c = start_candidates(data);
    return {c.ranked.front(), c.degenerate};
}

// ---------------------------------------------------------------------------
// Generic solvers
// ---------------------------------------------------------------------------

namespace {

struct Trace {
    Vec3 theta = Vec3::Zero();
    int iterations = 0;
    StopRule stop = StopRule::None;
    double residual = kInf;
    double newton_step = kInf;  // relative size of the next full Newton step
};

double relative_step(const Vec3& x, const Vec3& d) {
    if (!d.allFinite()) return kInf;
    return (d.cwiseAbs().array() / x.cwiseAbs().cwiseMax(1.0).array()).maxCoeff();
}

bool relative_change_small(const Vec3& x, const Vec3& xn, double tol) {
    const Vec3 scale = x.cwiseAbs().cwiseMax(1.0);
    return ((xn - x).cwiseAbs().array() / scale.array()).maxCoeff() <= tol;
}

Vec3 clamp_step(Vec3 d, double radius) {
    const double m = max_abs(d);
    if (m > radius) d *= radius / m;
    return d;
}

Mat3 central_jacobian(const std::function<Vec3(const Vec3&)>& fn, const Vec3& x, double rel_step) {
    Mat3 j;
    for (int s = 0; s < 3; ++s) {
        const double h = rel_step * std::max(1.0, std::abs(x[s]));
        Vec3 xp = x, xm = x;
        xp[s] += h;
        xm[s] -= h;
        j.col(s) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return j;
}

bool accepted_as_stationary(const Trace& tr, const SolverConfig& cfg) {
    if (tr.stop == StopRule::Gradient) return true;
    if (tr.stop == StopRule::RelativeChange || tr.stop == StopRule::Stalled)
        return tr.residual <= cfg.stationarity_tol && tr.newton_step <= cfg.step_tol;
    return false;
}

// Newton refinement of an accepted relative-change or stalled stop on
// F = 0. A step is kept only if it lowers max|F|.
void polish(Trace& tr, const std::function<Vec3(const Vec3&)>& fn, const SolverConfig& cfg) {
    if (tr.stop == StopRule::Gradient || !accepted_as_stationary(tr, cfg)) return;
    Vec3 f = fn(tr.theta);
    for (int k = 0; k < 8 && tr.residual > cfg.grad_tol; ++k) {
        Eigen::FullPivLU<Mat3> lu(central_jacobian(fn, tr.theta, 1e-6));
        if (!lu.isInvertible()) return;
        const Vec3 xn = tr.theta - lu.solve(f);
        if (!xn.allFinite() || !in_domain(xn)) return;
        const Vec3 fn_xn = fn(xn);
        if (!fn_xn.allFinite() || max_abs(fn_xn) >= tr.residual) return;
        tr.theta = xn;
        f = fn_xn;
        tr.residual = max_abs(f);
    }
    if (tr.residual <= cfg.grad_tol) {
        tr.stop = StopRule::Gradient;
        tr.newton_step = 0.0;
    }
}

// Damped Newton ascent with step halving. `curvature` returns an
// approximation of the negative Hessian of `value`.
struct AscentProblem {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> gradient;
    std::function<Mat3(const Vec3&)> curvature;
};

Trace maximize(const AscentProblem& prob, const Vec3& start, const SolverConfig& cfg, int budget) {
    auto newton_step_at = [&](const Vec3& at, const Vec3& g) {
        const Mat3 c = symmetrize(prob.curvature(at));
        if (!c.allFinite()) return kInf;
        Eigen::LLT<Mat3> llt(c);
        if (llt.info() != Eigen::Success) return kInf;  // not a local maximum
        return relative_step(at, llt.solve(g));
    };
    Trace tr;
    Vec3 x = start;
    double f = in_domain(x) ? prob.value(x) : kNaN;
    tr.theta = x;
    if (!std::isfinite(f)) {
        tr.stop = StopRule::NonFinite;
        return tr;
    }
    for (int it = 0; it < budget; ++it) {
        const Vec3 g = prob.gradient(x);
        tr.theta = x;
        tr.iterations = it;
        tr.residual = g.allFinite() ? max_abs(g) : kInf;
        if (!g.allFinite()) {
            tr.stop = StopRule::NonFinite;
            return tr;
        }
        if (tr.residual <= cfg.grad_tol) {
            tr.stop = StopRule::Gradient;
            return tr;
        }

        const Mat3 c = symmetrize(prob.curvature(x));
        Vec3 d = Vec3::Constant(kNaN);
        if (c.allFinite()) {
            Eigen::LLT<Mat3> llt(c);
            if (llt.info() == Eigen::Success) d = llt.solve(g);
            if (!d.allFinite() || g.dot(d) <= 0.0) {
                Eigen::SelfAdjointEigenSolver<Mat3> es(c, Eigen::EigenvaluesOnly);
                const double shift = std::max(0.0, -es.eigenvalues().minCoeff()) +
                                     1e-6 * std::max(1.0, c.diagonal().cwiseAbs().maxCoeff());
                Eigen::LLT<Mat3> shifted(c + shift * Mat3::Identity());
                if (shifted.info() == Eigen::Success) d = shifted.solve(g);
            }
        }
        if (!d.allFinite() || g.dot(d) <= 0.0) d = g;
        d = clamp_step(d, cfg.max_step);

        bool accepted = false;
        Vec3 xn = x;
        double fn = f;
        double s = 1.0;
        for (int k = 0; k <= 30; ++k, s *= 0.5) {
            xn = x + s * d;
            fn = in_domain(xn) ? prob.value(xn) : kNaN;
            if (std::isfinite(fn) && fn >= f) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            tr.stop = StopRule::Stalled;
            tr.newton_step = newton_step_at(x, g);
            polish(tr, prob.gradient, cfg);
            return tr;
        }
        const bool small = relative_change_small(x, xn, cfg.rel_change_tol) ||
                           std::abs(fn - f) / std::max(std::abs(f), 1.0) <= cfg.rel_change_tol;
        x = xn;
        f = fn;
        if (small) {
            const Vec3 gn = prob.gradient(x);
            tr.theta = x;
            tr.iterations = it + 1;
            tr.residual = gn.allFinite() ? max_abs(gn) : kInf;
            tr.stop = tr.residual <= cfg.grad_tol ? StopRule::Gradient : StopRule::RelativeChange;
            if (gn.allFinite()) tr.newton_step = newton_step_at(x, gn);
            polish(tr, prob.gradient, cfg);
            return tr;
        }
    }
    tr.theta = x;
    tr.iterations = budget;
    const Vec3 g = prob.gradient(x);
    tr.residual = g.allFinite() ? max_abs(g) : kInf;
    tr.stop = tr.residual <= cfg.grad_tol ? StopRule::Gradient : StopRule::IterationLimit;
    return tr;
}

// Broyden root finder with a finite-difference Jacobian seed, refreshed when
// the secant model stops making progress, and a clamped step. When even a
// fresh Jacobian gives no descent on |F|, it switches to Levenberg-Marquardt
// steps on |F|^2 and returns to secant steps once the damping has decayed.
Trace find_root(const std::function<Vec3(const Vec3&)>& fn, const Vec3& start, const SolverConfig& cfg, int budget) {
    auto newton_step_at = [&](const Vec3& at, const Vec3& f) {
        Eigen::FullPivLU<Mat3> lu(central_jacobian(fn, at, 1e-6));
        if (!lu.isInvertible()) return kInf;
        return relative_step(at, Vec3(lu.solve(f)));
    };
    auto eval = [&](const Vec3& y) { return in_domain(y) ? fn(y) : Vec3(Vec3::Constant(kNaN)); };
    Trace tr;
    Vec3 x = start;
    Vec3 fx = eval(x);
    tr.theta = x;
    if (!fx.allFinite()) {
        tr.stop = StopRule::NonFinite;
        return tr;
    }
    Mat3 jac = central_jacobian(fn, x, 1e-6);
    bool fresh = true;
    double lambda = 0.0;  // > 0 while in Levenberg-Marquardt mode

    auto finish = [&](StopRule stop, int iterations) {
        tr.theta = x;
        tr.iterations = iterations;
        tr.residual = max_abs(fx);
        tr.stop = tr.residual <= cfg.grad_tol ? StopRule::Gradient : stop;
        if (tr.stop == StopRule::RelativeChange || tr.stop == StopRule::Stalled) tr.newton_step = newton_step_at(x, fx);
        polish(tr, fn, cfg);
        return tr;
    };

    for (int it = 0; it < budget; ++it) {
        if (max_abs(fx) <= cfg.grad_tol) return finish(StopRule::Gradient, it);
        const double norm0 = fx.norm();
        Vec3 xn = x, fxn = fx;
        bool accepted = false;

        if (lambda == 0.0) {
            Vec3 d = Vec3::Constant(kNaN);
            if (jac.allFinite()) {
                Eigen::FullPivLU<Mat3> lu(jac);
                if (lu.isInvertible()) d = -lu.solve(fx);
            }
            if (d.allFinite()) {
                d = clamp_step(d, cfg.max_step);
                double s = 1.0;
                for (int k = 0; k <= 20; ++k, s *= 0.5) {
                    xn = x + s * d;
                    fxn = eval(xn);
                    if (fxn.allFinite() && fxn.norm() < norm0) {
                        accepted = true;
                        break;
                    }
                }
            }
            if (!accepted) {
                if (!fresh) {
                    jac = central_jacobian(fn, x, 1e-6);
                    fresh = true;
                    continue;
                }
                if (!jac.allFinite()) return finish(StopRule::Stalled, it);
                lambda = 1e-3;
                continue;
            }
        } else {
            const Mat3 jtj = jac.transpose() * jac;
            Mat3 damp = jtj.diagonal().cwiseMax(1e-12).asDiagonal();
            Vec3 d = -(jtj + lambda * damp).ldlt().solve(jac.transpose() * fx);
            if (d.allFinite()) {
                d = clamp_step(d, cfg.max_step);
                xn = x + d;
                fxn = eval(xn);
                accepted = fxn.allFinite() && fxn.norm() < norm0;
            }
            if (!accepted) {
                lambda *= 4.0;
                if (lambda > 1e12) return finish(StopRule::Stalled, it);
                continue;
            }
            lambda /= 3.0;
            if (lambda < 1e-7) lambda = 0.0;
        }

        const Vec3 dx = xn - x;
        const Vec3 df = fxn - fx;
        const double denom = dx.squaredNorm();
        if (denom > 0.0) jac += ((df - jac * dx) * dx.transpose()) / denom;
        fresh = false;
        if (lambda > 0.0 || fxn.norm() > 0.5 * norm0) {
            jac = central_jacobian(fn, xn, 1e-6);
            fresh = true;
        }

        const bool small = relative_change_small(x, xn, cfg.rel_change_tol);
        x = xn;
        fx = fxn;
        if (small) return finish(StopRule::RelativeChange, it + 1);
    }
    return finish(StopRule::IterationLimit, budget);
}

// Restarting wrapper used by Firth and MPLE: preferred starts, ranked grid
// starts, then seeded random perturbations of the best grid start, until the
// iteration budget (max_iter, less `spent`) is exhausted.
Trace solve_with_restarts(const std::function<Trace(const Vec3&, int)>& attempt,
                          const std::function<bool(const Vec3&)>& usable_start, const ObservationSet& data,
                          const std::vector<Vec3>& preferred, const SolverConfig& cfg, int spent,
                          int& restarts) {
    const StartCandidates cands = start_candidates(data);
    const Vec3 anchor = cands.ranked.front().vec();
    std::vector<Vec3> queue = preferred;
    for (const auto& p : cands.ranked) queue.push_back(p.vec());
    if (cands.degenerate)
        for (double em : {0.5, -0.5, 2.0}) queue.push_back({anchor[0], em, anchor[2]});

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int per_attempt = std::max(50, std::min(100, cfg.max_iter / 4));
    int used = spent;
    restarts = 0;
    Trace best;
    bool have_best = false;
    std::size_t next = 0;
    while (used < cfg.max_iter) {
        Vec3 start;
        if (next < queue.size()) {
            start = queue[next++];
        } else {
            start = anchor + Vec3(0.5 * gauss(rng), 1.0 * gauss(rng), 1.5 * gauss(rng));
        }
        if (!usable_start(start)) {
            ++used;  // an unusable start still costs budget so the loop terminates
            continue;
        }
        const Trace tr = attempt(start, std::min(per_attempt, cfg.max_iter - used));
        used += std::max(1, tr.iterations);
        if (accepted_as_stationary(tr, cfg)) {
            best = tr;
            have_best = true;
            break;
        }
        if (!have_best || tr.residual < best.residual) {
            best = tr;
            have_best = true;
        }
        ++restarts;
    }
    if (!have_best) {
        best.theta = anchor;
        best.stop = StopRule::IterationLimit;
    } else if (!accepted_as_stationary(best, cfg)) {
        best.stop = StopRule::IterationLimit;
    }
    best.iterations = used;
    return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Stability classification
// ---------------------------------------------------------------------------

std::pair<FitStatus, StatusReason> classify_stability(const EmaxParams& params, const std::optional<Mat3>& covariance,
                                                      const ObservationSet& data, const SolverConfig& config) {
    const double ed50 = params.ed50();
    const double upper = config.ed50_upper_mult * data.max_dose();
    const double lower = config.ed50_lower_mult * data.min_positive_dose();
    if (!(ed50 <= upper) || !(ed50 >= lower)) return {FitStatus::Unstable, StatusReason::BoundHit};
    if (!covariance || !covariance->allFinite() || (covariance->diagonal().array() <= 0.0).any() ||
        !is_positive_definite(*covariance))
        return {FitStatus::Unstable, StatusReason::UndefinedSE};
    const Vec3 se = covariance->diagonal().cwiseSqrt();
    const Vec3 est = params.vec();
    for (int s = 0; s < 3; ++s)
        if (!(se[s] <= config.rel_se_threshold * std::abs(est[s])))
            return {FitStatus::Unstable, StatusReason::RelativeSEExceeded};
    return {FitStatus::Converged, StatusReason::None};
}

namespace {

void attach_covariance(FitResult& r, const std::optional<Mat3>& cov) {
    r.covariance = cov;
    r.std_errors.reset();
    if (cov && cov->allFinite() && (cov->diagonal().array() > 0.0).all()) r.std_errors = cov->diagonal().cwiseSqrt();
}

void finish_classification(FitResult& r, const ObservationSet& data, const SolverConfig& cfg) {
    auto [status, reason] = classify_stability(*r.params, r.covariance, data, cfg);
    r.status = status;
    r.reason = reason;
}

StatusReason failure_reason(StopRule stop) {
    switch (stop) {
        case StopRule::NonFinite: return StatusReason::NonFinite;
        case StopRule::IterationLimit: return StatusReason::IterationLimit;
        default: return StatusReason::NonStationary;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// MLE
// ---------------------------------------------------------------------------

FitResult fit_mle(const ObservationSet& data, const SolverConfig& config) {
    config.validate();
    const ObservationSet agg = data.aggregated();
    FitResult r;
    r.kind = EstimatorKind::MLE;

    const AscentProblem prob{
        [&](const Vec3& x) { return log_likelihood(EmaxParams::from_vec(x), agg); },
        [&](const Vec3& x) { return score(EmaxParams::from_vec(x), agg); },
        [&](const Vec3& x) { return Mat3(-hessian(EmaxParams::from_vec(x), agg)); },
    };
    const Vec3 start = starting_values(agg).params.vec();
    const Trace tr = maximize(prob, start, config, config.max_iter);

    r.iterations = tr.iterations;
    r.stop = tr.stop;
    r.residual = tr.residual;
    r.last_iterate = EmaxParams::from_vec(tr.theta);
    // Under complete separation the likelihood has no finite maximizer; any
    // stop is a point on the way to infinity with a vanishing gradient.
    if (detect_separation(agg) == Separation::Complete) {
        r.status = FitStatus::FailedToEstimate;
        r.reason = StatusReason::Separation;
        return r;
    }
    if (!accepted_as_stationary(tr, config)) {
        r.status = FitStatus::FailedToEstimate;
        r.reason = failure_reason(tr.stop);
        return r;
    }
    const Mat3 neg_h = -hessian(r.last_iterate, agg);
    const auto cov = symmetric_inverse(neg_h);
    if (!cov) {
        r.status = FitStatus::FailedToEstimate;
        r.reason = StatusReason::SingularCurvature;
        return r;
    }
    r.params = r.last_iterate;
    attach_covariance(r, cov);
    finish_classification(r, agg, config);
    return r;
}

// ---------------------------------------------------------------------------
// Cox-Snell
// ---------------------------------------------------------------------------

Vec3 cox_snell_contraction(const Mat3& neg_info_inverse, const CumulantBundle& c) {
    const Mat3& k = neg_info_inverse;
    Vec3 inner = Vec3::Zero();
    for (int l = 0; l < 3; ++l) {
        const Mat3 a = 0.5 * c.k3[l] + c.k2_1[l];  // (r, j) at fixed l
        inner += a * k.col(l);                     // sum_j a(r, j) K(j, l)
    }
    return k * inner;
}

Vec3 cox_snell_bias(const EmaxParams& params, const ObservationSet& data) {
    const CumulantBundle c = cumulants(params, data);
    const auto inv = symmetric_inverse(c.information);
    if (!inv) throw SingularInformation();
    return cox_snell_contraction(-*inv, c);
}

FitResult fit_cox_snell(const ObservationSet& data, const SolverConfig& config) {
    const ObservationSet agg = data.aggregated();
    const FitResult mle = fit_mle(agg, config);
    FitResult r = mle;
    r.kind = EstimatorKind::CoxSnell;
    if (!mle.params) return r;

    r.base_mle = mle.params;
    Vec3 corrected;
    try {
        corrected = mle.params->vec() - cox_snell_bias(*mle.params, agg);
    } catch (const SingularInformation&) {
        r.params = mle.params;
        r.status = FitStatus::Unstable;
        r.reason = StatusReason::SingularInformation;
        return r;
    }
    if (!corrected.allFinite()) {
        r.params = mle.params;
        r.status = FitStatus::Unstable;
        r.reason = StatusReason::SingularInformation;
        return r;
    }
    r.params = EmaxParams::from_vec(corrected);
    r.last_iterate = *r.params;
    // Status and reason are the MLE's, except that a converged fit needs a
    // usable covariance at the corrected point.
    attach_covariance(r, symmetric_inverse(-hessian(*r.params, agg)));
    if (r.status == FitStatus::Converged && !(r.std_errors && is_positive_definite(*r.covariance))) {
        r.status = FitStatus::Unstable;
        r.reason = StatusReason::UndefinedSE;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Firth
// ---------------------------------------------------------------------------

namespace {

std::optional<Vec3> firth_score_checked(const EmaxParams& params, const ObservationSet& data) {
    const CumulantBundle c = cumulants(params, data);
    const auto inv = symmetric_inverse(c.information);
    if (!inv) return std::nullopt;
    Vec3 w;
    for (int s = 0; s < 3; ++s) w[s] = 0.5 * (*inv * (c.p[s] + c.k2_1[s])).trace();
    return score(params, data) + w;
}

std::optional<Vec3> penalized_score_checked(const EmaxParams& params, const ObservationSet& data) {
    const CumulantBundle c = cumulants(params, data);
    const auto inv = symmetric_inverse(c.information);
    if (!inv) return std::nullopt;
    Vec3 w;
    for (int s = 0; s < 3; ++s) w[s] = 0.5 * (*inv * c.dI[s]).trace();
    return score(params, data) + w;
}

// Small samples can give the modified score several roots. When the MLE
// exists, the root reported is the one reached by continuation in t of
// U + t W from t = 0 (the MLE) to t = 1.
Trace firth_continuation(const ObservationSet& agg, const Vec3& mle, const SolverConfig& cfg) {
    Trace out;
    out.theta = mle;
    Vec3 x = mle;
    double t = 0.0;
    double dt = 0.25;
    int used = 0;
    const int total = cfg.max_iter / 2;  // leave the rest for restarts
    while (t < 1.0 && used < total) {
        const double tn = std::min(1.0, t + dt);
        const std::function<Vec3(const Vec3&)> fn = [&](const Vec3& y) {
            const EmaxParams p = EmaxParams::from_vec(y);
            const auto mod = firth_score_checked(p, agg);
            if (!mod) return Vec3(Vec3::Constant(kNaN));
            const Vec3 u = score(p, agg);
            return Vec3(u + tn * (*mod - u));
        };
        const Trace tr = find_root(fn, x, cfg, std::min(100, total - used));
        used += std::max(1, tr.iterations);
        out = tr;
        if (accepted_as_stationary(tr, cfg)) {
            x = tr.theta;
            t = tn;
        } else {
            dt *= 0.5;
            if (dt < 1.0 / 64.0) break;
        }
    }
    out.iterations = used;
    if (t < 1.0 && out.stop == StopRule::Gradient) out.stop = StopRule::Stalled;
    return out;
}

// The penalized maximum nearest the MLE is reached by starting there.
std::vector<Vec3> mle_start(const ObservationSet& agg, const SolverConfig& cfg) {
    const FitResult mle = fit_mle(agg, cfg);
    if (mle.params) return {mle.params->vec()};
    return {};
}

}  // namespace

Vec3 firth_modified_score(const EmaxParams& params, const ObservationSet& data) {
    auto v = firth_score_checked(params, data);
    if (!v) throw SingularInformation();
    return *v;
}

FitResult fit_firth(const ObservationSet& data, const SolverConfig& config) {
    config.validate();
    const ObservationSet agg = data.aggregated();
    FitResult r;
    r.kind = EstimatorKind::Firth;

    const std::function<Vec3(const Vec3&)> fn = [&](const Vec3& x) {
        return firth_score_checked(EmaxParams::from_vec(x), agg).value_or(Vec3::Constant(kNaN));
    };
    auto attempt = [&](const Vec3& start, int budget) { return find_root(fn, start, config, budget); };
    auto usable = [&](const Vec3& x) { return in_domain(x) && fn(x).allFinite(); };
    Trace tr;
    const FitResult mle = fit_mle(agg, config);
    bool done = false;
    int spent = 0;
    if (mle.params) {
        tr = firth_continuation(agg, mle.params->vec(), config);
        spent = tr.iterations;
        done = accepted_as_stationary(tr, config);
    }
    if (!done) tr = solve_with_restarts(attempt, usable, agg, {}, config, spent, r.restarts);

    r.iterations = tr.iterations;
    r.stop = tr.stop;
    r.residual = tr.residual;
    r.last_iterate = EmaxParams::from_vec(tr.theta);
    if (!accepted_as_stationary(tr, config)) {
        r.status = FitStatus::FailedToEstimate;
        r.reason = failure_reason(tr.stop);
        return r;
    }
    r.params = r.last_iterate;
    attach_covariance(r, symmetric_inverse(-hessian(*r.params, agg)));
    finish_classification(r, agg, config);
    return r;
}

// ---------------------------------------------------------------------------
// Jeffreys-penalized MPLE
// ---------------------------------------------------------------------------

double penalized_loglik(const EmaxParams& params, const ObservationSet& data) {
    const Mat3 info = expected_information(params, data);
    if (reciprocal_condition(info) < 1e-15) return -kInf;
    const auto ld = log_det_spd(info);
    if (!ld) return -kInf;
    return log_likelihood(params, data) + 0.5 * *ld;
}

Vec3 penalized_score(const EmaxParams& params, const ObservationSet& data) {
    auto v = penalized_score_checked(params, data);
    if (!v) throw SingularInformation();
    return *v;
}

Mat3 penalized_observed_information(const EmaxParams& params, const ObservationSet& data) {
    const std::function<Vec3(const Vec3&)> fn = [&](const Vec3& x) {
        return penalized_score_checked(EmaxParams::from_vec(x), data).value_or(Vec3::Constant(kNaN));
    };
    return symmetrize(-central_jacobian(fn, params.vec(), 1e-5));
}

FitResult fit_mple(const ObservationSet& data, const SolverConfig& config) {
    config.validate();
    const ObservationSet agg = data.aggregated();
    FitResult r;
    r.kind = EstimatorKind::MPLE;

    const AscentProblem prob{
        [&](const Vec3& x) { return penalized_loglik(EmaxParams::from_vec(x), agg); },
        [&](const Vec3& x) {
            return penalized_score_checked(EmaxParams::from_vec(x), agg).value_or(Vec3::Constant(kNaN));
        },
        [&](const Vec3& x) { return penalized_observed_information(EmaxParams::from_vec(x), agg); },
    };
    auto attempt = [&](const Vec3& start, int budget) { return maximize(prob, start, config, budget); };
    auto usable = [&](const Vec3& x) { return in_domain(x) && std::isfinite(prob.value(x)); };
    const Trace tr = solve_with_restarts(attempt, usable, agg, mle_start(agg, config), config, 0, r.restarts);

    r.iterations = tr.iterations;
    r.stop = tr.stop;
    r.residual = tr.residual;
    r.last_iterate = EmaxParams::from_vec(tr.theta);
    if (!accepted_as_stationary(tr, config)) {
        r.status = FitStatus::FailedToEstimate;
        r.reason = failure_reason(tr.stop);
        return r;
    }
    r.params = r.last_iterate;
    attach_covariance(r, symmetric_inverse(penalized_observed_information(*r.params, agg)));
    finish_classification(r, agg, config);
    return r;
}

FitResult fit(EstimatorKind kind, const ObservationSet& data, const SolverConfig& config) {
    switch (kind) {
        case EstimatorKind::MLE: return fit_mle(data, config);
        case EstimatorKind::CoxSnell: return fit_cox_snell(data, config);
        case EstimatorKind::Firth: return fit_firth(data, config);
        case EstimatorKind::MPLE: return fit_mple(data, config);
    }
    throw std::invalid_argument("unknown estimator");
}

}  // namespace emaxbr
