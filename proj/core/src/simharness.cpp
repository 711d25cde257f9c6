#include "emaxbr/simharness.hpp"

#include "emaxbr/inference.hpp"
#include "emaxbr/linalg.hpp"
#include "emaxbr/parallel.hpp"
#include "emaxbr/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace emaxbr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += "; ";
        out += p;
    }
    return out;
}

}  // namespace

StudyValidationError::StudyValidationError(std::vector<std::string> p)
    : std::invalid_argument("invalid study: " + join(p)), problems(std::move(p)) {}

void SimStudy::validate() const {
    std::vector<std::string> bad;
    if (doses.size() < 2) bad.push_back("doses: at least two dose levels are required");
    bool has_positive = false;
    for (double d : doses) {
        if (!(d >= 0.0) || !std::isfinite(d)) bad.push_back("doses: every dose must be finite and nonnegative");
        has_positive = has_positive || d > 0.0;
    }
    std::vector<double> sorted = doses;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) bad.push_back("doses: levels must be distinct");
    if (!doses.empty() && !has_positive) bad.push_back("doses: at least one positive dose is required");
    if (n_total < static_cast<int>(doses.size()) || n_total < 1)
        bad.push_back("n_total: must be at least the number of arms");
    if (!truth.finite()) bad.push_back("truth: all parameters must be finite");
    if (n_reps < 1) bad.push_back("n_reps: must be at least 1");
    if (estimators.empty()) bad.push_back("estimators: at least one estimator is required");
    if (!(level > 0.0 && level < 1.0)) bad.push_back("level: must lie in (0, 1)");
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        bad.push_back(std::string("solver.") + e.what());
    }
    if (!bad.empty()) throw StudyValidationError(std::move(bad));
}

std::vector<int> SimStudy::arm_sizes() const {
    const int m = static_cast<int>(doses.size());
    std::vector<int> order(doses.size());
    for (int i = 0; i < m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return doses[a] < doses[b]; });
    std::vector<int> sizes(doses.size(), m > 0 ? n_total / m : 0);
    for (int k = 0; k < (m > 0 ? n_total % m : 0); ++k) ++sizes[order[k]];
    return sizes;
}

ObservationSet generate_dataset(const SimStudy& study, std::uint64_t rep_index) {
    const auto sizes = study.arm_sizes();
    std::vector<DoseGroup> groups;
    groups.reserve(study.doses.size());
    for (std::size_t a = 0; a < study.doses.size(); ++a) {
        const double pi = predict_prob(study.truth, study.doses[a]);
        int events = 0;
        for (int k = 0; k < sizes[a]; ++k)
            if (rng::uniform(study.seed, rng::kStreamSimulation, rep_index, (std::uint64_t(a) << 32) | std::uint64_t(k)) <
                pi)
                ++events;
        groups.push_back({study.doses[a], sizes[a], events});
    }
    return ObservationSet::from_groups(std::move(groups));
}

const EstimatorMetrics* SimMetrics::find(EstimatorKind kind) const {
    for (const auto& e : per_estimator)
        if (e.kind == kind) return &e;
    return nullptr;
}

SimMetrics aggregate(const std::vector<ReplicateRecord>& records, const std::vector<EstimatorKind>& estimators,
                     const EmaxParams& truth, double level, int n_reps) {
    SimMetrics m;
    m.truth = truth;
    m.level = level;
    m.n_reps = n_reps;
    m.audit = records;
    const double z = normal_critical_value(level);
    const Vec3 t = truth.vec();

    for (EstimatorKind kind : estimators) {
        EstimatorMetrics em;
        em.kind = kind;
        em.n_reps = n_reps;
        std::array<double, 3> sum{}, sum_sq{}, se_sum{}, covered{}, len{};
        for (const auto& r : records) {
            if (r.kind != kind) continue;
            if (r.status == FitStatus::FailedToEstimate) ++em.n_fail;
            if (r.status == FitStatus::Unstable) ++em.n_unstable;
            if (r.status == FitStatus::FailedToEstimate || !r.estimate) continue;
            for (int s = 0; s < 3; ++s) {
                const double e = (*r.estimate)[s];
                auto& pm = em.params[s];
                ++pm.n_used;
                sum[s] += e;
                sum_sq[s] += (e - t[s]) * (e - t[s]);
                const double se = r.std_err ? (*r.std_err)[s] : kNaN;
                if (se > 0.0 && std::isfinite(se)) {
                    ++pm.n_se_used;
                    se_sum[s] += se;
                    if (std::abs(e - t[s]) <= z * se) covered[s] += 1.0;
                    len[s] += 2.0 * z * se;
                }
            }
        }
        for (int s = 0; s < 3; ++s) {
            auto& pm = em.params[s];
            const double n = pm.n_used;
            const double nse = pm.n_se_used;
            pm.mean_estimate = n > 0 ? sum[s] / n : kNaN;
            pm.mbe = n > 0 ? pm.mean_estimate - t[s] : kNaN;
            pm.mse = n > 0 ? sum_sq[s] / n : kNaN;
            pm.mean_se = nse > 0 ? se_sum[s] / nse : kNaN;
            pm.coverage = nse > 0 ? covered[s] / nse : kNaN;
            pm.mean_ci_length = nse > 0 ? len[s] / nse : kNaN;
        }
        em.fail_pct = n_reps > 0 ? 100.0 * em.n_fail / n_reps : 0.0;
        em.unstable_pct = n_reps > 0 ? 100.0 * em.n_unstable / n_reps : 0.0;
        m.per_estimator.push_back(em);
    }
    return m;
}

namespace {

std::vector<ReplicateRecord> fit_replicates(const SimStudy& study, const std::vector<std::uint64_t>& draw_ids,
                                            std::size_t threads) {
    const std::size_t k = study.estimators.size();
    std::vector<ReplicateRecord> records(draw_ids.size() * k);
    parallel_for(draw_ids.size(), threads, [&](std::size_t i) {
        const ObservationSet data = generate_dataset(study, draw_ids[i]);
        SolverConfig cfg = study.solver;
        cfg.seed = rng::hash_key(study.solver.seed, rng::kStreamSimulation, draw_ids[i], 1);
        for (std::size_t e = 0; e < k; ++e) {
            const FitResult f = fit(study.estimators[e], data, cfg);
            ReplicateRecord& r = records[i * k + e];
            r.rep = static_cast<int>(draw_ids[i]);
            r.kind = study.estimators[e];
            r.status = f.status;
            r.reason = f.reason;
            r.iterations = f.iterations;
            if (f.params) r.estimate = f.params->vec();
            if (f.std_errors) r.std_err = *f.std_errors;
        }
    });
    return records;
}

}  // namespace

SimMetrics run_study(const SimStudy& study, std::size_t threads) {
    study.validate();
    std::vector<std::uint64_t> ids(static_cast<std::size_t>(study.n_reps));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    const auto records = fit_replicates(study, ids, threads);
    SimMetrics m = aggregate(records, study.estimators, study.truth, study.level, study.n_reps);
    m.draws = study.n_reps;
    return m;
}

SimMetrics run_shape_conditioned_study(const SimStudy& study, std::optional<Shape> target, int n_keep,
                                       std::size_t threads) {
    study.validate();
    if (n_keep < 1) throw StudyValidationError({"n_keep: must be at least 1"});
    if (study.doses.size() < 3) throw InsufficientArms();

    constexpr long long kProbe = 100000;
    constexpr double kMinRate = 1e-4;
    std::vector<std::uint64_t> kept;
    long long draws = 0;
    while (static_cast<int>(kept.size()) < n_keep) {
        const std::uint64_t id = static_cast<std::uint64_t>(draws++);
        if (!target || classify_shape(generate_dataset(study, id)) == *target) kept.push_back(id);
        if (draws >= kProbe && static_cast<double>(kept.size()) / static_cast<double>(draws) < kMinRate)
            throw ShapeUnreachable("target shape accepted on " + std::to_string(kept.size()) + " of " +
                                   std::to_string(draws) + " draws");
    }
    const auto records = fit_replicates(study, kept, threads);
    SimMetrics m = aggregate(records, study.estimators, study.truth, study.level, n_keep);
    m.draws = draws;
    m.acceptance_rate = static_cast<double>(n_keep) / static_cast<double>(draws);
    return m;
}

// ---------------------------------------------------------------------------
// Quadratic logit
// ---------------------------------------------------------------------------

QuadraticFit fit_quadratic_logit(const ObservationSet& data, const SolverConfig& config) {
    config.validate();
    const ObservationSet agg = data.aggregated();
    if (agg.dose_levels().size() < 3) throw InvalidData("quadratic logit needs at least three distinct doses");

    // Work on d / D_max so the three columns have comparable scale.
    const double scale = agg.max_dose();
    auto row = [&](double dose) {
        const double x = dose / scale;
        return Vec3(1.0, x, x * x);
    };
    auto loglik = [&](const Vec3& g) {
        double ll = 0.0;
        for (const auto& gr : agg.groups()) {
            const double e = row(gr.dose).dot(g);
            ll += gr.events * e - gr.n * log1pexp(e);
        }
        return ll;
    };

    QuadraticFit out;
    Vec3 gamma = Vec3::Zero();
    gamma[0] = logit((agg.total_events() + 0.5) / (agg.total_n() + 1.0));
    double ll = loglik(gamma);
    bool stationary = false;
    Mat3 info = Mat3::Zero();
    for (int it = 0; it < config.max_iter; ++it) {
        Vec3 u = Vec3::Zero();
        info.setZero();
        for (const auto& gr : agg.groups()) {
            const Vec3 x = row(gr.dose);
            const double e = x.dot(gamma);
            const double p = expit(e);
            u += (gr.events - gr.n * p) * x;
            info += (gr.n * p * expit(-e)) * x * x.transpose();
        }
        out.iterations = it;
        if (u.cwiseAbs().maxCoeff() <= config.grad_tol) {
            stationary = true;
            break;
        }
        Vec3 step = info.ldlt().solve(u);
        if (!step.allFinite()) break;
        const double m = step.cwiseAbs().maxCoeff();
        if (m > 10.0) step *= 10.0 / m;
        double s = 1.0;
        Vec3 next = gamma;
        double ll_next = -std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 30; ++k, s *= 0.5) {
            next = gamma + s * step;
            ll_next = loglik(next);
            if (ll_next >= ll) break;
        }
        if (!(ll_next >= ll)) break;
        const bool small = ((next - gamma).cwiseAbs().array() / gamma.cwiseAbs().cwiseMax(1.0).array()).maxCoeff() <=
                           config.rel_change_tol;
        gamma = next;
        ll = ll_next;
        if (small) {
            stationary = true;
            break;
        }
    }

    const Vec3 jac(1.0, 1.0 / scale, 1.0 / (scale * scale));
    out.beta = gamma.cwiseProduct(jac);
    double max_eta = 0.0;
    for (const auto& gr : agg.groups()) max_eta = std::max(max_eta, std::abs(row(gr.dose).dot(gamma)));
    if (!stationary || !gamma.allFinite()) {
        out.reason = gamma.allFinite() ? StatusReason::IterationLimit : StatusReason::NonFinite;
        return out;
    }
    // Fitted probabilities this extreme only arise when the likelihood has
    // no finite maximizer.
    if (max_eta > 15.0) {
        out.reason = StatusReason::Separation;
        return out;
    }
    const auto inv = symmetric_inverse(info);
    if (!inv) {
        out.reason = StatusReason::SingularInformation;
        return out;
    }
    out.covariance = jac.asDiagonal() * (*inv) * jac.asDiagonal();
    out.status = FitStatus::Converged;
    if (out.beta[2] < 0.0) out.peak_dose = -out.beta[1] / (2.0 * out.beta[2]);
    return out;
}

double mean_log_loss(const ObservationSet& data, const std::vector<double>& fitted_probs) {
    const auto& groups = data.groups();
    if (groups.size() != fitted_probs.size()) throw std::invalid_argument("one fitted probability per group required");
    double loss = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double p = std::clamp(fitted_probs[i], 1e-15, 1.0 - 1e-15);
        loss -= groups[i].events * std::log(p) + (groups[i].n - groups[i].events) * std::log1p(-p);
    }
    return loss / std::max(1, data.total_n());
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<int, 3> kRowOrder = {kLogEd50, kEmax, kE0};
constexpr std::array<const char*, 3> kDisplayNames = {"E0", "Emax", "log(ED50)"};

std::string num(double v) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string fixed3(double v) {
    if (std::isnan(v)) return "NA";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

const char* kTableHeader =
    "parameter,estimator,estimate,mbe,mse,est_se,cp,est_length,n_used,n_se_used,n_reps,n_fail,n_unstable";

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s) {
    if (s == "NA") return kNaN;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad number: " + s);
    return v;
}

int parse_int(const std::string& s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("bad integer: " + s);
    return v;
}

std::string pad(const std::string& s, std::size_t w, bool left) {
    if (s.size() >= w) return s;
    return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

std::string render_text(const std::vector<std::vector<std::string>>& rows, std::size_t left_cols) {
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (width.size() <= c) width.push_back(0);
            width[c] = std::max(width[c], r[c].size());
        }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c) line += "  ";
            line += pad(r[c], width[c], c < left_cols);
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

}  // namespace

std::string emit_table(const SimMetrics& metrics, TableFormat format) {
    if (format == TableFormat::Csv) {
        std::string out = std::string(kTableHeader) + "\n";
        for (int s : kRowOrder)
            for (const auto& e : metrics.per_estimator) {
                const auto& p = e.params[s];
                out += std::string(kParamNames[s]) + "," + std::string(to_string(e.kind)) + "," +
                       num(p.mean_estimate) + "," + num(p.mbe) + "," + num(p.mse) + "," + num(p.mean_se) + "," +
                       num(p.coverage) + "," + num(p.mean_ci_length) + "," + std::to_string(p.n_used) + "," +
                       std::to_string(p.n_se_used) + "," + std::to_string(e.n_reps) + "," +
                       std::to_string(e.n_fail) + "," + std::to_string(e.n_unstable) + "\n";
            }
        return out;
    }
    std::vector<std::vector<std::string>> rows{
        {"Parameter", "Type", "Estimate", "MBE", "MSE", "Est.SE", "CP", "Est.Length", "N"}};
    for (int s : kRowOrder) {
        bool first = true;
        for (const auto& e : metrics.per_estimator) {
            const auto& p = e.params[s];
            rows.push_back({first ? kDisplayNames[s] : "", std::string(to_string(e.kind)), fixed3(p.mean_estimate),
                            fixed3(p.mbe), fixed3(p.mse), fixed3(p.mean_se), fixed3(p.coverage),
                            fixed3(p.mean_ci_length), std::to_string(p.n_used)});
            first = false;
        }
    }
    return render_text(rows, 2);
}

std::string emit_failure_table(const SimMetrics& metrics, TableFormat format) {
    if (format == TableFormat::Csv) {
        std::string out = "estimator,fail_pct,unstable_pct,n_fail,n_unstable,n_reps\n";
        for (const auto& e : metrics.per_estimator)
            out += std::string(to_string(e.kind)) + "," + num(e.fail_pct) + "," + num(e.unstable_pct) + "," +
                   std::to_string(e.n_fail) + "," + std::to_string(e.n_unstable) + "," + std::to_string(e.n_reps) +
                   "\n";
        return out;
    }
    std::vector<std::vector<std::string>> rows{{"Type", "Fail to estimate (%)", "Unstable estimate (%)"}};
    for (const auto& e : metrics.per_estimator) {
        std::ostringstream f, u;
        f << std::fixed << std::setprecision(1) << e.fail_pct;
        u << std::fixed << std::setprecision(1) << e.unstable_pct;
        rows.push_back({std::string(to_string(e.kind)), f.str(), u.str()});
    }
    return render_text(rows, 1);
}

std::string emit_audit_csv(const SimMetrics& metrics) {
    std::string out = "rep,estimator,status,e0,emax,log_ed50,se_e0,se_emax,se_log_ed50,iterations,reason\n";
    for (const auto& r : metrics.audit) {
        out += std::to_string(r.rep) + "," + std::string(to_string(r.kind)) + "," + std::string(to_string(r.status));
        for (int s = 0; s < 3; ++s) out += "," + (r.estimate ? num((*r.estimate)[s]) : std::string("NA"));
        for (int s = 0; s < 3; ++s) out += "," + (r.std_err ? num((*r.std_err)[s]) : std::string("NA"));
        out += "," + std::to_string(r.iterations) + "," + std::string(to_string(r.reason)) + "\n";
    }
    return out;
}

SimMetrics parse_table_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line) || split(line) != split(kTableHeader))
        throw std::invalid_argument("unexpected metrics header");
    SimMetrics m;
    std::map<std::string, std::size_t> index;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto f = split(line);
        if (f.size() != 13) throw std::invalid_argument("metrics row needs 13 fields: " + line);
        int s = -1;
        for (int k = 0; k < 3; ++k)
            if (f[0] == kParamNames[k]) s = k;
        if (s < 0) throw std::invalid_argument("unknown parameter: " + f[0]);
        const auto kind = parse_estimator(f[1]);
        if (!kind) throw std::invalid_argument("unknown estimator: " + f[1]);
        auto it = index.find(f[1]);
        if (it == index.end()) {
            it = index.emplace(f[1], m.per_estimator.size()).first;
            EstimatorMetrics em;
            em.kind = *kind;
            m.per_estimator.push_back(em);
        }
        EstimatorMetrics& em = m.per_estimator[it->second];
        ParamMetrics& p = em.params[s];
        p.mean_estimate = parse_num(f[2]);
        p.mbe = parse_num(f[3]);
        p.mse = parse_num(f[4]);
        p.mean_se = parse_num(f[5]);
        p.coverage = parse_num(f[6]);
        p.mean_ci_length = parse_num(f[7]);
        p.n_used = parse_int(f[8]);
        p.n_se_used = parse_int(f[9]);
        em.n_reps = parse_int(f[10]);
        em.n_fail = parse_int(f[11]);
        em.n_unstable = parse_int(f[12]);
        em.fail_pct = em.n_reps > 0 ? 100.0 * em.n_fail / em.n_reps : 0.0;
        em.unstable_pct = em.n_reps > 0 ? 100.0 * em.n_unstable / em.n_reps : 0.0;
        m.n_reps = em.n_reps;
    }
    return m;
}

}  // namespace emaxbr
