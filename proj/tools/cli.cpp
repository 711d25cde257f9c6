#include "cli.hpp"

#include "emaxbr/data_io.hpp"
#include "emaxbr/diagnostics.hpp"
#include "emaxbr/estimators.hpp"
#include "emaxbr/inference.hpp"
#include "emaxbr/parallel.hpp"
#include "emaxbr/simharness.hpp"
#include "emaxbr/study_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace emaxbr::cli {

namespace {

using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string data;
    std::string layout = "auto";
    std::string estimator = "all";
    double level = 0.95;
    std::string out;
    std::string format = "json";
    int max_iter = SolverConfig{}.max_iter;
    double grad_tol = SolverConfig{}.grad_tol;
    std::size_t threads = 0;
    bool timestamp = false;
};

struct PredictOptions {
    int boot = 0;
    std::uint64_t seed = 1;
    std::string doses;
};

struct SimulateOptions {
    std::string study;
    std::string audit;
};

std::string number(double v) {
    if (!std::isfinite(v)) return "NA";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : "NA";
}

json nullable(const std::optional<double>& v) { return v && std::isfinite(*v) ? json(*v) : json(nullptr); }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

SolverConfig solver_from(const CommonOptions& o) {
    SolverConfig c;
    c.max_iter = o.max_iter;
    c.grad_tol = o.grad_tol;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return c;
}

std::vector<EstimatorKind> estimators_from(const std::string& name) {
    if (name == "all") return {kAllEstimators.begin(), kAllEstimators.end()};
    const auto kind = parse_estimator(name);
    if (!kind) throw UsageError("--estimator: unknown estimator '" + name + "'");
    return {*kind};
}

ObservationSet load_data(const CommonOptions& o, DataLayout& layout) {
    const auto requested = parse_layout(o.layout);
    if (!requested) throw UsageError("--layout: expected auto, subject or aggregated");
    if (o.data.empty()) throw UsageError("--data is required");
    if (!std::filesystem::is_regular_file(o.data)) throw UsageError("cannot open '" + o.data + "'");
    return read_data_csv(o.data, *requested, &layout);
}

json arms_json(const std::vector<ArmSummary>& arms) {
    json a = json::array();
    for (const auto& arm : arms)
        a.push_back({{"dose", arm.dose}, {"n", arm.n}, {"events", arm.events}, {"proportion", arm.proportion()}});
    return a;
}

json input_json(const CommonOptions& o, const ObservationSet& data, DataLayout layout) {
    return {{"path", o.data},
            {"layout", std::string(to_string(layout))},
            {"n_subjects", data.total_n()},
            {"n_events", data.total_events()},
            {"arms", arms_json(data.arms())}};
}

json solver_json(const SolverConfig& c) {
    return {{"grad_tol", c.grad_tol},
            {"rel_change_tol", c.rel_change_tol},
            {"max_iter", c.max_iter},
            {"ed50_upper_mult", c.ed50_upper_mult},
            {"ed50_lower_mult", c.ed50_lower_mult},
            {"rel_se_threshold", c.rel_se_threshold}};
}

json params_json(const std::optional<EmaxParams>& p) {
    if (!p) return nullptr;
    return {{"e0", p->e0}, {"emax", p->emax}, {"log_ed50", p->phi}};
}

json diagnostics_json(const DiagnosticReport& r) {
    json flags = json::array();
    for (const auto& f : r.flags) flags.push_back(f);
    return {{"separation", std::string(to_string(r.separation))},
            {"shape", r.shape ? json(std::string(to_string(*r.shape))) : json(nullptr)},
            {"flags", flags}};
}

int exit_code_for(const std::vector<FitStatus>& statuses) {
    int code = kExitOk;
    for (auto s : statuses) {
        if (s == FitStatus::FailedToEstimate) code = kExitFailed;
        else if (s == FitStatus::Unstable && code == kExitOk) code = kExitUnstable;
    }
    return code;
}

// Writes to --out (created only once the report is complete) or to `out`.
void emit(const CommonOptions& o, const std::string& body, std::ostream& out) {
    if (o.out.empty()) {
        out << body;
        return;
    }
    std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write '" + o.out + "'");
    f << body;
}

std::string dump(json j, const CommonOptions& o) {
    if (o.timestamp) j["generated_at"] = utc_now();
    return j.dump(2) + "\n";
}

void require_format(const CommonOptions& o, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed)
        if (o.format == a) return;
    throw UsageError("--format: '" + o.format + "' is not supported by this command");
}

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) throw UsageError("--level: must lie in (0, 1)");
}

// ---------------------------------------------------------------------------

int cmd_fit(const CommonOptions& o, std::ostream& out) {
    require_format(o, {"json", "csv"});
    check_level(o.level);
    const SolverConfig cfg = solver_from(o);
    const auto kinds = estimators_from(o.estimator);
    DataLayout layout;
    const ObservationSet data = load_data(o, layout);
    data.require_fittable();

    std::vector<FitResult> fits;
    for (auto k : kinds) fits.push_back(fit(k, data, cfg));

    std::vector<FitStatus> statuses;
    std::string body;
    if (o.format == "csv") {
        std::ostringstream csv;
        csv << "estimator,parameter,estimate,std_err,ci_lower,ci_upper,status,reason,iterations\n";
        for (const auto& f : fits) {
            statuses.push_back(f.status);
            const auto cis = wald_intervals(f, o.level);
            for (int s = 0; s < 3; ++s) {
                const double est = f.params ? f.params->vec()[s] : std::numeric_limits<double>::quiet_NaN();
                const double se = f.std_errors ? (*f.std_errors)[s] : std::numeric_limits<double>::quiet_NaN();
                csv << to_string(f.kind) << ',' << kParamNames[s] << ',' << number(est) << ',' << number(se) << ','
                    << (cis[s] ? number(cis[s]->lower) : "NA") << ',' << (cis[s] ? number(cis[s]->upper) : "NA")
                    << ',' << to_string(f.status) << ',' << to_string(f.reason) << ',' << f.iterations << '\n';
            }
        }
        body = csv.str();
    } else {
        json report = {{"command", "fit"},
                       {"input", input_json(o, data, layout)},
                       {"level", o.level},
                       {"solver", solver_json(cfg)}};
        json jf = json::array();
        for (const auto& f : fits) {
            statuses.push_back(f.status);
            const auto cis = wald_intervals(f, o.level);
            json params = json::array();
            for (int s = 0; s < 3; ++s) {
                json p = {{"name", kParamNames[s]}};
                p["estimate"] = f.params ? nullable(f.params->vec()[s]) : json(nullptr);
                p["std_err"] = f.std_errors ? nullable((*f.std_errors)[s]) : json(nullptr);
                p["ci_lower"] = cis[s] ? json(cis[s]->lower) : json(nullptr);
                p["ci_upper"] = cis[s] ? json(cis[s]->upper) : json(nullptr);
                params.push_back(p);
            }
            json flags = json::array();
            if (f.params)
                for (const auto& fl : stability_report(f, data, cfg).flags) flags.push_back(fl);
            json covariance = nullptr;
            if (f.covariance && f.covariance->allFinite()) {
                covariance = json::array();
                for (int r = 0; r < 3; ++r)
                    covariance.push_back({(*f.covariance)(r, 0), (*f.covariance)(r, 1), (*f.covariance)(r, 2)});
            }
            jf.push_back({{"estimator", std::string(to_string(f.kind))},
                          {"status", std::string(to_string(f.status))},
                          {"reason", std::string(to_string(f.reason))},
                          {"iterations", f.iterations},
                          {"parameters", params},
                          {"ed50", f.params ? json(f.params->ed50()) : json(nullptr)},
                          {"covariance", covariance},
                          {"base_mle", params_json(f.base_mle)},
                          {"flags", flags}});
        }
        report["fits"] = jf;
        report["diagnostics"] = diagnostics_json(diagnose(data));
        body = dump(report, o);
    }
    emit(o, body, out);
    return exit_code_for(statuses);
}

std::vector<double> parse_dose_list(const std::string& text) {
    std::vector<double> doses;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = text.find(',', pos);
        std::string cell = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        cell.erase(0, cell.find_first_not_of(" \t"));
        cell.erase(cell.find_last_not_of(" \t") + 1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !(v >= 0.0) || !std::isfinite(v))
            throw UsageError("--doses: '" + cell + "' is not a nonnegative number");
        doses.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return doses;
}

int cmd_predict(const CommonOptions& o, const PredictOptions& p, std::ostream& out) {
    require_format(o, {"json", "csv"});
    check_level(o.level);
    if (p.boot < 0) throw UsageError("--boot: must be nonnegative");
    SolverConfig cfg = solver_from(o);
    const auto kinds = estimators_from(o.estimator);
    DataLayout layout;
    const ObservationSet data = load_data(o, layout);
    data.require_fittable();
    const std::vector<double> doses = p.doses.empty() ? data.dose_levels() : parse_dose_list(p.doses);
    const std::size_t threads = resolve_threads(o.threads);

    struct Row {
        FitResult fit;
        std::optional<BootstrapResult> boot;
        std::string boot_error;
    };
    std::vector<Row> rows;
    std::vector<FitStatus> statuses;
    for (auto k : kinds) {
        Row r{fit(k, data, cfg), std::nullopt, ""};
        statuses.push_back(r.fit.status);
        if (p.boot > 0 && r.fit.params) {
            try {
                r.boot = bootstrap_bands(data, k, doses, p.boot, p.seed, cfg, o.level, threads);
            } catch (const TooManyFailures& e) {
                r.boot_error = e.what();
                statuses.push_back(FitStatus::FailedToEstimate);
            }
        }
        rows.push_back(std::move(r));
    }

    std::string body;
    if (o.format == "csv") {
        std::ostringstream csv;
        csv << "estimator,dose,prob,lower,upper,status\n";
        for (const auto& r : rows)
            for (std::size_t d = 0; d < doses.size(); ++d) {
                const double prob = r.fit.params ? predict_prob(*r.fit.params, doses[d])
                                                 : std::numeric_limits<double>::quiet_NaN();
                csv << to_string(r.fit.kind) << ',' << number(doses[d]) << ',' << number(prob) << ','
                    << (r.boot ? number(r.boot->bands[d].lower) : "NA") << ','
                    << (r.boot ? number(r.boot->bands[d].upper) : "NA") << ',' << to_string(r.fit.status) << '\n';
            }
        body = csv.str();
    } else {
        json report = {{"command", "predict"},
                       {"input", input_json(o, data, layout)},
                       {"level", o.level},
                       {"n_boot", p.boot},
                       {"seed", p.seed},
                       {"interval", "percentile"},
                       {"resampling", "stratified_by_arm"}};
        json preds = json::array();
        for (const auto& r : rows) {
            json points = json::array();
            for (std::size_t d = 0; d < doses.size(); ++d) {
                json pt = {{"dose", doses[d]}};
                pt["prob"] = r.fit.params ? json(predict_prob(*r.fit.params, doses[d])) : json(nullptr);
                pt["lower"] = r.boot ? json(r.boot->bands[d].lower) : json(nullptr);
                pt["upper"] = r.boot ? json(r.boot->bands[d].upper) : json(nullptr);
                points.push_back(pt);
            }
            preds.push_back({{"estimator", std::string(to_string(r.fit.kind))},
                             {"status", std::string(to_string(r.fit.status))},
                             {"reason", std::string(to_string(r.fit.reason))},
                             {"n_failed", r.boot ? json(r.boot->n_failed) : json(nullptr)},
                             {"bands_error", r.boot_error.empty() ? json(nullptr) : json(r.boot_error)},
                             {"points", points}});
        }
        report["predictions"] = preds;
        body = dump(report, o);
    }
    emit(o, body, out);
    return exit_code_for(statuses);
}

int cmd_diagnose(const CommonOptions& o, std::ostream& out) {
    require_format(o, {"json"});
    DataLayout layout;
    const ObservationSet data = load_data(o, layout);
    DiagnosticReport r = diagnose(data);
    json report = {{"command", "diagnose"}, {"input", input_json(o, data, layout)}};
    report["diagnostics"] = diagnostics_json(r);
    report["per_arm"] = arms_json(r.per_arm);
    emit(o, dump(report, o), out);
    return r.separation == Separation::None ? kExitOk : kExitUnstable;
}

json metrics_json(const SimMetrics& m) {
    json per = json::array();
    for (const auto& e : m.per_estimator) {
        json params = json::array();
        for (int s = 0; s < 3; ++s) {
            const auto& p = e.params[s];
            params.push_back({{"name", kParamNames[s]},
                              {"estimate", nullable(p.mean_estimate)},
                              {"mbe", nullable(p.mbe)},
                              {"mse", nullable(p.mse)},
                              {"est_se", nullable(p.mean_se)},
                              {"cp", nullable(p.coverage)},
                              {"est_length", nullable(p.mean_ci_length)},
                              {"n_used", p.n_used},
                              {"n_se_used", p.n_se_used}});
        }
        per.push_back({{"estimator", std::string(to_string(e.kind))},
                       {"n_reps", e.n_reps},
                       {"n_fail", e.n_fail},
                       {"n_unstable", e.n_unstable},
                       {"fail_pct", e.fail_pct},
                       {"unstable_pct", e.unstable_pct},
                       {"parameters", params}});
    }
    return {{"command", "simulate"},
            {"truth", params_json(m.truth)},
            {"level", m.level},
            {"n_reps", m.n_reps},
            {"draws", m.draws},
            {"acceptance_rate", m.acceptance_rate},
            {"estimators", per}};
}

int cmd_simulate(const CommonOptions& o, const SimulateOptions& s, std::ostream& out, std::ostream& err) {
    require_format(o, {"csv", "json", "text"});
    if (s.study.empty()) throw UsageError("--study is required");
    if (!std::filesystem::is_regular_file(s.study)) throw UsageError("cannot open '" + s.study + "'");
    StudyRequest req;
    try {
        req = read_study_json(s.study);
    } catch (const StudyValidationError& e) {
        for (const auto& p : e.problems) err << "emaxbr: invalid study: " << p << '\n';
        return kExitUsage;
    }
    const std::size_t threads = resolve_threads(o.threads);
    SimMetrics m;
    try {
        m = req.shape ? run_shape_conditioned_study(req.study, req.shape->target, req.shape->n_keep, threads)
                      : run_study(req.study, threads);
    } catch (const ShapeUnreachable& e) {
        err << "emaxbr: " << e.what() << '\n';
        return kExitFailed;
    }

    std::string body;
    if (o.format == "csv") body = emit_table(m, TableFormat::Csv);
    else if (o.format == "text") body = emit_failure_table(m, TableFormat::Text) + "\n" + emit_table(m, TableFormat::Text);
    else body = dump(metrics_json(m), o);
    if (!s.audit.empty()) {
        std::ofstream f(s.audit, std::ios::binary | std::ios::trunc);
        if (!f) throw UsageError("cannot write '" + s.audit + "'");
        f << emit_audit_csv(m);
    }
    emit(o, body, out);
    return kExitOk;
}

void add_common(CLI::App* app, CommonOptions& o, bool estimator, bool data = true) {
    if (data) {
        app->add_option("--data", o.data, "Input CSV: header dose,y or dose,n,events");
        app->add_option("--layout", o.layout, "auto | subject | aggregated");
    }
    if (estimator) {
        app->add_option("--estimator", o.estimator, "mle | coxsnell | firth | mple | all");
        app->add_option("--level", o.level, "Confidence level");
        app->add_option("--max-iter", o.max_iter, "Iteration budget per fit");
        app->add_option("--grad-tol", o.grad_tol, "Gradient stopping tolerance");
    }
    app->add_option("--out", o.out, "Output file (default: stdout)");
    app->add_option("--format", o.format, "json | csv (simulate also: text)");
    app->add_flag("--timestamp", o.timestamp, "Add a generated_at field to JSON reports");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Binary Emax dose-response fitting with bias-reduced estimators", "emaxbr"};
    app.require_subcommand(1);
    CommonOptions common;
    PredictOptions predict;
    SimulateOptions simulate;

    auto* fit_cmd = app.add_subcommand("fit", "Fit one or all estimators and report Wald intervals");
    add_common(fit_cmd, common, true);
    auto* predict_cmd = app.add_subcommand("predict", "Fitted response probabilities with bootstrap bands");
    add_common(predict_cmd, common, true);
    predict_cmd->add_option("--boot", predict.boot, "Bootstrap replicates (0 disables bands)");
    predict_cmd->add_option("--seed", predict.seed, "Bootstrap seed");
    predict_cmd->add_option("--doses", predict.doses, "Comma-separated doses (default: the data's dose levels)");
    predict_cmd->add_option("--threads", common.threads, "Worker threads (0 = all cores, capped by EMAXBR_THREADS)");
    auto* diagnose_cmd = app.add_subcommand("diagnose", "Separation, sample shape and per-arm table");
    add_common(diagnose_cmd, common, false);
    auto* simulate_cmd = app.add_subcommand("simulate", "Run a Monte Carlo study from a JSON definition");
    add_common(simulate_cmd, common, false, false);
    simulate_cmd->add_option("--study", simulate.study, "Study definition (JSON)");
    simulate_cmd->add_option("--audit", simulate.audit, "Per-replicate audit CSV");
    simulate_cmd->add_option("--threads", common.threads, "Worker threads (0 = all cores, capped by EMAXBR_THREADS)");
    simulate_cmd->callback([&] {
        if (common.format == "json" && simulate_cmd->count("--format") == 0) common.format = "csv";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*fit_cmd) return cmd_fit(common, out);
        if (*predict_cmd) return cmd_predict(common, predict, out);
        if (*diagnose_cmd) return cmd_diagnose(common, out);
        if (*simulate_cmd) return cmd_simulate(common, simulate, out, err);
    } catch (const UsageError& e) {
        err << "emaxbr: error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        err << "emaxbr: error: " << common.data << ": " << e.what() << '\n';
        return kExitUsage;
    } catch (const InvalidData& e) {
        err << "emaxbr: error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "emaxbr: error: " << e.what() << '\n';
        return kExitFailed;
    }
    return kExitUsage;
}

}  // namespace emaxbr::cli
