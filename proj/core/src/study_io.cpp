#include "emaxbr/study_io.hpp"

#include "emaxbr/data_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace emaxbr {

namespace {

using nlohmann::json;

class Reader {
public:
    std::vector<std::string> problems;

    void check_keys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
        for (const auto& [key, value] : obj.items())
            if (!allowed.count(key)) problems.push_back(prefix + key + ": unknown key");
    }

    bool number(const json& obj, const std::string& prefix, const char* key, double& out, bool required) {
        if (!obj.contains(key)) {
            if (required) problems.push_back(prefix + key + ": required");
            return false;
        }
        const json& v = obj.at(key);
        if (!v.is_number()) {
            problems.push_back(prefix + key + ": must be a number");
            return false;
        }
        out = v.get<double>();
        return true;
    }

    bool integer(const json& obj, const std::string& prefix, const char* key, long long& out, bool required) {
        if (!obj.contains(key)) {
            if (required) problems.push_back(prefix + key + ": required");
            return false;
        }
        const json& v = obj.at(key);
        if (!v.is_number_integer()) {
            problems.push_back(prefix + key + ": must be an integer");
            return false;
        }
        out = v.get<long long>();
        return true;
    }

    template <class T>
    void bounded_int(const json& obj, const std::string& prefix, const char* key, T& out, bool required) {
        long long v = 0;
        if (!integer(obj, prefix, key, v, required)) return;
        if (v < 0 || v > 2000000000LL) {
            problems.push_back(prefix + key + ": out of range");
            return;
        }
        out = static_cast<T>(v);
    }
};

}  // namespace

StudyRequest parse_study_json(std::string_view text) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw StudyValidationError({std::string("json: ") + e.what()});
    }
    if (!root.is_object()) throw StudyValidationError({"json: the study must be an object"});

    Reader rd;
    StudyRequest req;
    SimStudy& s = req.study;
    rd.check_keys(root, "",
                  {"doses", "n_total", "truth", "n_reps", "estimators", "seed", "solver", "level", "shape"});

    if (!root.contains("doses")) {
        rd.problems.push_back("doses: required");
    } else if (!root["doses"].is_array()) {
        rd.problems.push_back("doses: must be an array of numbers");
    } else {
        for (const auto& d : root["doses"]) {
            if (!d.is_number()) {
                rd.problems.push_back("doses: must be an array of numbers");
                s.doses.clear();
                break;
            }
            s.doses.push_back(d.get<double>());
        }
    }
    rd.bounded_int(root, "", "n_total", s.n_total, true);
    rd.bounded_int(root, "", "n_reps", s.n_reps, true);

    if (!root.contains("truth")) {
        rd.problems.push_back("truth: required");
    } else if (!root["truth"].is_object()) {
        rd.problems.push_back("truth: must be an object");
    } else {
        const json& t = root["truth"];
        rd.check_keys(t, "truth.", {"e0", "emax", "log_ed50", "ed50"});
        rd.number(t, "truth.", "e0", s.truth.e0, true);
        rd.number(t, "truth.", "emax", s.truth.emax, true);
        const bool has_log = t.contains("log_ed50");
        const bool has_lin = t.contains("ed50");
        if (has_log && has_lin) {
            rd.problems.push_back("truth.ed50: give either log_ed50 or ed50, not both");
        } else if (has_lin) {
            double ed50 = 0.0;
            if (rd.number(t, "truth.", "ed50", ed50, true)) {
                if (ed50 > 0.0 && std::isfinite(ed50)) s.truth.phi = std::log(ed50);
                else rd.problems.push_back("truth.ed50: must be positive");
            }
        } else {
            rd.number(t, "truth.", "log_ed50", s.truth.phi, true);
        }
    }

    if (root.contains("estimators")) {
        const json& e = root["estimators"];
        if (e.is_string() && e.get<std::string>() == "all") {
            s.estimators.assign(kAllEstimators.begin(), kAllEstimators.end());
        } else if (e.is_array()) {
            s.estimators.clear();
            for (const auto& name : e) {
                const auto kind = name.is_string() ? parse_estimator(name.get<std::string>()) : std::nullopt;
                if (!kind) {
                    rd.problems.push_back("estimators: unknown estimator " + name.dump());
                    continue;
                }
                if (std::find(s.estimators.begin(), s.estimators.end(), *kind) == s.estimators.end())
                    s.estimators.push_back(*kind);
            }
        } else {
            rd.problems.push_back("estimators: must be \"all\" or an array of names");
        }
    }

    if (root.contains("seed")) {
        const json& v = root["seed"];
        if (v.is_number_unsigned()) s.seed = v.get<std::uint64_t>();
        else rd.problems.push_back("seed: must be a nonnegative integer");
    }

    rd.number(root, "", "level", s.level, false);

    if (root.contains("solver")) {
        const json& sv = root["solver"];
        if (!sv.is_object()) {
            rd.problems.push_back("solver: must be an object");
        } else {
            SolverConfig& c = s.solver;
            rd.check_keys(sv, "solver.",
                          {"grad_tol", "rel_change_tol", "max_iter", "ed50_upper_mult", "ed50_lower_mult",
                           "rel_se_threshold", "stationarity_tol", "step_tol", "max_step"});
            rd.number(sv, "solver.", "grad_tol", c.grad_tol, false);
            rd.number(sv, "solver.", "rel_change_tol", c.rel_change_tol, false);
            rd.bounded_int(sv, "solver.", "max_iter", c.max_iter, false);
            rd.number(sv, "solver.", "ed50_upper_mult", c.ed50_upper_mult, false);
            rd.number(sv, "solver.", "ed50_lower_mult", c.ed50_lower_mult, false);
            rd.number(sv, "solver.", "rel_se_threshold", c.rel_se_threshold, false);
            rd.number(sv, "solver.", "stationarity_tol", c.stationarity_tol, false);
            rd.number(sv, "solver.", "step_tol", c.step_tol, false);
            rd.number(sv, "solver.", "max_step", c.max_step, false);
        }
    }

    if (root.contains("shape")) {
        const json& sh = root["shape"];
        if (!sh.is_object()) {
            rd.problems.push_back("shape: must be an object");
        } else {
            ShapeRequest shape;
            rd.check_keys(sh, "shape.", {"target", "n_keep"});
            if (sh.contains("target")) {
                const json& t = sh["target"];
                if (t.is_string() && t.get<std::string>() == "any") {
                    shape.target.reset();
                } else if (t.is_string() && parse_shape(t.get<std::string>())) {
                    shape.target = parse_shape(t.get<std::string>());
                } else {
                    rd.problems.push_back("shape.target: unknown shape " + t.dump());
                }
            } else {
                rd.problems.push_back("shape.target: required");
            }
            rd.bounded_int(sh, "shape.", "n_keep", shape.n_keep, true);
            if (sh.contains("n_keep") && shape.n_keep < 1) rd.problems.push_back("shape.n_keep: must be at least 1");
            req.shape = shape;
        }
    }

    // Range checks on the fields that did parse; a key already reported
    // above is not reported twice.
    try {
        s.validate();
    } catch (const StudyValidationError& e) {
        for (const auto& p : e.problems) {
            const std::string key = p.substr(0, p.find(':'));
            const bool seen = std::any_of(rd.problems.begin(), rd.problems.end(), [&](const std::string& q) {
                return q.compare(0, key.size(), key) == 0;
            });
            if (!seen) rd.problems.push_back(p);
        }
    }
    if (!rd.problems.empty()) throw StudyValidationError(rd.problems);
    return req;
}

StudyRequest read_study_json(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const ParseError& e) {
        throw StudyValidationError({std::string("file: ") + e.what()});
    }
    return parse_study_json(text);
}

}  // namespace emaxbr
