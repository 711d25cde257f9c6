#include "emaxbr/study_io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <string>

using namespace emaxbr;

namespace {

std::string data_path(const std::string& name) { return std::string(EMAXBR_DATA_DIR) + "/" + name; }

const char* kMinimal = R"({"doses": [0, 10, 100], "n_total": 30, "truth": {"e0": -2, "emax": 3, "log_ed50": 2},
                           "n_reps": 5})";

std::vector<std::string> problems_of(const std::string& text) {
    try {
        parse_study_json(text);
    } catch (const StudyValidationError& e) {
        return e.problems;
    }
    return {};
}

bool names(const std::vector<std::string>& problems, const std::string& key) {
    return std::any_of(problems.begin(), problems.end(),
                       [&](const std::string& p) { return p.rfind(key + ":", 0) == 0; });
}

}  // namespace

TEST(ParseStudyJson, MinimalDefaults) {
    const StudyRequest r = parse_study_json(kMinimal);
    EXPECT_EQ(r.study.doses, (std::vector<double>{0, 10, 100}));
    EXPECT_EQ(r.study.n_total, 30);
    EXPECT_EQ(r.study.n_reps, 5);
    EXPECT_EQ(r.study.truth, (EmaxParams{-2, 3, 2}));
    EXPECT_EQ(r.study.estimators.size(), kAllEstimators.size());
    EXPECT_EQ(r.study.level, 0.95);
    EXPECT_FALSE(r.shape.has_value());
}

TEST(ParseStudyJson, Ed50OnLinearScale) {
    const StudyRequest r = parse_study_json(
        R"({"doses": [0, 50, 150], "n_total": 30, "truth": {"e0": -2, "emax": 2, "ed50": 25}, "n_reps": 1})");
    EXPECT_DOUBLE_EQ(r.study.truth.phi, std::log(25.0));
}

TEST(ParseStudyJson, EstimatorListSolverAndShape) {
    const StudyRequest r = parse_study_json(R"({"doses": [0, 50, 150], "n_total": 30,
        "truth": {"e0": -2, "emax": 2, "log_ed50": 3}, "n_reps": 1, "seed": 18446744073709551615,
        "estimators": ["firth", "MPLE", "mple"], "solver": {"max_iter": 50, "grad_tol": 1e-7},
        "level": 0.9, "shape": {"target": "case_i", "n_keep": 20}})");
    EXPECT_EQ(r.study.estimators, (std::vector<EstimatorKind>{EstimatorKind::Firth, EstimatorKind::MPLE}));
    EXPECT_EQ(r.study.seed, 18446744073709551615ULL);
    EXPECT_EQ(r.study.solver.max_iter, 50);
    EXPECT_EQ(r.study.solver.grad_tol, 1e-7);
    EXPECT_EQ(r.study.level, 0.9);
    ASSERT_TRUE(r.shape.has_value());
    EXPECT_EQ(r.shape->target, Shape::NonMonotone);
    EXPECT_EQ(r.shape->n_keep, 20);
}

TEST(ParseStudyJson, AnyShape) {
    const StudyRequest r = parse_study_json(R"({"doses": [0, 50, 150], "n_total": 30,
        "truth": {"e0": -2, "emax": 2, "log_ed50": 3}, "n_reps": 1, "shape": {"target": "any", "n_keep": 3}})");
    ASSERT_TRUE(r.shape.has_value());
    EXPECT_FALSE(r.shape->target.has_value());
}

TEST(ParseStudyJson, ZeroRepsNamesTheField) {
    const auto p = problems_of(R"({"doses": [0, 10], "n_total": 30, "truth": {"e0": -2, "emax": 3, "log_ed50": 2},
                                  "n_reps": 0})");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_TRUE(names(p, "n_reps"));
}

TEST(ParseStudyJson, CollectsEveryProblem) {
    const auto p = problems_of(R"({"doses": [0, "x"], "n_total": 2.5, "truth": {"e0": -2, "emax": 3},
        "n_reps": -1, "estimators": ["bayes"], "solver": {"max_iter": 0, "speed": 1}, "colour": "red",
        "shape": {"target": "zigzag", "n_keep": 0}})");
    for (const char* key : {"doses", "n_total", "truth.log_ed50", "n_reps", "estimators", "solver.speed",
                            "colour", "shape.target", "shape.n_keep"})
        EXPECT_TRUE(names(p, key)) << key;
    EXPECT_TRUE(std::any_of(p.begin(), p.end(), [](const std::string& s) { return s.rfind("solver.", 0) == 0 &&
                                                                                   s.find("max_iter") != std::string::npos; }));
}

TEST(ParseStudyJson, BothEd50Forms) {
    EXPECT_TRUE(names(problems_of(R"({"doses": [0, 10], "n_total": 30, "n_reps": 1,
                                    "truth": {"e0": -2, "emax": 3, "log_ed50": 2, "ed50": 7}})"),
                      "truth.ed50"));
}

TEST(ParseStudyJson, MalformedJson) {
    const auto p = problems_of("{\"doses\": [0, 10,");
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].rfind("json:", 0), 0u);
    EXPECT_TRUE(names(problems_of("[1, 2]"), "json"));
}

TEST(ReadStudyJson, BundledStudies) {
    for (const char* f : {"study_n50.json", "study_n100.json", "study_n150.json", "study_n200.json",
                          "flat_ed50_250.json", "shape_case_i.json", "shape_case_ii.json"}) {
        StudyRequest r;
        ASSERT_NO_THROW(r = read_study_json(data_path(f))) << f;
        EXPECT_NO_THROW(r.study.validate()) << f;
    }
    const StudyRequest t = read_study_json(data_path("study_n50.json"));
    EXPECT_EQ(t.study.n_total, 50);
    EXPECT_EQ(t.study.n_reps, 1000);
    EXPECT_NEAR(t.study.truth.ed50(), 7.5, 1e-12);
    const StudyRequest c = read_study_json(data_path("shape_case_ii.json"));
    ASSERT_TRUE(c.shape.has_value());
    EXPECT_EQ(c.shape->target, Shape::ConvexIncreasing);
}
