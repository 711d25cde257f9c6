#pragma once

#include "emaxbr/simharness.hpp"

#include <filesystem>
#include <optional>
#include <string_view>

namespace emaxbr {

struct ShapeRequest {
    std::optional<Shape> target;  // empty keeps every draw
    int n_keep = 0;
};

struct StudyRequest {
    SimStudy study;
    std::optional<ShapeRequest> shape;
};

/// Study definition:
///   doses, n_total, truth {e0, emax, log_ed50 | ed50}, n_reps,
///   estimators ("all" or a list of names), seed,
///   solver {grad_tol, rel_change_tol, max_iter, ed50_upper_mult,
///           ed50_lower_mult, rel_se_threshold, stationarity_tol, step_tol,
///           max_step},
///   level, shape {target, n_keep}.
/// With a shape block the run keeps the first n_keep draws of the target
/// shape ("any" keeps every draw) and n_reps is not used.
/// Unknown keys, type errors and range errors are all collected and thrown
/// together as StudyValidationError.
StudyRequest parse_study_json(std::string_view text);
StudyRequest read_study_json(const std::filesystem::path& path);

}  // namespace emaxbr
