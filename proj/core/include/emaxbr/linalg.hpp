#pragma once

#include "emaxbr/model.hpp"

#include <optional>

namespace emaxbr {

/// Reciprocal 2-norm condition number of a symmetric matrix (0 when singular).
double reciprocal_condition(const Mat3& m);

/// Inverse of a symmetric matrix, or nullopt when rcond < min_rcond.
std::optional<Mat3> symmetric_inverse(const Mat3& m, double min_rcond = 1e-12);

/// log det of a symmetric positive-definite matrix, or nullopt otherwise.
std::optional<double> log_det_spd(const Mat3& m);

bool is_positive_definite(const Mat3& m);

inline Mat3 symmetrize(const Mat3& m) { return 0.5 * (m + m.transpose()); }

}  // namespace emaxbr
