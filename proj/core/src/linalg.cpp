#include "emaxbr/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace emaxbr {

double reciprocal_condition(const Mat3& m) {
    if (!m.allFinite()) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat3> es(symmetrize(m), Eigen::EigenvaluesOnly);
    const Vec3 ev = es.eigenvalues().cwiseAbs();
    const double hi = ev.maxCoeff();
    if (hi == 0.0) return 0.0;
    return ev.minCoeff() / hi;
}

std::optional<Mat3> symmetric_inverse(const Mat3& m, double min_rcond) {
    if (reciprocal_condition(m) < min_rcond) return std::nullopt;
    Eigen::FullPivLU<Mat3> lu(m);
    if (!lu.isInvertible()) return std::nullopt;
    return symmetrize(lu.inverse());
}

std::optional<double> log_det_spd(const Mat3& m) {
    if (!m.allFinite()) return std::nullopt;
    Eigen::LLT<Mat3> llt(symmetrize(m));
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Vec3 d = llt.matrixLLT().diagonal();
    if ((d.array() <= 0.0).any()) return std::nullopt;
    return 2.0 * d.array().log().sum();
}

bool is_positive_definite(const Mat3& m) {
    if (!m.allFinite()) return false;
    Eigen::LLT<Mat3> llt(symmetrize(m));
    return llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all();
}

}  // namespace emaxbr
