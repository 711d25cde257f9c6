#pragma once

#include "emaxbr/model.hpp"

namespace emaxbr {

/// Likelihood cumulants used by the bias corrections. Every tensor is stored
/// as three slices, T[k](r, j) == T_{r j k}:
///   k3[l](r, j)   = E[d^3 l / d theta_r d theta_j d theta_l]
///   k2_1[l](r, j) = E[H_rj U_l]
///   p[s](r, j)    = E[U_r U_j U_s]
///   dI[s](r, j)   = d I_rj / d theta_s
struct CumulantBundle {
    Tensor3 k3 = zero_tensor();
    Tensor3 k2_1 = zero_tensor();
    Tensor3 p = zero_tensor();
    Tensor3 dI = zero_tensor();
    Mat3 information = Mat3::Zero();
};

CumulantBundle cumulants(const EmaxParams& params, const ObservationSet& data);

Tensor3 kappa_rjl(const EmaxParams& params, const ObservationSet& data);
Tensor3 kappa_rj_l(const EmaxParams& params, const ObservationSet& data);
Tensor3 p_tensor(const EmaxParams& params, const ObservationSet& data);
Tensor3 info_derivative(const EmaxParams& params, const ObservationSet& data);

/// R_s(r, j) = kappa_{rs,j}. The information derivative satisfies
/// dI_s = P_s + R_s + R_s^T.
Mat3 mixed_slice(const Tensor3& k2_1, int s);

/// Largest |dI_s - P_s - R_s - R_s^T| entry relative to max(1, |dI|).
double information_identity_residual(const CumulantBundle& c);

}  // namespace emaxbr
