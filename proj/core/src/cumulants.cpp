#include "emaxbr/cumulants.hpp"

#include <algorithm>

namespace emaxbr {

CumulantBundle cumulants(const EmaxParams& params, const ObservationSet& data) {
    CumulantBundle c;
    for (const auto& gr : data.groups()) {
        const ObsDerivs o = obs_derivs(params, gr.dose, false);
        const double pq = o.pi * expit(-o.eta);
        const double w = gr.n * pq;
        // E[(y - pi)^3] = pi(1 - pi)(1 - 2 pi); 1 - 2 pi = -tanh(eta / 2).
        const double w3 = -w * std::tanh(0.5 * o.eta);
        const Vec3& g = o.g;
        const Mat3& h = o.h;
        const Mat3 ggt = g * g.transpose();

        c.information += w * ggt;
        for (int s = 0; s < 3; ++s) {
            const Mat3 hg = h.col(s) * g.transpose();  // (r, j) -> h_rs g_j
            c.p[s] += (w3 * g[s]) * ggt;
            c.k2_1[s] += (w * g[s]) * h;
            c.dI[s] += (w3 * g[s]) * ggt + w * (hg + hg.transpose());
            c.k3[s] += -(w3 * g[s]) * ggt - w * (hg + hg.transpose() + g[s] * h);
        }
    }
    return c;
}

Tensor3 kappa_rjl(const EmaxParams& params, const ObservationSet& data) { return cumulants(params, data).k3; }
Tensor3 kappa_rj_l(const EmaxParams& params, const ObservationSet& data) { return cumulants(params, data).k2_1; }
Tensor3 p_tensor(const EmaxParams& params, const ObservationSet& data) { return cumulants(params, data).p; }
Tensor3 info_derivative(const EmaxParams& params, const ObservationSet& data) { return cumulants(params, data).dI; }

Mat3 mixed_slice(const Tensor3& k2_1, int s) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = k2_1[j](i, s);
    return r;
}

double information_identity_residual(const CumulantBundle& c) {
    double worst = 0.0;
    for (int s = 0; s < 3; ++s) {
        const Mat3 r = mixed_slice(c.k2_1, s);
        const Mat3 diff = c.dI[s] - c.p[s] - r - r.transpose();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                worst = std::max(worst, std::abs(diff(i, j)) / std::max(1.0, std::abs(c.dI[s](i, j))));
    }
    return worst;
}

}  // namespace emaxbr
