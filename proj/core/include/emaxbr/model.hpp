#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emaxbr {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Dense 3x3x3 array. Slice [k] is the matrix T(., ., k).
using Tensor3 = std::array<Mat3, 3>;

inline Tensor3 zero_tensor() {
    return {Mat3::Zero(), Mat3::Zero(), Mat3::Zero()};
}

// Parameter slots, in the order used by every vector, matrix and tensor.
enum ParamIndex : int { kE0 = 0, kEmax = 1, kLogEd50 = 2 };

inline constexpr std::array<const char*, 3> kParamNames = {"e0", "emax", "log_ed50"};

class InvalidData : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Emax parameters on the logit scale, with ED50 carried as its natural log.
struct EmaxParams {
    double e0 = 0.0;
    double emax = 0.0;
    double phi = 0.0;

    double ed50() const { return std::exp(phi); }
    bool finite() const { return std::isfinite(e0) && std::isfinite(emax) && std::isfinite(phi); }

    Vec3 vec() const { return {e0, emax, phi}; }
    static EmaxParams from_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }

    friend bool operator==(const EmaxParams&, const EmaxParams&) = default;
};

/// A block of subjects sharing one dose. Subject-level data uses n == 1.
struct DoseGroup {
    double dose = 0.0;
    int n = 0;
    int events = 0;

    friend bool operator==(const DoseGroup&, const DoseGroup&) = default;
};

/// Per-arm summary used by diagnostics and resampling.
struct ArmSummary {
    double dose = 0.0;
    int n = 0;
    int events = 0;
    double proportion() const { return n > 0 ? static_cast<double>(events) / n : 0.0; }
};

/// Binary dose-response data, either one record per subject or one per
/// (dose, n, events) group. Both forms give identical likelihood quantities.
class ObservationSet {
public:
    ObservationSet() = default;

    static ObservationSet from_subjects(std::span<const double> doses, std::span<const int> y);
    static ObservationSet from_groups(std::vector<DoseGroup> groups);

    const std::vector<DoseGroup>& groups() const { return groups_; }
    std::size_t size() const { return groups_.size(); }
    bool empty() const { return groups_.empty(); }

    int total_n() const;
    int total_events() const;

    /// Sorted distinct dose levels D_1 < ... < D_M.
    std::vector<double> dose_levels() const;
    double max_dose() const;
    /// Smallest strictly positive dose; 0 when there is none.
    double min_positive_dose() const;

    /// One group per distinct dose, sorted by dose.
    ObservationSet aggregated() const;
    /// One n == 1 group per subject, events first within each group.
    ObservationSet expanded() const;
    std::vector<ArmSummary> arms() const;

    /// Throws InvalidData unless the set can be fitted: at least two distinct
    /// dose levels and at least one positive dose.
    void require_fittable() const;

private:
    explicit ObservationSet(std::vector<DoseGroup> g) : groups_(std::move(g)) {}
    std::vector<DoseGroup> groups_;
};

/// eta and its partial derivatives for one group, w.r.t. (e0, emax, phi).
struct ObsDerivs {
    double eta = 0.0;
    double pi = 0.5;
    Vec3 g = Vec3::Zero();
    Mat3 h = Mat3::Zero();
    Tensor3 t = zero_tensor();
};

struct DerivTensors {
    std::vector<ObsDerivs> obs;  // parallel to ObservationSet::groups()
};

double expit(double x);
double logit(double p);
/// log(1 + exp(x)) without overflow.
double log1pexp(double x);

double eta(const EmaxParams& params, double dose);
double predict_prob(const EmaxParams& params, double dose);

ObsDerivs obs_derivs(const EmaxParams& params, double dose, bool with_third = true);
DerivTensors deriv_tensors(const EmaxParams& params, const ObservationSet& data);

double log_likelihood(const EmaxParams& params, const ObservationSet& data);
Vec3 score(const EmaxParams& params, const ObservationSet& data);
Mat3 hessian(const EmaxParams& params, const ObservationSet& data);
Mat3 expected_information(const EmaxParams& params, const ObservationSet& data);

/// Log-likelihood, score and Hessian from a single pass.
struct LikelihoodParts {
    double loglik = 0.0;
    Vec3 score = Vec3::Zero();
    Mat3 hessian = Mat3::Zero();
    Mat3 information = Mat3::Zero();
};
LikelihoodParts likelihood_parts(const EmaxParams& params, const ObservationSet& data);

}  // namespace emaxbr
