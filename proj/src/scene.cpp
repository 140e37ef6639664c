#include "bcfmc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "bcfmc/error.hpp"

namespace bcfmc {

void AcquisitionConfig::validate() const {
    BCFMC_REQUIRE(n_c >= 1, ContractError, "n_c must be >= 1");
    BCFMC_REQUIRE(d_c > 0 && f_c > 0 && alpha > 0 && f_s > 0 && c0 > 0, ContractError,
                  "d_c, f_c, alpha, f_s and c0 must be positive");
    BCFMC_REQUIRE(noise_std >= 0, ContractError, "noise_std must be non-negative");
    BCFMC_REQUIRE(envelope_eps > 0 && envelope_eps < 1, ContractError,
                  "envelope_eps must lie in (0, 1)");
}

void RoiGrid::validate() const {
    BCFMC_REQUIRE(n_x >= 1 && n_z >= 1, ContractError, "n_x and n_z must be >= 1");
    BCFMC_REQUIRE(d_x > 0 && d_z > 0 && d_s > 0, ContractError,
                  "d_x, d_z and d_s must be positive");
}

RoiGrid square_roi(const AcquisitionConfig& acq, int n) {
    RoiGrid roi;
    roi.n_x = n;
    roi.n_z = n;
    roi.d_x = acq.d_c;
    roi.d_z = acq.d_c;
    roi.d_s = n * acq.d_c;
    return roi;
}

void validate_pair(const AcquisitionConfig& acq, const RoiGrid& roi) {
    acq.validate();
    roi.validate();
    BCFMC_REQUIRE(roi.d_x == acq.d_c, ContractError,
                  "pixel width d_x must equal the array pitch d_c");
}

ReflectivityMap make_map(const RoiGrid& roi, const ScattererList& scatterers) {
    ReflectivityMap map = ReflectivityMap::Zero(roi.n_z, roi.n_x);
    for (const auto& s : scatterers) {
        BCFMC_REQUIRE(s.i_x >= 0 && s.i_x < roi.n_x && s.i_z >= 0 && s.i_z < roi.n_z,
                      ContractError, "scatterer outside the ROI");
        map(s.i_z, s.i_x) += s.a;
    }
    return map;
}

Eigen::VectorXd vectorize(const ReflectivityMap& map) {
    return Eigen::Map<const Eigen::VectorXd>(map.data(), map.size());
}

ReflectivityMap unvectorize(const Eigen::VectorXd& x, const RoiGrid& roi) {
    BCFMC_REQUIRE(x.size() == roi.pixel_count(), ShapeError,
                  "vector length does not match the ROI pixel count");
    return Eigen::Map<const ReflectivityMap>(x.data(), roi.n_z, roi.n_x);
}

namespace {

double two_way(double dx_t, double dx_r, double depth, double c0) {
    return (std::sqrt(dx_t * dx_t + depth * depth) + std::sqrt(dx_r * dx_r + depth * depth)) / c0;
}

}  // namespace

double tof(int delta, int i_s, int i_z, const AcquisitionConfig& acq, const RoiGrid& roi) {
    BCFMC_REQUIRE(i_s >= 0 && i_s < acq.n_c, ContractError, "slice index out of range");
    BCFMC_REQUIRE(i_z >= 0 && i_z < roi.n_z, ContractError, "depth index out of range");
    BCFMC_REQUIRE(delta >= -(roi.n_x - 1) && delta <= acq.n_c - 1 - i_s, ContractError,
                  "offset i_T - i_x out of range: " + std::to_string(delta));
    const double depth = i_z * roi.d_z + roi.d_s;
    return two_way(delta * roi.d_x, (delta + i_s) * roi.d_x, depth, acq.c0);
}

double tof_from_indices(int i_t, int i_r, int i_x, int i_z, const AcquisitionConfig& acq,
                        const RoiGrid& roi) {
    BCFMC_REQUIRE(i_t >= 0 && i_t < acq.n_c && i_r >= 0 && i_r < acq.n_c, ContractError,
                  "element index out of range");
    BCFMC_REQUIRE(i_x >= 0 && i_x < roi.n_x && i_z >= 0 && i_z < roi.n_z, ContractError,
                  "pixel index out of range");
    const double px = i_x * roi.d_x;
    const double pz = i_z * roi.d_z + roi.d_s;
    return two_way(i_t * acq.d_c - px, i_r * acq.d_c - px, pz, acq.c0);
}

double pulse_value(double t, double tau, const AcquisitionConfig& acq) {
    const double dt = t - tau;
    return std::exp(-acq.alpha * dt * dt) * std::cos(2.0 * std::numbers::pi * acq.f_c * dt);
}

double pulse_tail(const AcquisitionConfig& acq) {
    return std::sqrt(std::log(1.0 / acq.envelope_eps) / acq.alpha);
}

double max_tof(const AcquisitionConfig& acq, const RoiGrid& roi) {
    // Both legs peak at the same lateral offset, so transmitter and receiver
    // coincide at the far end of the aperture from the deepest corner pixel.
    const int reach = std::max(acq.n_c - 1, roi.n_x - 1);
    const double depth = (roi.n_z - 1) * roi.d_z + roi.d_s;
    return two_way(reach * roi.d_x, reach * roi.d_x, depth, acq.c0);
}

int required_samples(const AcquisitionConfig& acq, const RoiGrid& roi) {
    // One sample beyond ceil() so the last sample time is >= tau_max + tail.
    const double span = acq.f_s * (max_tof(acq, roi) + pulse_tail(acq));
    return static_cast<int>(std::ceil(span)) + 1;
}

Eigen::VectorXd simulate_ascan(int i_t, int i_r, const ScattererList& scatterers,
                               const AcquisitionConfig& acq, const RoiGrid& roi,
                               std::uint64_t rng_seed) {
    BCFMC_REQUIRE(i_t >= 0 && i_t < acq.n_c && i_r >= 0 && i_r < acq.n_c, ContractError,
                  "element index out of range");
    const int n_t = required_samples(acq, roi);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_t);
    for (const auto& s : scatterers) {
        const double tau = tof_from_indices(i_t, i_r, s.i_x, s.i_z, acq, roi);
        for (int n = 0; n < n_t; ++n) out[n] += s.a * pulse_value(n / acq.f_s, tau, acq);
    }
    if (acq.noise_std > 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(rng_seed),
                          static_cast<std::uint32_t>(rng_seed >> 32),
                          static_cast<std::uint32_t>(i_t), static_cast<std::uint32_t>(i_r)};
        std::mt19937_64 gen(seq);
        std::normal_distribution<double> noise(0.0, acq.noise_std);
        for (int n = 0; n < n_t; ++n) out[n] += noise(gen);
    }
    return out;
}

}  // namespace bcfmc
