#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace bcfmc {

// Array geometry, pulse and sampling parameters. Every element both transmits
// and receives, so N_T = N_R = n_c.
struct AcquisitionConfig {
    int n_c = 1;
    double d_c = 0.5e-3;        // pitch [m]
    double f_c = 5.0e6;         // center frequency [Hz]
    double alpha = 2.5e12;      // Gabor bandwidth factor [1/s^2]
    double f_s = 20.0e6;        // sampling frequency [Hz]
    double c0 = 6300.0;         // wave speed [m/s]
    double noise_std = 0.0;     // AWGN std, signal units
    double envelope_eps = 1e-3; // pulse truncation threshold

    int n_transmitters() const { return n_c; }
    int n_receivers() const { return n_c; }
    void validate() const;
    bool operator==(const AcquisitionConfig&) const = default;
};

// Discretized region of interest below the array. The pixel width must equal
// the array pitch; that is checked when a model is built from the pair.
struct RoiGrid {
    int n_x = 1;
    int n_z = 1;
    double d_x = 0.5e-3;
    double d_z = 0.5e-3;
    double d_s = 0.5e-3;  // standoff between array and first pixel row [m]

    double extent_x() const { return n_x * d_x; }
    double extent_z() const { return n_z * d_z; }
    int pixel_count() const { return n_x * n_z; }
    void validate() const;
    bool operator==(const RoiGrid&) const = default;
};

// Grid with n_x = n_z = n and d_x = d_z = d_c, standoff equal to the ROI depth.
RoiGrid square_roi(const AcquisitionConfig& acq, int n);

// Throws ContractError unless both halves are valid and d_x == d_c.
void validate_pair(const AcquisitionConfig& acq, const RoiGrid& roi);

struct Scatterer {
    int i_x = 0;
    int i_z = 0;
    double a = 0.0;
    bool operator==(const Scatterer&) const = default;
};
using ScattererList = std::vector<Scatterer>;

// N_z x N_x reflectivity image. Eigen's default column-major storage makes the
// flat view the column-major vectorization: index i_x * N_z + i_z.
using ReflectivityMap = Eigen::MatrixXd;

ReflectivityMap make_map(const RoiGrid& roi, const ScattererList& scatterers);
Eigen::VectorXd vectorize(const ReflectivityMap& map);
ReflectivityMap unvectorize(const Eigen::VectorXd& x, const RoiGrid& roi);

// Round-trip time of flight for transmitter/pixel offset delta = i_T - i_x in
// slice i_s (receiver = i_T + i_s) at depth row i_z.
double tof(int delta, int i_s, int i_z, const AcquisitionConfig& acq, const RoiGrid& roi);

// Time of flight from explicit element and pixel coordinates.
double tof_from_indices(int i_t, int i_r, int i_x, int i_z, const AcquisitionConfig& acq,
                        const RoiGrid& roi);

// Unit-amplitude Gabor pulse centered at tau.
double pulse_value(double t, double tau, const AcquisitionConfig& acq);

// Half-width beyond which the pulse envelope drops below envelope_eps.
double pulse_tail(const AcquisitionConfig& acq);

// Longest time of flight over every transmitter, receiver and pixel.
double max_tof(const AcquisitionConfig& acq, const RoiGrid& roi);

int required_samples(const AcquisitionConfig& acq, const RoiGrid& roi);

// One A-scan for the (i_t, i_r) pair. Noise is drawn from a generator seeded
// by (rng_seed, i_t, i_r) only, so the result does not depend on call order.
Eigen::VectorXd simulate_ascan(int i_t, int i_r, const ScattererList& scatterers,
                               const AcquisitionConfig& acq, const RoiGrid& roi,
                               std::uint64_t rng_seed);

}  // namespace bcfmc
