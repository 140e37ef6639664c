#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "bcfmc/scene.hpp"

namespace bcfmc {

inline constexpr std::uint64_t kDefaultDenseBudget = 2ull << 30;  // 2 GiB

// N_t x N_z block of the slice matrix for offset delta = i_T - i_x. Entry
// (n, i_z) is the unit pulse sampled at n / f_s, delayed by tof(delta, i_s, i_z).
Eigen::MatrixXd build_block(int delta, int i_s, const AcquisitionConfig& acq, const RoiGrid& roi);

// B_{i_s}: (N_c - i_s) x N_x grid of N_t x N_z blocks mapping the vectorized
// map to the vectorized slice (time fastest, then transmitter).
struct SliceMatrix {
    int i_s = 0;
    int n_t = 0;
    int n_z = 0;
    int block_rows = 0;  // N_c - i_s
    int block_cols = 0;  // N_x
    Eigen::MatrixXd b;

    auto block(int r, int c) const { return b.block(r * n_t, c * n_z, n_t, n_z); }
};

SliceMatrix build_slice_matrix(int i_s, const AcquisitionConfig& acq, const RoiGrid& roi);

// True iff all blocks on each block diagonal agree elementwise within tol.
bool verify_block_toeplitz(const SliceMatrix& slice, double tol);

// Full FMC model matrix. Rows follow the column-major vectorization of the
// N_t x N_R x N_T volume; columns follow the map vectorization.
struct DenseModel {
    AcquisitionConfig acq;
    RoiGrid roi;
    int n_t = 0;
    Eigen::MatrixXd a;

    Eigen::Index row_index(int n, int i_r, int i_t) const {
        return n + static_cast<Eigen::Index>(n_t) * (i_r + static_cast<Eigen::Index>(acq.n_c) * i_t);
    }
};

std::uint64_t dense_bytes_required(const AcquisitionConfig& acq, const RoiGrid& roi);

// Throws BudgetError when the double-precision matrix would exceed budget_bytes.
DenseModel build_dense(const AcquisitionConfig& acq, const RoiGrid& roi,
                       std::uint64_t budget_bytes = kDefaultDenseBudget);

Eigen::VectorXd dense_forward(const DenseModel& model, const ReflectivityMap& x);
Eigen::VectorXd dense_forward(const DenseModel& model, const Eigen::VectorXd& x);

}  // namespace bcfmc
