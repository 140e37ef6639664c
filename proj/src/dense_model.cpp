#include "bcfmc/dense_model.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "bcfmc/error.hpp"

namespace bcfmc {

Eigen::MatrixXd build_block(int delta, int i_s, const AcquisitionConfig& acq,
                            const RoiGrid& roi) {
    BCFMC_REQUIRE(delta >= -(roi.n_x - 1) && delta <= acq.n_c - 1 - i_s, ContractError,
                  "block offset out of range");
    const int n_t = required_samples(acq, roi);
    Eigen::MatrixXd block(n_t, roi.n_z);
    for (int i_z = 0; i_z < roi.n_z; ++i_z) {
        const double tau = tof(delta, i_s, i_z, acq, roi);
        for (int n = 0; n < n_t; ++n) block(n, i_z) = pulse_value(n / acq.f_s, tau, acq);
    }
    return block;
}

SliceMatrix build_slice_matrix(int i_s, const AcquisitionConfig& acq, const RoiGrid& roi) {
    validate_pair(acq, roi);
    BCFMC_REQUIRE(i_s >= 0 && i_s < acq.n_c, ContractError, "slice index out of range");

    SliceMatrix s;
    s.i_s = i_s;
    s.n_t = required_samples(acq, roi);
    s.n_z = roi.n_z;
    s.block_rows = acq.n_c - i_s;
    s.block_cols = roi.n_x;

    // Only N_c - i_s + N_x - 1 distinct blocks exist; build each once.
    const int lo = -(roi.n_x - 1);
    std::vector<Eigen::MatrixXd> unique;
    unique.reserve(s.block_rows + s.block_cols - 1);
    for (int delta = lo; delta <= s.block_rows - 1; ++delta)
        unique.push_back(build_block(delta, i_s, acq, roi));

    s.b.resize(static_cast<Eigen::Index>(s.block_rows) * s.n_t,
               static_cast<Eigen::Index>(s.block_cols) * s.n_z);
    for (int r = 0; r < s.block_rows; ++r)
        for (int c = 0; c < s.block_cols; ++c)
            s.b.block(r * s.n_t, c * s.n_z, s.n_t, s.n_z) = unique[r - c - lo];
    return s;
}

bool verify_block_toeplitz(const SliceMatrix& slice, double tol) {
    for (int r = 0; r < slice.block_rows; ++r) {
        for (int c = 0; c < slice.block_cols; ++c) {
            // Compare against the first block on the same diagonal.
            const int shift = std::min(r, c);
            const auto ref = slice.block(r - shift, c - shift);
            if ((slice.block(r, c) - ref).cwiseAbs().maxCoeff() > tol) return false;
        }
    }
    return true;
}

std::uint64_t dense_bytes_required(const AcquisitionConfig& acq, const RoiGrid& roi) {
    const std::uint64_t n_t = static_cast<std::uint64_t>(required_samples(acq, roi));
    const std::uint64_t n_c = static_cast<std::uint64_t>(acq.n_c);
    return n_t * n_c * n_c * static_cast<std::uint64_t>(roi.pixel_count()) * sizeof(double);
}

DenseModel build_dense(const AcquisitionConfig& acq, const RoiGrid& roi,
                       std::uint64_t budget_bytes) {
    validate_pair(acq, roi);
    const std::uint64_t need = dense_bytes_required(acq, roi);
    if (need > budget_bytes) {
        throw BudgetError("dense model needs " + std::to_string(need) +
                              " bytes, budget is " + std::to_string(budget_bytes),
                          need);
    }

    DenseModel m;
    m.acq = acq;
    m.roi = roi;
    m.n_t = required_samples(acq, roi);
    const Eigen::Index rows = static_cast<Eigen::Index>(m.n_t) * acq.n_c * acq.n_c;
    m.a = Eigen::MatrixXd::Zero(rows, roi.pixel_count());

    for (int i_s = 0; i_s < acq.n_c; ++i_s) {
        const SliceMatrix s = build_slice_matrix(i_s, acq, roi);
        for (int i_t = 0; i_t + i_s < acq.n_c; ++i_t) {
            const auto rows_src = s.b.middleRows(static_cast<Eigen::Index>(i_t) * m.n_t, m.n_t);
            const int i_r = i_t + i_s;
            m.a.middleRows(m.row_index(0, i_r, i_t), m.n_t) = rows_src;
            if (i_s > 0) m.a.middleRows(m.row_index(0, i_t, i_r), m.n_t) = rows_src;
        }
    }
    return m;
}

Eigen::VectorXd dense_forward(const DenseModel& model, const Eigen::VectorXd& x) {
    BCFMC_REQUIRE(x.size() == model.a.cols(), ShapeError,
                  "map size does not match the dense model");
    return model.a * x;
}

Eigen::VectorXd dense_forward(const DenseModel& model, const ReflectivityMap& x) {
    BCFMC_REQUIRE(x.rows() == model.roi.n_z && x.cols() == model.roi.n_x, ShapeError,
                  "map shape does not match the dense model");
    return dense_forward(model, vectorize(x));
}

}  // namespace bcfmc
