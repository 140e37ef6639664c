#include "bcfmc/conv_model.hpp"

#include <limits>

#include "bcfmc/dense_model.hpp"

namespace bcfmc {

Eigen::VectorXd slice_weights(int n_c) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n_c, 2.0);
    if (n_c > 0) w[0] = 1.0;
    return w;
}

KernelBank build_kernel_bank(const AcquisitionConfig& acq, const RoiGrid& roi) {
    validate_pair(acq, roi);
    KernelBank bank;
    bank.acq = acq;
    bank.roi = roi;
    bank.geom = ConvGeometry{acq.n_c, roi.n_x, roi.n_z, required_samples(acq, roi)};
    const ConvGeometry& g = bank.geom;
    bank.kernels.reserve(g.n_c);
    for (int i_s = 0; i_s < g.n_c; ++i_s) {
        RowMatrix<double> k(g.n_t, g.kernel_length(i_s));
        // Flipped layout: segment s holds the block with the largest offset first.
        for (int s = 0; s < g.segments(i_s); ++s) {
            const int delta = g.n_c - 1 - i_s - s;
            k.middleCols(static_cast<Eigen::Index>(s) * g.n_z, g.n_z) = build_block(delta, i_s, acq, roi);
        }
        bank.kernels.push_back(std::move(k));
    }
    return bank;
}

RowMatrix<double> elongated_matrix(const KernelBank& bank, int i_s) {
    BCFMC_REQUIRE(i_s >= 0 && i_s < bank.n_c(), ContractError, "slice index out of range");
    return bank.kernels[i_s].rowwise().reverse();
}

double fold_constant(const FmcVolume& v) {
    BCFMC_REQUIRE(v.n_r == v.n_tx, ShapeError, "volume must have N_R == N_T");
    double c = 0.0;
    for (int i_t = 0; i_t < v.n_tx; ++i_t)
        for (int i_r = i_t + 1; i_r < v.n_r; ++i_r)
            c += 0.5 * (v.ascan(i_r, i_t) - v.ascan(i_t, i_r)).squaredNorm();
    return c;
}

double weighted_dot(const SliceSet& a, const SliceSet& b, const Eigen::Ref<const Eigen::VectorXd>& w) {
    BCFMC_REQUIRE(a.n_c() == b.n_c() && w.size() == a.n_c(), ShapeError,
                  "slice sets do not match");
    double acc = 0.0;
    for (int i_s = 0; i_s < a.n_c(); ++i_s) {
        BCFMC_REQUIRE(a.slices[i_s].rows() == b.slices[i_s].rows() &&
                          a.slices[i_s].cols() == b.slices[i_s].cols(),
                      ShapeError, "slice shapes do not match");
        acc += w[i_s] * a.slices[i_s].cwiseProduct(b.slices[i_s]).sum();
    }
    return acc;
}

SliceSet operator-(const SliceSet& a, const SliceSet& b) {
    BCFMC_REQUIRE(a.n_c() == b.n_c(), ShapeError, "slice sets do not match");
    SliceSet out;
    out.slices.reserve(a.n_c());
    for (int i_s = 0; i_s < a.n_c(); ++i_s) {
        BCFMC_REQUIRE(a.slices[i_s].rows() == b.slices[i_s].rows() &&
                          a.slices[i_s].cols() == b.slices[i_s].cols(),
                      ShapeError, "slice shapes do not match");
        out.slices.push_back(a.slices[i_s] - b.slices[i_s]);
    }
    return out;
}

namespace {

using Wide = unsigned __int128;

std::uint64_t narrow(Wide v) {
    BCFMC_REQUIRE(v <= std::numeric_limits<std::uint64_t>::max(), ContractError,
                  "storage size overflows 64 bits");
    return static_cast<std::uint64_t>(v);
}

}  // namespace

std::uint64_t conv_coefficient_count(int n_c, int n_x, int n_z, int n_t) {
    // sum_{i_s} (N_c - i_s + N_x - 1) = N_c (N_x - 1) + N_c (N_c + 1) / 2
    const Wide c = static_cast<Wide>(n_c);
    const Wide segs = c * static_cast<Wide>(n_x - 1) + c * (c + 1) / 2;
    return narrow(segs * static_cast<Wide>(n_z) * static_cast<Wide>(n_t));
}

std::uint64_t dense_coefficient_count(int n_c, int n_x, int n_z, int n_t) {
    const Wide c = static_cast<Wide>(n_c);
    return narrow(static_cast<Wide>(n_t) * c * c * static_cast<Wide>(n_z) * static_cast<Wide>(n_x));
}

std::uint64_t storage_bytes(ModelKind kind, const AcquisitionConfig& acq, const RoiGrid& roi,
                            unsigned bytes_per_param) {
    const int n_t = required_samples(acq, roi);
    const std::uint64_t count = kind == ModelKind::dense
                                    ? dense_coefficient_count(acq.n_c, roi.n_x, roi.n_z, n_t)
                                    : conv_coefficient_count(acq.n_c, roi.n_x, roi.n_z, n_t);
    return narrow(static_cast<Wide>(count) * bytes_per_param);
}

}  // namespace bcfmc
